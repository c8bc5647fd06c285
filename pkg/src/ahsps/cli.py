"""Command-line frontend.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 the
solve had to clamp a probability (degenerate result).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, detectors_from, load_config, source_from
from .estimator import CountTotals, EstimationError, accumulate_counts, analyze
from .histogram import HistogramError, InsufficientDataError, ascii_preview, build_histogram, central_g2, fit_c, to_tsv
from .manifest import RunManifest, manifest_path
from .records import RawFormatError, read_raw, write_raw
from .simulator import SimulationError, simulate_run
from .sweep import SweepError, run_sweep

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DEGENERATE = 0, 1, 2, 3

log = logging.getLogger("ahsps")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def _counts(text: str) -> CountTotals:
    try:
        vals = [int(float(v)) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad --counts {text!r}") from None
    if len(vals) == 3:
        n_t, n_a, n_ab = vals
        n_b = None
    elif len(vals) == 4:
        n_t, n_a, n_b, n_ab = vals
    else:
        raise argparse.ArgumentTypeError("--counts takes n_t,n_a[,n_b],n_ab")
    try:
        return CountTotals(n_t, n_a, n_b, n_ab)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ahsps", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="simulate an acquisition and write a raw record file")
    s.add_argument("--config", required=True)
    s.add_argument("--n", type=int, required=True, help="accepted triggers to record")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--no-timestamps", action="store_true")
    s.add_argument("--herald-darks", action="store_true", help="include heralding-detector dark counts")
    s.add_argument("--format", choices=("table", "json"), default="table")

    a = sub.add_parser("analyze", help="reconstruct P(1), P(2) and g2 from a raw file or counts")
    a.add_argument("raw", nargs="?")
    a.add_argument("--config", required=True)
    a.add_argument("--counts", type=_counts, help="n_t,n_a[,n_b],n_ab instead of a raw file")
    a.add_argument("--format", choices=("table", "json"), default="table")
    a.add_argument("--out")

    h = sub.add_parser("histogram", help="start/stop trigger-separation histogram")
    h.add_argument("raw")
    h.add_argument("--n-max", type=int, default=100)
    h.add_argument("--format", choices=("tsv", "table", "json"), default="tsv")
    h.add_argument("--out")

    w = sub.add_parser("sweep", help="simulate and analyse a pump or attenuation sweep")
    w.add_argument("--config", required=True)
    grp = w.add_mutually_exclusive_group(required=True)
    grp.add_argument("--pump", type=_float_list, help="pump powers in W, comma separated")
    grp.add_argument("--attenuation", type=_float_list, help="attenuation factors, comma separated")
    w.add_argument("--n", type=int, required=True, help="accepted triggers per point")
    w.add_argument("--seed", type=int, required=True)
    w.add_argument("--format", choices=("table", "json"), default="table")
    w.add_argument("--out")

    r = sub.add_parser("report", help="show a run manifest and verify its hashes")
    r.add_argument("manifest")
    r.add_argument("--format", choices=("table", "json"), default="table")
    return p


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
    else:
        print(text)


def _manifest(argv: list[str], config: dict | None = None, seed: int | None = None) -> RunManifest:
    return RunManifest(command=["ahsps", *argv], config=dict(config or {}), seed=seed,
                       started=RunManifest.now())


def cmd_simulate(args, argv) -> int:
    values = load_config(args.config)
    src = source_from(values, args.config)
    det_a, det_b = detectors_from(values, args.config)
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    man = _manifest(argv, values, args.seed)
    man.add_input(args.config)
    records, summary = simulate_run(src, det_a, det_b, args.n, args.seed,
                                    herald_darks=args.herald_darks, timestamps=not args.no_timestamps)
    write_raw(records, args.out)
    man.add_output(args.out)
    man.write(manifest_path(args.out))
    if args.format == "json":
        print(json.dumps(summary.as_dict(), indent=2, sort_keys=True))
    else:
        print(f"{'N_t':>10} {'offered':>10} {'T [s]':>10} {'R_H [Hz]':>10}")
        print(f"{summary.n_triggers_accepted:>10d} {summary.n_triggers_offered:>10d} "
              f"{summary.wall_duration:>10.4g} {summary.herald_rate:>10.4g}")
    return EXIT_OK


def cmd_analyze(args, argv) -> int:
    values = load_config(args.config)
    det_a, det_b = detectors_from(values, args.config)
    man = _manifest(argv, values)
    man.add_input(args.config)
    if args.counts is not None:
        if args.raw:
            raise UsageError("give either a raw file or --counts, not both")
        totals = args.counts
        source = {"counts": totals.as_dict()}
    elif args.raw:
        totals = accumulate_counts(read_raw(args.raw))
        man.add_input(args.raw)
        source = {"input": args.raw, "input_sha256": man.inputs[args.raw]}
    else:
        raise UsageError("analyze needs a raw file or --counts")
    source["config"] = args.config
    source["config_sha256"] = man.inputs[args.config]
    report = analyze(totals, det_a, det_b, source)
    for note in report.warnings:
        log.warning(note)
    text = report.to_json() if args.format == "json" else report.to_table()
    _emit(text, args.out)
    if args.out:
        man.add_output(args.out)
        man.write(manifest_path(args.out))
    return EXIT_DEGENERATE if report.degenerate else EXIT_OK


def cmd_histogram(args, argv) -> int:
    if args.n_max < 1:
        raise UsageError("--n-max must be >= 1")
    records = read_raw(args.raw)
    totals = accumulate_counts(records)
    if totals.n_t == 0:
        raise EstimationError("n_t = 0: no accepted triggers")
    p_a, p_b = totals.n_a / totals.n_t, totals.n_b / totals.n_t
    hist = build_histogram(records, args.n_max)
    if not hist.counts.any():
        raise InsufficientDataError("no start/stop events: the histogram is empty")
    try:
        fit = fit_c(hist, p_a, p_b)
    except InsufficientDataError as exc:
        # too few bins to fit C; the raw histogram is still emitted
        log.warning("%s; histogram written without a fit", exc)
        fit = None
    g2c, g2c_err = central_g2(hist, p_a, p_b, fit) if fit else (None, None)
    summary = {
        "n_max": hist.n_max,
        "bins": int(hist.counts.size),
        "p_a": p_a,
        "p_b": p_b,
        "C": fit and fit.c,
        "C_err": fit and fit.c_err,
        "chi2_dof": fit and fit.chi2_dof,
        "fit_flagged": bool(fit and fit.flagged),
        "g2_central": g2c,
        "g2_central_err": g2c_err,
        "starts_consumed": hist.starts_consumed,
        "invalid_starts": hist.invalid_starts,
        "cancelled_searches": hist.cancelled_searches,
    }
    fit_line = (f"C = {fit.c:.6g} ± {fit.c_err:.2g}   chi2/dof = {fit.chi2_dof:.3f}   "
                f"central-bin g2 (raw) = {g2c:.4g} ± {g2c_err:.2g}") if fit else "no fit"
    if args.format == "tsv":
        text = to_tsv(hist, p_a, p_b, fit)
        print(fit_line, file=sys.stderr)
    elif args.format == "json":
        summary["histogram"] = hist.as_dict()
        text = json.dumps(summary, indent=2, sort_keys=True)
    else:
        text = "\n".join([ascii_preview(hist), fit_line, *(f"# {n}" for n in (fit.notes if fit else ()))])
    _emit(text.rstrip("\n"), args.out)
    if args.out:
        man = _manifest(argv)
        man.add_input(args.raw)
        man.add_output(args.out)
        man.write(manifest_path(args.out))
    return EXIT_OK


def cmd_sweep(args, argv) -> int:
    values = load_config(args.config)
    src = source_from(values, args.config)
    det_a, det_b = detectors_from(values, args.config)
    field_name, points = ("pump_power", args.pump) if args.pump is not None else ("attenuation", args.attenuation)
    if len(points) < 3:
        raise UsageError(f"a sweep needs at least 3 points, got {len(points)}")
    result = run_sweep(src, det_a, det_b, field_name, points, args.n, args.seed)
    text = json.dumps(result.as_dict(), indent=2, sort_keys=True) if args.format == "json" else result.to_table()
    _emit(text, args.out)
    if args.out:
        man = _manifest(argv, values, args.seed)
        man.add_input(args.config)
        man.add_output(args.out)
        man.write(manifest_path(args.out))
    return EXIT_OK


def cmd_report(args, argv) -> int:
    try:
        man = RunManifest.read(args.manifest)
    except (OSError, ValueError, TypeError) as exc:
        raise RawFormatError(f"cannot read manifest {args.manifest}: {exc}") from None
    problems = man.verify()
    if args.format == "json":
        print(json.dumps({"command": man.command, "seed": man.seed, "inputs": man.inputs,
                          "outputs": man.outputs, "tool_version": man.tool_version,
                          "started": man.started, "finished": man.finished,
                          "problems": problems}, indent=2, sort_keys=True))
    else:
        print("command:  " + " ".join(man.command))
        print(f"version:  {man.tool_version}   seed: {man.seed}")
        print(f"run:      {man.started} .. {man.finished}")
        for kind, files in (("input", man.inputs), ("output", man.outputs)):
            for name, digest in files.items():
                print(f"{kind:<8}  {digest[:16]}  {name}")
        for prob in problems:
            print(f"# {prob}")
        print("hashes verify" if not problems else f"{len(problems)} problem(s)")
    return EXIT_DATA if problems else EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "histogram": cmd_histogram,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits for --help, --version and usage errors
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args, argv)
    except UsageError as exc:
        print(f"ahsps {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, RawFormatError, EstimationError, HistogramError,
            SimulationError, SweepError) as exc:
        print(f"ahsps {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"ahsps {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
