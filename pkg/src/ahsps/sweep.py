"""Parameter sweeps and the P(2)-versus-heralding-rate linearity check."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .estimator import AnalysisReport, analyze
from .model import DetectorConfig, SourceConfig
from .simulator import SimulationSummary, simulate_counts

SWEEP_FIELDS = ("pump_power", "attenuation")
MIN_POINTS = 3
R2_MIN = 0.99


class SweepError(ValueError):
    pass


@dataclass
class SweepPoint:
    value: float
    seed: int
    summary: SimulationSummary
    report: AnalysisReport

    @property
    def herald_rate(self) -> float:
        return self.summary.herald_rate


@dataclass
class LinearFit:
    slope: float
    slope_err: float
    intercept: float
    intercept_err: float
    r2: float
    chi2_dof: float
    degenerate: bool = False


@dataclass
class SweepResult:
    field: str
    points: list[SweepPoint]
    fit: LinearFit
    expected_slope: float
    p1_mean: float
    p1_spread: float
    flags: list[str] = field(default_factory=list)

    @property
    def slope_pull(self) -> float:
        """``(slope - expected) / sigma``."""
        if self.fit.slope_err == 0:
            return math.nan
        return (self.fit.slope - self.expected_slope) / self.fit.slope_err

    def as_dict(self) -> dict:
        return {
            "field": self.field,
            "points": [
                {
                    "value": p.value,
                    "seed": p.seed,
                    "herald_rate_hz": p.herald_rate,
                    "n_t": p.report.totals.n_t,
                    "P1": p.report.stats.p1,
                    "P1_err": p.report.stats_err["p1"],
                    "P2": p.report.stats.p2,
                    "P2_err": p.report.stats_err["p2"],
                    "g2_net": p.report.g2_net,
                }
                for p in self.points
            ],
            "slope_per_hz": self.fit.slope,
            "slope_err": self.fit.slope_err,
            "expected_slope_per_hz": self.expected_slope,
            "slope_pull": self.slope_pull,
            "intercept": self.fit.intercept,
            "intercept_err": self.fit.intercept_err,
            "r2": self.fit.r2,
            "chi2_dof": self.fit.chi2_dof,
            "p1_mean": self.p1_mean,
            "p1_spread": self.p1_spread,
            "flags": list(self.flags),
        }

    def to_table(self) -> str:
        lines = [f"{self.field:>12} {'R_H [Hz]':>12} {'N_t':>10} {'P(1)':>8} {'P(2)':>20} {'g2 net':>10}"]
        for p in self.points:
            r = p.report
            lines.append(f"{p.value:>12.4g} {p.herald_rate:>12.4g} {r.totals.n_t:>10d} {r.stats.p1:>8.4f} "
                         f"{r.stats.p2:>10.3e} ± {r.stats_err['p2']:<7.1e} {r.g2_net:>10.3e}")
        f = self.fit
        lines.append(f"P(2) = ({f.slope:.4e} ± {f.slope_err:.1e}) /Hz * R_H + ({f.intercept:.2e} ± {f.intercept_err:.1e})")
        lines.append(f"expected slope {self.expected_slope:.4e} /Hz (pull {self.slope_pull:+.2f}), "
                     f"R^2 = {f.r2:.4f}, chi2/dof = {f.chi2_dof:.2f}")
        lines.append(f"P(1) mean {self.p1_mean:.4f}, spread {100 * self.p1_spread:.2f}%")
        lines.extend(f"# {flag}" for flag in self.flags)
        return "\n".join(lines)


def linear_fit(x, y, sigma) -> LinearFit:
    """Weighted straight-line fit ``y = slope x + intercept``.

    Fewer than two distinct ``x`` values give a zero slope and
    ``degenerate=True``; fewer than three are also marked degenerate.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    sigma = np.asarray(sigma, float)
    distinct = np.unique(x).size
    if distinct < 2:
        w = 1.0 / sigma ** 2
        mean = float(np.sum(w * y) / np.sum(w))
        return LinearFit(0.0, 0.0, mean, float(1 / math.sqrt(np.sum(w))), 0.0, math.nan, True)
    w = 1.0 / sigma ** 2
    s, sx, sy = w.sum(), (w * x).sum(), (w * y).sum()
    sxx, sxy = (w * x * x).sum(), (w * x * y).sum()
    det = s * sxx - sx ** 2
    slope = (s * sxy - sx * sy) / det
    intercept = (sxx * sy - sx * sxy) / det
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 0.0
    dof = x.size - 2
    chi2_dof = float(np.sum(w * resid ** 2)) / dof if dof > 0 else math.nan
    return LinearFit(float(slope), math.sqrt(s / det), float(intercept), math.sqrt(sxx / det),
                     r2, chi2_dof, distinct < MIN_POINTS)


def point_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def expected_slope(src: SourceConfig) -> float:
    """``dP(2)/dR_H = 0.5 P(1)^2 dt / (q_H eta_H attenuation)``."""
    return (0.5 * src.coupling_p1 ** 2 * src.gate_width
            / (src.herald_coupling * src.herald_detector_eff * src.attenuation))


def run_sweep(base: SourceConfig, det_a: DetectorConfig, det_b: DetectorConfig,
              field_name: str, values, n_per_point: int, seed: int, **sim_kwargs) -> SweepResult:
    """Simulate and analyse one run per value of ``field_name``."""
    if field_name not in SWEEP_FIELDS:
        raise SweepError(f"can only sweep {SWEEP_FIELDS}, not {field_name!r}")
    values = [float(v) for v in values]
    if len(values) < MIN_POINTS:
        raise SweepError(f"a sweep needs at least {MIN_POINTS} points, got {len(values)}")
    points = []
    for i, v in enumerate(values):
        src = replace(base, **{field_name: v})
        s = point_seed(seed, i)
        summary = simulate_counts(src, det_a, det_b, n_per_point, s, **sim_kwargs)
        report = analyze(summary.totals, det_a, det_b, {field_name: v, "seed": s})
        points.append(SweepPoint(v, s, summary, report))

    x = np.array([p.herald_rate for p in points])
    # repeated settings share one abscissa so duplicates cannot fake a slope
    settings = np.array(values)
    for v in np.unique(settings):
        x[settings == v] = x[settings == v].mean()
    y = [p.report.stats.p2 for p in points]
    sig = [max(p.report.stats_err["p2"], 1e-30) for p in points]
    fit = linear_fit(x, y, sig)
    p1 = np.array([p.report.stats.p1 for p in points])
    p1_mean = float(p1.mean())
    spread = float(np.max(np.abs(p1 - p1_mean)) / p1_mean) if p1_mean > 0 else math.nan

    flags = []
    if fit.degenerate:
        flags.append("degenerate: fewer than 3 distinct settings")
    elif fit.r2 < R2_MIN:
        flags.append(f"non-linear: R^2 = {fit.r2:.4f} < {R2_MIN}")
    if fit.chi2_dof > 3:
        flags.append(f"non-linear: chi2/dof = {fit.chi2_dof:.2f}")
    slope0 = expected_slope(base) if field_name == "pump_power" else 0.0
    return SweepResult(field_name, points, fit, slope0, p1_mean, spread, flags)
