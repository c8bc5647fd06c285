"""From detection counts to photon statistics.

The forward model gives the click probability of each bench detector and
the coincidence probability for photon numbers i <= 2, including dark
counts. It is affine in ``(P(1), P(2))`` once ``P(0) = 1 - P(1) - P(2)``
is substituted, so the measured ``(p_A, p_AB)`` pair (or ``(p_B, p_AB)``)
inverts by a 2x2 linear solve. The reported estimate is the plain mean
of the A-based and B-based solutions.

``P(2)`` is the probability of two *or more* photons; the bench cannot
tell them apart and the inversion neglects i > 2.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .model import DetectorConfig, PhotonStatistics
from .records import Records, TriggerRecord

UPPER_LIMIT_COUNTS = 2.3  # Poisson 90% CL upper limit for zero observed events
NEGLIGIBLE_P1_COUNTS = 1e5


class EstimationError(ValueError):
    pass


class SingularSystemError(EstimationError):
    pass


class ClampWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CountTotals:
    """Counts over accepted triggers; ``n_b`` is ``None`` when not recorded."""

    n_t: int = 0
    n_a: int = 0
    n_b: int | None = 0
    n_ab: int = 0

    def __post_init__(self):
        lo = self.n_a if self.n_b is None else min(self.n_a, self.n_b)
        if min(self.n_t, self.n_a, self.n_ab) < 0 or (self.n_b is not None and self.n_b < 0):
            raise ValueError("counts must be non-negative")
        if not (self.n_ab <= lo <= self.n_t):
            raise ValueError(f"inconsistent counts: need n_ab <= min(n_a, n_b) <= n_t, got {self}")

    def __add__(self, other: "CountTotals") -> "CountTotals":
        if not isinstance(other, CountTotals):
            return NotImplemented
        n_b = None if self.n_b is None or other.n_b is None else self.n_b + other.n_b
        return CountTotals(self.n_t + other.n_t, self.n_a + other.n_a, n_b, self.n_ab + other.n_ab)

    def as_dict(self) -> dict:
        return {"n_t": self.n_t, "n_a": self.n_a, "n_b": self.n_b, "n_ab": self.n_ab}


@dataclass(frozen=True)
class MeasuredRates:
    """Click probabilities per accepted trigger (``p_b`` may be unknown)."""

    p_a: float
    p_b: float | None
    p_ab: float

    def arm(self, name: str) -> float:
        value = self.p_a if name == "a" else self.p_b
        if value is None:
            raise EstimationError(f"p_{name} is not available")
        return value


def accumulate_counts(records: Records | Iterable[TriggerRecord | tuple]) -> CountTotals:
    """Single pass over a record stream."""
    if isinstance(records, Records):
        a = records.det_a.astype(bool)
        b = records.det_b.astype(bool)
        return CountTotals(len(records), int(a.sum()), int(b.sum()), int(np.count_nonzero(a & b)))
    n_t = n_a = n_b = n_ab = 0
    for r in records:
        a, b = (r.det_a, r.det_b) if isinstance(r, TriggerRecord) else (r[0], r[1])
        n_t += 1
        n_a += a
        n_b += b
        n_ab += a & b
    return CountTotals(n_t, n_a, n_b, n_ab)


def measured_rates(c: CountTotals) -> MeasuredRates:
    if c.n_t <= 0:
        raise EstimationError("n_t = 0: no accepted triggers")
    return MeasuredRates(c.n_a / c.n_t, None if c.n_b is None else c.n_b / c.n_t, c.n_ab / c.n_t)


def _phot(eta: float, i: int) -> float:
    """Probability that ``i`` photons on a 50/50 splitter give a photon click."""
    return 1.0 - (1.0 - eta / 2.0) ** i


def _coinc(eta_a: float, eta_b: float, i: int) -> float:
    """Probability that ``i`` photons click both arms (no dark counts)."""
    # closed forms avoid cancellation in the general expression
    if i < 2:
        return 0.0
    if i == 2:
        return eta_a * eta_b / 2.0
    return (1.0 - (1.0 - eta_a / 2.0) ** i - (1.0 - eta_b / 2.0) ** i
            + (1.0 - (eta_a + eta_b) / 2.0) ** i)


def _single_row(det: DetectorConfig) -> tuple[list[float], float]:
    """Coefficients on (P1, P2) and the constant for one detector's click probability."""
    d, eta = det.dark_count_prob, det.efficiency
    return [(1 - 2 * d) * _phot(eta, 1), (1 - 2 * d) * _phot(eta, 2)], d


def _joint_row(det_a: DetectorConfig, det_b: DetectorConfig) -> tuple[list[float], float]:
    da, db = det_a.dark_count_prob, det_b.dark_count_prob
    ea, eb = det_a.efficiency, det_b.efficiency
    coef = []
    for i in (1, 2):
        coef.append(_coinc(ea, eb, i) * (1 - 2 * da) * (1 - 2 * db)
                    + _phot(ea, i) * (1 - 2 * da) * db
                    + _phot(eb, i) * (1 - 2 * db) * da)
    return coef, da * db


def forward_probabilities(stats: PhotonStatistics, det_a: DetectorConfig,
                          det_b: DetectorConfig) -> MeasuredRates:
    """Expected ``p_A``, ``p_B``, ``p_AB`` for the given statistics (i <= 2)."""
    x = (stats.p1, stats.p2)
    out = []
    for coef, const in (_single_row(det_a), _single_row(det_b), _joint_row(det_a, det_b)):
        # P(0) terms contribute only the constant (dark counts)
        out.append(const + coef[0] * x[0] + coef[1] * x[1])
    return MeasuredRates(*out)


def affine_system(det_a: DetectorConfig, det_b: DetectorConfig, arm: str = "a") -> tuple[np.ndarray, np.ndarray]:
    """``(M, c)`` with ``[p_arm, p_AB] = M @ [P1, P2] + c``."""
    det = det_a if arm == "a" else det_b
    s_coef, s_const = _single_row(det)
    j_coef, j_const = _joint_row(det_a, det_b)
    return np.array([s_coef, j_coef]), np.array([s_const, j_const])


def solve_arm(m: MeasuredRates, det_a: DetectorConfig, det_b: DetectorConfig, arm: str = "a") -> tuple[float, float]:
    """Unclamped ``(P1, P2)`` from one arm's single rate and the coincidence rate."""
    mat, const = affine_system(det_a, det_b, arm)
    if np.linalg.cond(mat) > 1e12:
        raise SingularSystemError(f"degenerate system for arm {arm} (efficiencies too small)")
    rhs = np.array([m.arm(arm), m.p_ab]) - const
    p1, p2 = np.linalg.solve(mat, rhs)
    return float(p1), float(p2)


@dataclass(frozen=True)
class Solution:
    """Result of the inversion.

    ``stats`` is the headline (clamped) distribution; ``raw`` holds the
    averaged unclamped ``(P1, P2)`` and ``per_arm`` the individual solves.
    """

    stats: PhotonStatistics
    raw: tuple[float, float]
    per_arm: dict
    clamped: bool = False
    diagnostics: tuple[str, ...] = ()


ROUNDOFF = 1e-12


def _clamp(p1: float, p2: float) -> tuple[float, float, list[str]]:
    notes = []
    c1 = min(max(p1, 0.0), 1.0)
    c2 = min(max(p2, 0.0), 1.0 - c1)
    # excursions at rounding level are snapped without a flag
    if abs(c1 - p1) > ROUNDOFF:
        notes.append(f"P(1)={p1:.6g} outside [0, 1], clamped to {c1:.6g}")
    if abs(c2 - p2) > ROUNDOFF:
        notes.append(f"P(2)={p2:.6g} outside [0, 1 - P(1)], clamped to {c2:.6g}")
    return c1, c2, notes


def solve(m: MeasuredRates, det_a: DetectorConfig, det_b: DetectorConfig,
          arms: tuple[str, ...] | None = None) -> Solution:
    """Invert measured rates; averages the A and B solutions when ``p_b`` is known."""
    if arms is None:
        arms = ("a",) if m.p_b is None else ("a", "b")
    per_arm = {arm: solve_arm(m, det_a, det_b, arm) for arm in arms}
    p1 = sum(v[0] for v in per_arm.values()) / len(per_arm)
    p2 = sum(v[1] for v in per_arm.values()) / len(per_arm)
    c1, c2, notes = _clamp(p1, p2)
    if notes:
        warnings.warn("; ".join(notes), ClampWarning, stacklevel=2)
    return Solution(PhotonStatistics.from_p1_p2(c1, c2), (p1, p2), per_arm, bool(notes), tuple(notes))


def solve_statistics(m: MeasuredRates, det_a: DetectorConfig, det_b: DetectorConfig) -> PhotonStatistics:
    return solve(m, det_a, det_b).stats


def net_rates(stats: PhotonStatistics, det_a: DetectorConfig, det_b: DetectorConfig) -> MeasuredRates:
    """Rates the source would give on noiseless detectors."""
    return forward_probabilities(stats, det_a.noiseless(), det_b.noiseless())


def g2(m: MeasuredRates) -> float:
    """``p_AB / (p_A p_B)``."""
    p_b = m.p_a if m.p_b is None else m.p_b
    denom = m.p_a * p_b
    if denom <= 0:
        raise EstimationError("g2 undefined: p_A * p_B = 0")
    return m.p_ab / denom


def g2_from_stats(stats: PhotonStatistics) -> float:
    """``2 P(2) / P(1)^2``."""
    if stats.p1 <= 0:
        raise EstimationError("g2 undefined: P(1) = 0")
    return 2.0 * stats.p2 / stats.p1 ** 2


def _headline(counts: np.ndarray, n_t: int, det_a, det_b, a_only: bool) -> np.ndarray:
    """(P1, P2, g2_raw, g2_net) as a smooth function of (n_a, n_b, n_ab), unclamped."""
    n_a, n_b, n_ab = counts
    m = MeasuredRates(n_a / n_t, None if a_only else n_b / n_t, n_ab / n_t)
    sol = {arm: solve_arm(m, det_a, det_b, arm) for arm in (("a",) if a_only else ("a", "b"))}
    p1 = sum(v[0] for v in sol.values()) / len(sol)
    p2 = sum(v[1] for v in sol.values()) / len(sol)
    na, nb = det_a.noiseless(), det_b.noiseless()
    x = (p1, p2)
    rates = []
    for coef, _ in (_single_row(na), _single_row(nb), _joint_row(na, nb)):
        rates.append(coef[0] * x[0] + coef[1] * x[1])
    return np.array([p1, p2, g2(m), rates[2] / (rates[0] * rates[1])])


def error_bars(c: CountTotals, det_a: DetectorConfig, det_b: DetectorConfig) -> dict:
    """1-sigma errors on P(1), P(2), raw and net g2 from Poisson counting.

    ``N_A``, ``N_B`` and ``N_AB`` are treated as Poisson with the shared
    coincidence component giving ``cov(N_A, N_B) = cov(N_X, N_AB) = N_AB``;
    errors follow by linear propagation through the inversion. With no
    coincidences the P(2) and g2 entries are 90% CL upper limits instead.
    """
    if c.n_t <= 0:
        raise EstimationError("n_t = 0: no accepted triggers")
    a_only = c.n_b is None
    n_b = c.n_a if a_only else c.n_b
    if c.n_ab == 0:
        upper = _headline(np.array([c.n_a, n_b, UPPER_LIMIT_COUNTS], float), c.n_t, det_a, det_b, a_only)
    base = np.array([c.n_a, n_b, c.n_ab], dtype=float)
    cov = np.full((3, 3), float(c.n_ab))
    cov[0, 0], cov[1, 1] = c.n_a, n_b
    if a_only:
        cov[1, :] = cov[:, 1] = 0.0
    jac = np.zeros((4, 3))
    for k in range(3):
        if a_only and k == 1:
            continue
        h = max(1e-6 * base[k], 1e-6)
        up, dn = base.copy(), base.copy()
        up[k] += h
        dn[k] -= h
        jac[:, k] = (_headline(up, c.n_t, det_a, det_b, a_only)
                     - _headline(dn, c.n_t, det_a, det_b, a_only)) / (2 * h)
    sig = np.sqrt(np.clip(np.diag(jac @ cov @ jac.T), 0.0, None))
    out = {
        "p1": float(sig[0]),
        "p2": float(sig[1]),
        "g2_raw": float(sig[2]),
        "g2_net": float(sig[3]),
        "p1_negligible": bool(c.n_a > NEGLIGIBLE_P1_COUNTS),
        "upper_limit": c.n_ab == 0,
    }
    if c.n_ab == 0:
        out.update(p2_upper=float(upper[1]), g2_raw_upper=float(upper[2]), g2_net_upper=float(upper[3]))
    return out


@dataclass
class AnalysisReport:
    stats: PhotonStatistics
    stats_err: dict
    g2_raw: float
    g2_raw_err: float
    g2_net: float
    g2_net_err: float
    rates: MeasuredRates
    rates_net: MeasuredRates
    totals: CountTotals
    solution: Solution
    a_only: bool = False
    source_row: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @property
    def degenerate(self) -> bool:
        return self.solution.clamped

    def as_dict(self) -> dict:
        """JSON-ready mapping with explicit units."""
        prob = "probability per accepted trigger"
        out = {
            "units": {"P": "probability per heralding signal", "rates": prob, "g2": "dimensionless"},
            "totals": self.totals.as_dict(),
            "P0": self.stats.p0,
            "P1": self.stats.p1,
            "P1_err": self.stats_err["p1"],
            "P2": self.stats.p2,
            "P2_err": self.stats_err["p2"],
            "P0_err": self.stats_err["p0"],
            "g2_raw": self.g2_raw,
            "g2_raw_err": self.g2_raw_err,
            "g2_net": self.g2_net,
            "g2_net_err": self.g2_net_err,
            "suppression": (1.0 / self.g2_net) if self.g2_net > 0 else None,
            "rates_raw": {"p_a": self.rates.p_a, "p_b": self.rates.p_b, "p_ab": self.rates.p_ab},
            "rates_net": {"p_a": self.rates_net.p_a, "p_b": self.rates_net.p_b, "p_ab": self.rates_net.p_ab},
            "per_arm": {k: {"P1": v[0], "P2": v[1]} for k, v in self.solution.per_arm.items()},
            "raw_solution": {"P1": self.solution.raw[0], "P2": self.solution.raw[1]},
            "clamped": self.solution.clamped,
            "diagnostics": list(self.solution.diagnostics),
            "a_only": self.a_only,
            "upper_limit": self.stats_err.get("upper_limit", False),
            "p1_err_negligible": self.stats_err.get("p1_negligible", False),
            "warnings": list(self.warnings),
            "source": dict(self.source_row),
        }
        for key in ("p2_upper", "g2_raw_upper", "g2_net_upper"):
            if key in self.stats_err:
                out[key.replace("p2", "P2")] = self.stats_err[key]
        return out

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        d = self.as_dict()
        t = d["totals"]
        n_b = "-" if t["n_b"] is None else f"{t['n_b']}"
        head = ["N_t", "N_A", "N_B", "N_AB", "P(1)", "P(2)", "g2 raw", "g2 net"]
        row = [
            f"{t['n_t']}", f"{t['n_a']}", n_b, f"{t['n_ab']}",
            _pm(d["P1"], d["P1_err"]),
            _pm(d["P2"], d["P2_err"], d.get("P2_upper")),
            _pm(d["g2_raw"], d["g2_raw_err"], d.get("g2_raw_upper")),
            _pm(d["g2_net"], d["g2_net_err"], d.get("g2_net_upper")),
        ]
        widths = [max(len(h), len(r)) for h, r in zip(head, row)]
        lines = ["  ".join(h.rjust(w) for h, w in zip(head, widths)),
                 "  ".join(r.rjust(w) for r, w in zip(row, widths))]
        for note in d["diagnostics"] + d["warnings"]:
            lines.append(f"# {note}")
        return "\n".join(lines)


def _pm(value: float, err: float, upper: float | None = None) -> str:
    if upper is not None:
        return f"< {upper:.3g}"
    return f"{value:.4g} ± {err:.2g}"


def analyze(c: CountTotals, det_a: DetectorConfig, det_b: DetectorConfig,
            source_row: dict | None = None) -> AnalysisReport:
    """Full reconstruction: solve, net rates, g2 and error bars."""
    rates = measured_rates(c)
    notes = []
    a_only = c.n_b is None
    if a_only:
        notes.append("N_B not given: A-arm reconstruction only, p_A used for p_B in raw g2")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ClampWarning)
        sol = solve(rates, det_a, det_b)
    net = net_rates(sol.stats, det_a, det_b)
    errs = error_bars(c, det_a, det_b)
    errs["p0"] = math.hypot(errs["p1"], errs["p2"])
    try:
        g2_raw = g2(rates)
    except EstimationError:
        g2_raw = math.nan
        notes.append("raw g2 undefined (no single counts)")
    try:
        g2_net = g2(net)
    except EstimationError:
        g2_net = math.nan
        notes.append("net g2 undefined (solved P(1) = 0)")
    return AnalysisReport(
        stats=sol.stats,
        stats_err={k: v for k, v in errs.items() if k not in ("g2_raw", "g2_net")},
        g2_raw=g2_raw,
        g2_raw_err=errs["g2_raw"],
        g2_net=g2_net,
        g2_net_err=errs["g2_net"],
        rates=rates,
        rates_net=net,
        totals=c,
        solution=sol,
        a_only=a_only,
        source_row=dict(source_row or {}),
        warnings=notes,
    )
