"""Start/stop trigger-separation histograms.

The record stream is read sequentially. A click on one detector arms a
start; the next click on the other detector within ``n_max`` triggers is
the stop and fills bin ``n`` (positive when A started). Rules:

* a click on the armed detector before the stop is an invalid start:
  counted and ignored, the search window keeps its original origin;
* a trigger with both detectors clicking while idle fills bin 0;
* a trigger with the stop detector clicking ends the search even if the
  start detector clicks too, and a stop never arms a new start;
* a search that sees no stop within ``n_max`` triggers is cancelled and
  the trigger that exceeded the range is examined again as a fresh start;
* a search still open at end of stream counts as cancelled.

For independent triggers the off-centre counts follow
``M(n) = C p_A (1 - p_B)^|n| p_B`` (A and B swapped for n < 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .records import Records


class HistogramError(ValueError):
    pass


class InsufficientDataError(HistogramError):
    pass


MIN_FIT_BINS = 10
BAD_FIT_CHI2 = 5.0


@dataclass
class Histogram:
    """Counts ``M(n)`` for ``n`` in ``[-n_max, n_max]``; ``counts[n + n_max]``."""

    counts: np.ndarray
    n_max: int
    starts_consumed: int = 0
    invalid_starts: int = 0
    cancelled_searches: int = 0
    fit: "FitResult | None" = None

    @property
    def bins(self) -> np.ndarray:
        return np.arange(-self.n_max, self.n_max + 1)

    def __getitem__(self, n: int) -> int:
        if abs(n) > self.n_max:
            raise KeyError(n)
        return int(self.counts[n + self.n_max])

    def as_dict(self) -> dict[int, int]:
        return {int(n): int(c) for n, c in zip(self.bins, self.counts)}


@dataclass(frozen=True)
class FitResult:
    c: float
    c_err: float
    chi2: float
    dof: int
    flagged: bool = False
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def chi2_dof(self) -> float:
        return self.chi2 / self.dof if self.dof > 0 else math.nan


def build_histogram(records: Records, n_max: int = 100) -> Histogram:
    """Run the start/stop state machine over ``records``."""
    if n_max < 1:
        raise HistogramError("n_max must be >= 1")
    counts = np.zeros(2 * n_max + 1, dtype=np.int64)
    a = records.det_a.astype(bool)
    b = records.det_b.astype(bool)
    # only clicking triggers can change state
    idx = np.flatnonzero(a | b)
    ka = a[idx].tolist()
    kb = b[idx].tolist()
    pos = idx.tolist()

    starts = invalid = cancelled = 0
    armed = 0  # 0 idle, +1 start on A, -1 start on B
    origin = 0
    j = 0
    n = len(pos)
    while j < n:
        k, ca, cb = pos[j], ka[j], kb[j]
        if armed:
            sep = k - origin
            if sep > n_max:
                cancelled += 1
                armed = 0
                continue  # re-examine this trigger while idle
            if armed > 0:
                if cb:
                    counts[n_max + sep] += 1
                    armed = 0
                else:
                    invalid += 1
            else:
                if ca:
                    counts[n_max - sep] += 1
                    armed = 0
                else:
                    invalid += 1
        else:
            starts += 1
            if ca and cb:
                counts[n_max] += 1
            else:
                armed = 1 if ca else -1
                origin = k
        j += 1
    if armed:
        cancelled += 1
    return Histogram(counts, n_max, starts, invalid, cancelled)


def theoretical_m(n, p_a: float, p_b: float, c: float = 1.0):
    """``C p_A (1 - p_B)^n p_B`` for n > 0, A and B swapped for n < 0."""
    n_arr = np.asarray(n)
    if np.any(n_arr == 0):
        raise HistogramError("the model excludes the coincidence bin n = 0")
    out = np.where(n_arr > 0,
                   c * p_a * (1.0 - p_b) ** np.abs(n_arr) * p_b,
                   c * p_b * (1.0 - p_a) ** np.abs(n_arr) * p_a)
    return float(out) if np.ndim(n) == 0 else out


def off_center_mass(p_a: float, p_b: float, n_max: int) -> float:
    """Closed form of ``sum_{0<|n|<=n_max} M(n) / C``."""
    # each side: p_x p_y sum_{n=1}^{N} (1-p_y)^n = p_x (1-p_y) (1 - (1-p_y)^N)
    plus = p_a * (1.0 - p_b) * (1.0 - (1.0 - p_b) ** n_max)
    minus = p_b * (1.0 - p_a) * (1.0 - (1.0 - p_a) ** n_max)
    return plus + minus


def fit_c(h: Histogram, p_a: float, p_b: float) -> FitResult:
    """Fit the single constant ``C`` over all ``n != 0`` bins.

    With Poisson variances set by the unit-``C`` shape ``s(n)`` the weighted
    least-squares and fixed-shape maximum-likelihood estimates coincide:
    ``C = sum M(n) / sum s(n)`` and ``sigma_C = sqrt(C / sum s(n))``.
    """
    n = h.bins[h.bins != 0]
    m = h.counts[h.bins != 0].astype(float)
    if np.count_nonzero(m) < MIN_FIT_BINS:
        raise InsufficientDataError(
            f"only {np.count_nonzero(m)} non-empty off-centre bins, need {MIN_FIT_BINS}")
    s = theoretical_m(n, p_a, p_b, 1.0)
    if not np.all(s > 0):
        raise InsufficientDataError("model shape vanishes on some bins (p_A or p_B is 0 or 1)")
    total = s.sum()
    c = m.sum() / total
    c_err = math.sqrt(c / total)
    model = c * s
    chi2 = float(np.sum((m - model) ** 2 / model))
    dof = n.size - 1
    notes = []
    flagged = dof > 0 and chi2 / dof > BAD_FIT_CHI2
    if flagged:
        notes.append(f"chi2/dof = {chi2 / dof:.2f} > {BAD_FIT_CHI2}: histogram does not follow the geometric law")
    result = FitResult(c, c_err, chi2, dof, flagged, tuple(notes))
    h.fit = result
    return result


def normalize(h: Histogram, p_a: float, p_b: float, c: float) -> np.ndarray:
    """``M(n) / (C p_A p_B)``; the central bin is the raw g2 estimate."""
    norm = c * p_a * p_b
    if norm <= 0:
        raise HistogramError("zero normalizer C p_A p_B")
    return h.counts / norm


def central_g2(h: Histogram, p_a: float, p_b: float, fit: FitResult) -> tuple[float, float]:
    """Central-bin g2 with a 1-sigma error from Poisson ``M(0)`` and ``sigma_C``."""
    m0 = h[0]
    norm = fit.c * p_a * p_b
    value = m0 / norm
    rel = math.hypot(1.0 / math.sqrt(m0) if m0 else 0.0, fit.c_err / fit.c)
    err = value * rel if m0 else 1.0 / norm
    return value, err


def to_tsv(h: Histogram, p_a: float, p_b: float, fit: FitResult | None = None) -> str:
    """Columns ``n, count, model, normalized``; model is blank at n = 0."""
    lines = ["n\tcount\tmodel\tnormalized"]
    norm = None if fit is None else normalize(h, p_a, p_b, fit.c)
    for i, n in enumerate(h.bins):
        model = "" if fit is None or n == 0 else f"{theoretical_m(int(n), p_a, p_b, fit.c):.6g}"
        nval = "" if norm is None else f"{norm[i]:.6g}"
        lines.append(f"{n}\t{h.counts[i]}\t{model}\t{nval}")
    return "\n".join(lines) + "\n"


def ascii_preview(h: Histogram, width: int = 50, span: int = 10) -> str:
    """Bar chart of the bins with ``|n| <= span``."""
    span = min(span, h.n_max)
    sel = slice(h.n_max - span, h.n_max + span + 1)
    counts = h.counts[sel]
    top = max(int(counts.max()), 1)
    rows = []
    for n, c in zip(range(-span, span + 1), counts):
        bar = "#" * int(round(width * c / top))
        rows.append(f"{n:>5} {c:>9} {bar}")
    return "\n".join(rows)
