"""Shared domain types and closed-form source relations.

The source is characterized per heralding signal by the truncated photon
number distribution at the bench input, ``P(0) + P(1) + P(2) = 1``, where
``P(2)`` stands for "more than one photon".
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace


class NonPhysicalWarning(UserWarning):
    """Parameter combination outside the regime the model describes."""


@dataclass(frozen=True)
class PhotonStatistics:
    p0: float
    p1: float
    p2: float

    def __post_init__(self):
        for name in ("p0", "p1", "p2"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0) or math.isnan(v):
                raise ValueError(f"{name}={v!r} is not a probability")
        if abs(self.p0 + self.p1 + self.p2 - 1.0) > 1e-12:
            raise ValueError(
                f"photon statistics do not sum to 1 (sum={self.p0 + self.p1 + self.p2!r})"
            )

    @classmethod
    def from_p1_p2(cls, p1: float, p2: float) -> "PhotonStatistics":
        """Build the distribution with ``P(0)`` set by normalization."""
        return cls(1.0 - p1 - p2, p1, p2)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.p0, self.p1, self.p2)


@dataclass(frozen=True)
class DetectorConfig:
    """One gated bench detector.

    ``efficiency`` is the overall detection probability per incident photon,
    splitter and fibre losses included. ``dark_count_prob`` is per gate.
    """

    efficiency: float
    dark_count_prob: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.efficiency <= 1.0):
            raise ValueError(f"efficiency={self.efficiency!r} must be in (0, 1]")
        if not (0.0 <= self.dark_count_prob < 0.5):
            raise ValueError(f"dark_count_prob={self.dark_count_prob!r} must be in [0, 0.5)")

    def noiseless(self) -> "DetectorConfig":
        return replace(self, dark_count_prob=0.0)


@dataclass(frozen=True)
class SourceConfig:
    """Physical parameters of the heralded source.

    Attributes:
        pump_power: pump power in W.
        pair_efficiency: pairs per second per W of pump.
        herald_coupling: coupling efficiency of the heralding photons.
        herald_detector_eff: quantum efficiency of the heralding detector.
        coupling_p1: heralded-photon coupling ratio (ground-truth P(1)).
        herald_dark_rate: heralding detector dark-count rate in Hz.
        gate_width: bench detection gate width in s.
        dead_time: external dead time of each bench detector in s.
        attenuation: thinning factor applied to the heralding rate only.
        gate_acceptance: fraction of heralded photons falling inside the gate.
    """

    pump_power: float
    pair_efficiency: float
    herald_coupling: float
    herald_detector_eff: float
    coupling_p1: float
    herald_dark_rate: float = 100.0
    gate_width: float = 2.5e-9
    dead_time: float = 1e-5
    attenuation: float = 1.0
    gate_acceptance: float = 1.0

    def __post_init__(self):
        for name in ("herald_coupling", "herald_detector_eff", "coupling_p1",
                     "attenuation", "gate_acceptance"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name}={v!r} must be in [0, 1]")
        for name in ("pump_power", "pair_efficiency", "herald_dark_rate", "dead_time"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not self.gate_width > 0:
            raise ValueError("gate_width must be > 0")

    @property
    def pair_rate(self) -> float:
        """Pairs created per second (the only way pump and crystal enter)."""
        return self.pair_efficiency * self.pump_power


def source_for(p1: float, p2: float, herald_rate: float, *, herald_coupling: float = 0.25,
               herald_detector_eff: float = 0.35, pump_power: float = 1e-3, **kwargs) -> SourceConfig:
    """Source whose model gives ``P(1)=p1``, ``P(2)=p2`` and bench trigger rate ``herald_rate``.

    The pair rate follows from ``p2`` and the attenuation from
    ``herald_rate``; raises ``ValueError`` if that would need attenuation > 1.
    """
    gate_width = kwargs.get("gate_width", 2.5e-9)
    pair_rate = 2.0 * p2 / (p1 ** 2 * gate_width)
    full_rate = herald_coupling * herald_detector_eff * pair_rate
    if herald_rate > full_rate * (1 + 1e-12):
        raise ValueError(f"herald_rate {herald_rate:g} Hz exceeds the unattenuated {full_rate:g} Hz")
    return SourceConfig(
        pump_power=pump_power,
        pair_efficiency=pair_rate / pump_power,
        herald_coupling=herald_coupling,
        herald_detector_eff=herald_detector_eff,
        coupling_p1=p1,
        attenuation=min(herald_rate / full_rate, 1.0),
        **kwargs,
    )


@dataclass(frozen=True)
class FigureOfMerit:
    f_value: float

    @property
    def unbounded(self) -> bool:
        return math.isinf(self.f_value)


def heralding_rate(src: SourceConfig) -> float:
    """Heralding signal rate in Hz, after attenuation."""
    return src.attenuation * src.herald_coupling * src.herald_detector_eff * src.pair_rate


def multi_photon_prob(src: SourceConfig) -> float:
    """Probability of a second pair inside one gate, ``0.5 P(1)^2 dt R_pairs``.

    Warns with :class:`NonPhysicalWarning` when the result leaves no room
    for ``P(0)``.
    """
    p2 = 0.5 * src.coupling_p1 ** 2 * src.gate_width * src.pair_rate
    if p2 > 0 and p2 >= 1.0 - src.coupling_p1:
        warnings.warn(
            f"P(2)={p2:.4g} >= 1 - P(1)={1.0 - src.coupling_p1:.4g}; truncated model breaks down",
            NonPhysicalWarning,
            stacklevel=2,
        )
    elif p2 >= src.coupling_p1 > 0:
        warnings.warn(f"P(2)={p2:.4g} >= P(1)", NonPhysicalWarning, stacklevel=2)
    return p2


def source_statistics(src: SourceConfig) -> PhotonStatistics:
    """Ground-truth bench statistics the source model implies."""
    p1 = src.coupling_p1
    p2 = multi_photon_prob(src)
    if p1 + p2 > 1.0:
        raise ValueError(f"non-physical statistics: P(1)={p1:.4g}, P(2)={p2:.4g}")
    return PhotonStatistics.from_p1_p2(p1, p2)


def figure_of_merit(stats: PhotonStatistics, herald_rate: float) -> FigureOfMerit:
    """``F = P(1)^3 R_H / 2 P(2)``; infinite when ``P(2) == 0``."""
    if stats.p2 == 0:
        return FigureOfMerit(math.inf)
    return FigureOfMerit(stats.p1 ** 3 * herald_rate / (2.0 * stats.p2))


def figure_of_merit_physical(src: SourceConfig) -> FigureOfMerit:
    """``F = P(1) q_H eta_H / dt``, independent of pump power and crystal."""
    return FigureOfMerit(src.coupling_p1 * src.herald_coupling * src.herald_detector_eff / src.gate_width)


def poissonian_reference(g2: float | None = None) -> tuple[float, float | None]:
    """Return ``(1.0, 1/g2)``: the Poissonian g2 and the suppression factor.

    The suppression factor is ``None`` when no measured ``g2`` is given and
    infinite for ``g2 == 0``.
    """
    if g2 is None:
        return 1.0, None
    if g2 < 0:
        raise ValueError("g2 must be >= 0")
    return 1.0, (math.inf if g2 == 0 else 1.0 / g2)
