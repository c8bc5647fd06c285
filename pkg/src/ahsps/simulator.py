"""Monte Carlo generation of HBT bench records.

Heralding signals arrive as a Poisson process. For each one the photon
number ``i`` in {0, 1, 2} is drawn from the bench statistics, each photon
goes to arm A or B with probability 1/2 and is detected with that arm's
efficiency, and the photon click of each detector is combined with a dark
count by exclusive or, ``p = p_phot (1 - 2 p_dc) + p_dc``.

Triggers arriving while either bench detector sits in its dead window are
offered but discarded, as the AND of the two "gate out" signals does in
the experiment.

Randomness is keyed by ``(seed, block index)`` with a fixed block size, so
blocks can be generated in any order or in parallel and still give the
same stream.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .estimator import CountTotals, accumulate_counts
from .model import DetectorConfig, PhotonStatistics, SourceConfig, heralding_rate, multi_photon_prob
from .records import Records, TriggerRecord

log = logging.getLogger(__name__)

BLOCK_SIZE = 1 << 18


class SimulationError(ValueError):
    pass


@dataclass
class SimulationSummary:
    n_triggers_offered: int
    n_triggers_accepted: int
    wall_duration: float
    herald_rate: float
    rng_seed: int
    totals: CountTotals = field(default_factory=CountTotals)
    n_herald_darks: int = 0

    def as_dict(self) -> dict:
        return {
            "n_triggers_offered": self.n_triggers_offered,
            "n_triggers_accepted": self.n_triggers_accepted,
            "wall_duration_s": self.wall_duration,
            "herald_rate_hz": self.herald_rate,
            "rng_seed": self.rng_seed,
            "n_herald_darks": self.n_herald_darks,
            "totals": self.totals.as_dict(),
        }


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def _clicks(stats: PhotonStatistics, det_a: DetectorConfig, det_b: DetectorConfig,
            u: np.ndarray, acceptance: float = 1.0,
            vacuum: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Map a (7, n) array of uniforms to detector bits.

    Rows: photon number, arm of photon 1 and 2, detection of photon 1
    and 2, dark count A, dark count B. Triggers flagged in ``vacuum``
    carry no photon regardless of ``stats``.
    """
    i = (u[0] >= stats.p0).astype(np.int8) + (u[0] >= stats.p0 + stats.p1)
    if vacuum is not None:
        i[vacuum] = 0
    eta_a = det_a.efficiency * acceptance
    eta_b = det_b.efficiency * acceptance
    a = np.zeros(u.shape[1], dtype=bool)
    b = np.zeros(u.shape[1], dtype=bool)
    for k in (0, 1):
        present = i > k
        to_a = u[1 + k] < 0.5
        detected = present & (u[3 + k] < np.where(to_a, eta_a, eta_b))
        a |= detected & to_a
        b |= detected & ~to_a
    a ^= u[5] < det_a.dark_count_prob
    b ^= u[6] < det_b.dark_count_prob
    return a.view(np.uint8), b.view(np.uint8)


def sample_trigger(stats: PhotonStatistics, det_a: DetectorConfig, det_b: DetectorConfig,
                   rng: np.random.Generator, size: int | None = None,
                   acceptance: float = 1.0) -> TriggerRecord | Records:
    """Sample one trigger (or ``size`` independent triggers as :class:`Records`)."""
    n = 1 if size is None else size
    a, b = _clicks(stats, det_a, det_b, rng.random((7, n)), acceptance)
    if size is None:
        return TriggerRecord(int(a[0]), int(b[0]))
    return Records(a, b)


def _accepted_click_chain(t: np.ndarray, click_idx: np.ndarray, dead_ns: int, start: int) -> list[int]:
    """Positions (into ``click_idx``) of clicks that open a dead window.

    The first is the first click with ``t >= start``; each next one is the
    first click at or after the end of the previous window.
    """
    if click_idx.size == 0:
        return []
    tc = t[click_idx]
    jump = np.searchsorted(tc, tc + dead_ns, side="left").tolist()
    j = int(np.searchsorted(tc, start, side="left"))
    n = len(jump)
    chain = []
    while j < n:
        chain.append(j)
        j = jump[j]
    return chain


def _deadtime_filter(t: np.ndarray, det_a: np.ndarray, det_b: np.ndarray,
                     dead_ns: int, dead_until: int) -> tuple[np.ndarray, int]:
    accepted = np.ones(t.size, dtype=bool)
    first = int(np.searchsorted(t, dead_until, side="left"))
    accepted[:first] = False
    if dead_ns <= 0:
        return accepted, dead_until
    click_idx = np.flatnonzero(det_a | det_b)
    chain = _accepted_click_chain(t, click_idx, dead_ns, dead_until)
    if chain:
        k = click_idx[chain]
        ends = t[k] + dead_ns
        stops = np.searchsorted(t, ends, side="left")
        delta = np.zeros(t.size + 1, dtype=np.int32)
        # windows are disjoint, so +1/-1 marks never overlap
        np.add.at(delta, k + 1, 1)
        np.add.at(delta, stops, -1)
        accepted &= np.cumsum(delta[:-1]) == 0
        dead_until = max(dead_until, int(ends[-1]))
    return accepted, dead_until


def apply_deadtime(timestamps, dead_time: float, click_flags, dead_until: int = 0) -> np.ndarray:
    """Mask of triggers accepted by the AND of both detectors' readiness.

    Args:
        timestamps: trigger times in ns, ascending.
        dead_time: dead time in s.
        click_flags: ``(n, 2)`` array-like of (det_a, det_b) bits, or a
            :class:`Records`.
        dead_until: ns before which both detectors are still dead.

    A detector's window ``[t, t + dead_time)`` opens only when it clicks at
    an accepted trigger; rejected triggers never open windows.
    """
    t = np.asarray(timestamps, dtype=np.int64)
    if isinstance(click_flags, Records):
        a, b = click_flags.det_a, click_flags.det_b
    else:
        flags = np.asarray(click_flags, dtype=np.uint8).reshape(-1, 2)
        a, b = flags[:, 0], flags[:, 1]
    if a.size != t.size:
        raise ValueError("timestamps and click flags differ in length")
    if t.size > 1 and np.any(np.diff(t) < 0):
        raise ValueError("timestamps must be sorted ascending")
    mask, _ = _deadtime_filter(t, a.astype(bool), b.astype(bool), round(dead_time * 1e9), dead_until)
    return mask


def ungated_view(offered: Records, dead_time: float) -> Records:
    """What the bench would record if every heralding signal triggered acquisition.

    Each detector independently reads 0 while inside its own dead window.
    This is the naive analysis that underestimates coincidences.
    """
    if offered.timestamps is None:
        raise ValueError("ungated view needs timestamps")
    t = offered.timestamps
    dead_ns = round(dead_time * 1e9)
    bits = []
    for det in (offered.det_a, offered.det_b):
        click_idx = np.flatnonzero(det)
        out = np.zeros(t.size, dtype=np.uint8)
        if dead_ns > 0:
            out[click_idx[_accepted_click_chain(t, click_idx, dead_ns, 0)]] = 1
        else:
            out[click_idx] = 1
        bits.append(out)
    return Records(bits[0], bits[1], t.copy())


class RunStream:
    """Iterable of accepted record chunks for one simulated acquisition.

    ``summary`` is available once iteration has finished.
    """

    def __init__(self, src: SourceConfig, det_a: DetectorConfig, det_b: DetectorConfig,
                 n_target: int, seed: int, *, herald_darks: bool = False,
                 timestamps: bool = True, workers: int = 1, block_size: int = BLOCK_SIZE):
        if n_target < 1:
            raise SimulationError("n_target must be >= 1")
        p1 = src.coupling_p1
        p2 = multi_photon_prob(src)
        if p2 > 0 and p2 >= 1.0 - p1:
            raise SimulationError(f"non-physical statistics: P(2)={p2:.4g} >= 1 - P(1)={1 - p1:.4g}")
        self.stats = PhotonStatistics.from_p1_p2(p1, p2)
        self.src = src
        self.det_a = det_a
        self.det_b = det_b
        self.n_target = int(n_target)
        self.seed = int(seed)
        self.herald_darks = herald_darks
        self.timestamps = timestamps
        self.workers = max(1, int(workers))
        self.block_size = int(block_size)
        rh = heralding_rate(src)
        rd = src.herald_dark_rate if herald_darks else 0.0
        self.total_rate = rh + rd
        if self.total_rate <= 0:
            raise SimulationError("heralding rate is zero; no triggers would ever arrive")
        self.dark_fraction = rd / self.total_rate
        self.summary: SimulationSummary | None = None

    def generate_block(self, block: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray | None]:
        """Offered triggers of one block: (relative times ns, det_a, det_b, herald-dark mask).

        Times are cumulative within the block; the caller adds the offset.
        """
        rng = block_rng(self.seed, block)
        n = self.block_size
        gaps = np.maximum(np.rint(rng.standard_exponential(n) * (1e9 / self.total_rate)), 1).astype(np.int64)
        u = rng.random((7, n))
        dark = rng.random(n) < self.dark_fraction if self.dark_fraction > 0 else None
        a, b = _clicks(self.stats, self.det_a, self.det_b, u, self.src.gate_acceptance, dark)
        return np.cumsum(gaps), a, b, dark

    def _blocks(self):
        block = 0
        if self.workers == 1:
            while True:
                yield self.generate_block(block)
                block += 1
        else:
            with ThreadPoolExecutor(self.workers) as pool:
                while True:
                    yield from pool.map(self.generate_block, range(block, block + self.workers))
                    block += self.workers

    def __iter__(self):
        dead_ns = round(self.src.dead_time * 1e9)
        offset = 0
        dead_until = 0
        accepted_total = 0
        offered = 0
        n_dark = 0
        totals = CountTotals()
        last_t = 0
        for rel_t, a, b, dark in self._blocks():
            t = rel_t + offset
            offset = int(t[-1])
            mask, dead_until = _deadtime_filter(t, a.view(bool), b.view(bool), dead_ns, dead_until)
            idx = np.flatnonzero(mask)
            need = self.n_target - accepted_total
            n_seen = t.size
            if idx.size >= need:
                idx = idx[:need]
                n_seen = int(idx[-1]) + 1
            offered += n_seen
            if dark is not None:
                n_dark += int(dark[:n_seen].sum())
            chunk = Records(a[idx], b[idx], t[idx] if self.timestamps else None)
            totals = totals + accumulate_counts(chunk)
            accepted_total += idx.size
            if idx.size:
                last_t = int(t[idx[-1]])
            yield chunk
            if accepted_total >= self.n_target:
                break
        wall = last_t * 1e-9
        self.summary = SimulationSummary(
            n_triggers_offered=offered,
            n_triggers_accepted=accepted_total,
            wall_duration=wall,
            herald_rate=offered / wall if wall > 0 else float("nan"),
            rng_seed=self.seed,
            totals=totals,
            n_herald_darks=n_dark,
        )
        log.debug("simulated %d/%d triggers accepted", accepted_total, offered)


def simulate_run(src: SourceConfig, det_a: DetectorConfig, det_b: DetectorConfig,
                 n_target: int, seed: int, **kwargs) -> tuple[Records, SimulationSummary]:
    """Simulate an acquisition of exactly ``n_target`` accepted triggers.

    Keyword arguments are passed to :class:`RunStream`.
    """
    stream = RunStream(src, det_a, det_b, n_target, seed, **kwargs)
    records = Records.concat(list(stream))
    return records, stream.summary


def simulate_counts(src: SourceConfig, det_a: DetectorConfig, det_b: DetectorConfig,
                    n_target: int, seed: int, **kwargs) -> SimulationSummary:
    """Like :func:`simulate_run` but keeps only the totals (constant memory)."""
    kwargs.setdefault("timestamps", False)
    stream = RunStream(src, det_a, det_b, n_target, seed, **kwargs)
    for _ in stream:
        pass
    return stream.summary


def simulate_offered(src: SourceConfig, det_a: DetectorConfig, det_b: DetectorConfig,
                     n_offered: int, seed: int, **kwargs) -> Records:
    """All offered triggers with their photon-level clicks, before any dead-time logic.

    Uses the same random stream as :func:`simulate_run` with the same seed.
    """
    stream = RunStream(src, det_a, det_b, 1, seed, **kwargs)
    ts, aa, bb = [], [], []
    offset = 0
    got = 0
    for rel_t, a, b, _ in stream._blocks():
        t = rel_t + offset
        offset = int(t[-1])
        ts.append(t)
        aa.append(a)
        bb.append(b)
        got += t.size
        if got >= n_offered:
            break
    return Records(np.concatenate(aa)[:n_offered], np.concatenate(bb)[:n_offered],
                   np.concatenate(ts)[:n_offered])
