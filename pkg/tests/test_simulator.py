import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ahsps.estimator import accumulate_counts, forward_probabilities
from ahsps.model import DetectorConfig, PhotonStatistics, source_for
from ahsps.records import Records, TriggerRecord
from ahsps.simulator import (
    RunStream,
    SimulationError,
    apply_deadtime,
    sample_trigger,
    simulate_counts,
    simulate_offered,
    simulate_run,
    ungated_view,
)

from oracles import deadtime_reference, ungated_reference

PERFECT = DetectorConfig(1.0, 0.0)


def _freq_ok(k, n, p, nsig=3.0):
    return abs(k / n - p) <= nsig * math.sqrt(p * (1 - p) / n)


class TestSampleTrigger:
    def test_vacuum_no_noise(self):
        rng = np.random.default_rng(0)
        rec = sample_trigger(PhotonStatistics(1, 0, 0), PERFECT, PERFECT, rng, size=10_000)
        assert not rec.det_a.any() and not rec.det_b.any()
        assert sample_trigger(PhotonStatistics(1, 0, 0), PERFECT, PERFECT, rng) == TriggerRecord(0, 0)

    def test_single_photon_split(self):
        rec = sample_trigger(PhotonStatistics(0, 1, 0), PERFECT, PERFECT, np.random.default_rng(1), size=1_000_000)
        assert np.all(rec.det_a ^ rec.det_b)
        assert _freq_ok(int(rec.det_a.sum()), len(rec), 0.5)

    def test_two_photon_coincidences(self):
        # enumerate the 4 equally likely arm assignments: AB and BA coincide
        splits = [("A", "A"), ("A", "B"), ("B", "A"), ("B", "B")]
        p_coinc = sum(len(set(s)) == 2 for s in splits) / len(splits)
        assert p_coinc == 0.5
        rec = sample_trigger(PhotonStatistics(0, 0, 1), PERFECT, PERFECT, np.random.default_rng(2), size=1_000_000)
        assert _freq_ok(int(np.count_nonzero(rec.det_a & rec.det_b)), len(rec), p_coinc)

    def test_marginals_match_forward_model(self, det_a, det_b):
        stats = PhotonStatistics.from_p1_p2(0.6, 0.05)
        n = 2_000_000
        rec = sample_trigger(stats, det_a, det_b, np.random.default_rng(4), size=n)
        c = accumulate_counts(rec)
        m = forward_probabilities(stats, det_a, det_b)
        for k, p in ((c.n_a, m.p_a), (c.n_b, m.p_b), (c.n_ab, m.p_ab)):
            assert _freq_ok(k, n, p, 4.0)

    def test_dark_count_exclusive_rule(self):
        # certain photon click plus certain-ish dark count: XOR suppresses the click
        det = DetectorConfig(1.0, 0.4)
        rec = sample_trigger(PhotonStatistics(0, 0, 1), det, det, np.random.default_rng(5), size=400_000)
        p_phot = 0.75  # P(at least one of two photons in this arm)
        expected = p_phot * (1 - 2 * 0.4) + 0.4
        assert _freq_ok(int(rec.det_a.sum()), len(rec), expected, 4.0)


class TestApplyDeadtime:
    def test_window_arithmetic(self):
        us = 1000
        mask = apply_deadtime([0, 4 * us, 12 * us], 10e-6, [(1, 0), (0, 0), (0, 0)])
        assert mask.tolist() == [True, False, True]

    def test_no_clicks(self):
        assert apply_deadtime(np.arange(0, 100, 1), 1e-5, np.zeros((100, 2))).all()

    def test_rejected_triggers_open_no_window(self):
        us = 1000
        t = [0, 6 * us, 11 * us]
        clicks = [(1, 0), (0, 1), (0, 0)]
        mask = apply_deadtime(t, 10e-6, clicks)
        assert mask.tolist() == [True, False, True]
        assert deadtime_reference(t, clicks, 10 * us) == mask.tolist()

    def test_window_boundary_is_half_open(self):
        mask = apply_deadtime([0, 9999, 10000], 10e-6, [(0, 1), (0, 0), (0, 0)])
        assert mask.tolist() == [True, False, True]

    def test_unsorted_rejected(self):
        with pytest.raises(ValueError):
            apply_deadtime([5, 3], 1e-6, [(0, 0), (0, 0)])

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.tuples(st.integers(1, 30), st.integers(0, 1), st.integers(0, 1)),
                    min_size=1, max_size=200),
           st.integers(0, 60))
    def test_matches_event_by_event(self, events, dead):
        t = np.cumsum([e[0] for e in events])
        clicks = [(e[1], e[2]) for e in events]
        mask = apply_deadtime(t, dead * 1e-9, clicks)
        assert mask.tolist() == deadtime_reference(t.tolist(), clicks, dead)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.integers(1, 30), st.integers(0, 1)), min_size=1, max_size=200),
           st.integers(0, 60))
    def test_ungated_matches_reference(self, events, dead):
        t = np.cumsum([e[0] for e in events])
        bits = [e[1] for e in events]
        view = ungated_view(Records(bits, bits[::-1], t), dead * 1e-9)
        assert view.det_a.tolist() == ungated_reference(t.tolist(), bits, dead)
        assert view.det_b.tolist() == ungated_reference(t.tolist(), bits[::-1], dead)


class TestSimulateRun:
    def test_exact_count_and_timestamps(self, low_pump_source, det_a, det_b):
        rec, summary = simulate_run(low_pump_source, det_a, det_b, 300_001, seed=7)
        assert len(rec) == 300_001 == summary.n_triggers_accepted
        assert np.all(np.diff(rec.timestamps) > 0)
        assert summary.n_triggers_offered >= summary.n_triggers_accepted
        assert summary.herald_rate == pytest.approx(39e3, rel=0.01)
        assert summary.wall_duration == pytest.approx(rec.timestamps[-1] * 1e-9)

    def test_no_deadtime_accepts_everything(self, low_pump_source, det_a, det_b):
        src = replace(low_pump_source, dead_time=0.0)
        _, summary = simulate_run(src, det_a, det_b, 200_000, seed=1)
        assert summary.n_triggers_offered == summary.n_triggers_accepted

    def test_discard_fraction(self, low_pump_source, det_a, det_b):
        # each accepted click hides Poisson(R_H * dead_time) later triggers
        n = 1_000_000
        _, s = simulate_run(low_pump_source, det_a, det_b, n, seed=11, timestamps=False)
        t = s.totals
        clicks = t.n_a + t.n_b - t.n_ab
        p_click = clicks / n
        assert p_click == pytest.approx(0.055, abs=0.002)
        rd = 39e3 * 1e-5
        discarded = s.n_triggers_offered - n
        expected = clicks * rd
        assert abs(discarded - expected) < 3 * math.sqrt(expected)
        frac = discarded / s.n_triggers_offered
        assert frac == pytest.approx(rd * p_click / (1 + rd * p_click), rel=0.05)
        assert frac == pytest.approx(2.1e-2, rel=0.05)

    def test_deterministic(self, low_pump_source, det_a, det_b):
        r1, s1 = simulate_run(low_pump_source, det_a, det_b, 50_000, seed=42)
        r2, s2 = simulate_run(low_pump_source, det_a, det_b, 50_000, seed=42)
        r3, _ = simulate_run(low_pump_source, det_a, det_b, 50_000, seed=43)
        assert r1 == r2 and s1 == s2
        assert not r1 == r3

    def test_parallel_equals_serial(self, low_pump_source, det_a, det_b):
        kw = dict(block_size=4096)
        serial = simulate_run(low_pump_source, det_a, det_b, 30_000, 9, **kw)
        parallel = simulate_run(low_pump_source, det_a, det_b, 30_000, 9, workers=4, **kw)
        assert serial[0] == parallel[0]
        assert serial[1] == parallel[1]

    def test_blocks_independent_of_order(self, low_pump_source, det_a, det_b):
        stream = RunStream(low_pump_source, det_a, det_b, 1, seed=5, block_size=1000)
        fwd = [stream.generate_block(k) for k in range(4)]
        rev = [stream.generate_block(k) for k in reversed(range(4))][::-1]
        for x, y in zip(fwd, rev):
            assert all(np.array_equal(u, v) for u, v in zip(x[:3], y[:3]))

    def test_summary_tallies_match_records(self, low_pump_source, det_a, det_b):
        rec, s = simulate_run(low_pump_source, det_a, det_b, 400_000, seed=3)
        assert accumulate_counts(rec) == s.totals
        assert simulate_counts(low_pump_source, det_a, det_b, 400_000, seed=3).totals == s.totals

    def test_offered_stream_filters_to_run(self, low_pump_source, det_a, det_b):
        rec, s = simulate_run(low_pump_source, det_a, det_b, 100_000, seed=8)
        offered = simulate_offered(low_pump_source, det_a, det_b, s.n_triggers_offered, seed=8)
        mask = apply_deadtime(offered.timestamps, low_pump_source.dead_time, offered)
        assert offered[mask] == rec

    def test_nonphysical_aborts(self, det_a, det_b):
        src = source_for(0.9, 0.09, 1e3, pump_power=1.0)
        src = replace(src, pair_efficiency=src.pair_efficiency * 10)
        with pytest.raises(SimulationError), pytest.warns():
            simulate_run(src, det_a, det_b, 10, seed=0)

    def test_zero_rate_rejected(self, low_pump_source, det_a, det_b):
        with pytest.raises(SimulationError):
            simulate_run(replace(low_pump_source, attenuation=0.0), det_a, det_b, 10, seed=0)
        with pytest.raises(SimulationError):
            simulate_run(low_pump_source, det_a, det_b, 0, seed=0)

    def test_herald_darks_are_vacuum(self, det_a, det_b):
        # heralds that are all dark counts: P(1) from the herald stream drops to 0
        src = replace(source_for(0.6, 1e-3, 1e3), herald_dark_rate=1e9)
        _, s = simulate_run(src, det_a, det_b, 200_000, seed=1, herald_darks=True, timestamps=False)
        assert s.n_herald_darks > 0.99 * s.n_triggers_offered
        assert s.totals.n_a / s.totals.n_t < 5 * det_a.dark_count_prob + 1e-3

    def test_herald_darks_negligible_at_100_hz(self, low_pump_source, det_a, det_b):
        _, s = simulate_run(low_pump_source, det_a, det_b, 400_000, seed=2, herald_darks=True, timestamps=False)
        frac = s.n_herald_darks / s.n_triggers_offered
        assert frac == pytest.approx(100 / 39_100, rel=0.2)

    def test_gate_acceptance_scales_efficiency(self, det_a, det_b):
        src = replace(source_for(0.6, 1e-4, 1e4), gate_acceptance=0.5, dead_time=0.0)
        _, s = simulate_run(src, det_a, det_b, 500_000, seed=4, timestamps=False)
        half = DetectorConfig(det_a.efficiency / 2, det_a.dark_count_prob)
        p = forward_probabilities(PhotonStatistics.from_p1_p2(0.6, 1e-4), half, det_b).p_a
        assert _freq_ok(s.totals.n_a, s.totals.n_t, p, 4.0)
