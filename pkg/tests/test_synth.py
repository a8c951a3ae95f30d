import numpy as np
import pytest

from lwfsmc.errors import ModelValidationError
from lwfsmc.fsmc import IntervalModel, TransitionMatrix, estimate_matrix
from lwfsmc.quantizer import ThresholdSet
from lwfsmc.synth import GroundTruthProfile, generate_markov_trace, generate_trace
from lwfsmc.trace import TrackGeometry, partition_by_intervals

from oracles import representatives_for

GEO = TrackGeometry(section_length_m=300.0, carrier_hz=2.412e9)


def interval_model(matrix, state_probs, thresholds=None, first_rep=36.5):
    g = np.asarray(thresholds if thresholds is not None
                   else [35.0, 37.3494, 38.7291, 40.0784, 42.0])
    ts = ThresholdSet(g, representatives_for(g, first_rep), g.size - 1)
    return IntervalModel(0, (0.0, 300.0), ts, np.asarray(state_probs, float),
                         TransitionMatrix(g.size - 1, np.asarray(matrix, float)), 10)


class TestGenerateTrace:
    def test_noiseless_flat_profile(self):
        prof = GroundTruthProfile(40.0, 0.0, 0.0, seed=1)
        trace = generate_trace(prof, GEO, 10.0, 0.05)
        assert np.all(trace.snr_db == 40.0)

    def test_noiseless_slope_hits_target_at_section_end(self):
        prof = GroundTruthProfile(49.0, -0.03, 0.0, seed=1)
        assert abs(prof.mean_at(300.0) - 40.0) < 1e-12
        trace = generate_trace(prof, GEO, 10.0, 0.005)
        last = trace.positions_m[-1]
        assert abs(trace.snr_db[-1] - (49.0 - 0.03 * last)) < 1e-12

    def test_same_seed_identical_different_seed_differs(self):
        prof_a = GroundTruthProfile(40.0, 0.0, 2.0, seed=7)
        prof_b = GroundTruthProfile(40.0, 0.0, 2.0, seed=8)
        t1 = generate_trace(prof_a, GEO, 10.0, 0.01, correlation=0.9)
        t2 = generate_trace(prof_a, GEO, 10.0, 0.01, correlation=0.9)
        t3 = generate_trace(prof_b, GEO, 10.0, 0.01, correlation=0.9)
        assert np.array_equal(t1.snr_db, t2.snr_db)
        assert np.any(t1.snr_db != t3.snr_db)

    def test_invalid_arguments(self):
        prof = GroundTruthProfile(40.0, 0.0, 1.0, seed=1)
        with pytest.raises(ValueError):
            generate_trace(prof, GEO, 0.0, 0.01)
        with pytest.raises(ValueError):
            generate_trace(prof, GEO, 10.0, 0.0)
        with pytest.raises(ValueError):
            generate_trace(prof, GEO, 10.0, 0.01, correlation=1.0)
        with pytest.raises(ValueError):
            GroundTruthProfile(40.0, 0.0, -1.0, seed=1)

    def test_ar1_stationary_statistics(self):
        prof = GroundTruthProfile(0.0, 0.0, 2.0, seed=123)
        trace = generate_trace(prof, GEO, 10.0, 0.0005, correlation=0.9)
        x = trace.snr_db
        assert abs(np.std(x) - 2.0) < 0.1
        lag1 = np.corrcoef(x[:-1], x[1:])[0, 1]
        assert abs(lag1 - 0.9) < 0.02

    def test_interval_means_track_profile_midpoints(self):
        prof = GroundTruthProfile(49.0, -0.03, 0.0, seed=1)
        step = 10.0 * 0.005
        trace = generate_trace(prof, GEO, 10.0, 0.005)
        for seg in partition_by_intervals(trace, 25.0, GEO):
            mid = (seg.index + 0.5) * 25.0
            assert abs(np.mean(seg.snr_db) - prof.mean_at(mid)) <= 0.03 * step / 2 + 1e-12


class TestGenerateMarkovTrace:
    def test_identity_matrix_holds_state(self):
        iv = interval_model(np.eye(4), [0.0, 1.0, 0.0, 0.0])
        states = generate_markov_trace(iv, 50, seed=3)
        assert np.all(states == 2)

    def test_two_state_flip_alternates(self):
        iv = interval_model(np.array([[0.0, 1.0], [1.0, 0.0]]), [1.0, 0.0],
                            thresholds=[35.0, 38.0, 42.0])
        states = generate_markov_trace(iv, 8, seed=5)
        assert states.tolist() == [1, 2, 1, 2, 1, 2, 1, 2]

    def test_deterministic_given_seed(self):
        iv = interval_model(np.array([[0.5, 0.5, 0, 0], [0.3, 0.4, 0.3, 0],
                                      [0, 0.3, 0.4, 0.3], [0, 0, 0.5, 0.5]]),
                            [0.25, 0.25, 0.25, 0.25])
        a = generate_markov_trace(iv, 1000, seed=11)
        b = generate_markov_trace(iv, 1000, seed=11)
        assert np.array_equal(a, b)

    def test_only_reachable_states_visited(self):
        iv = interval_model(np.eye(4), [1.0, 0.0, 0.0, 0.0])
        states = generate_markov_trace(iv, 200, seed=9)
        assert set(states.tolist()) == {1}

    def test_recovers_generating_matrix(self):
        rows = np.array([[0.736, 0.263, 0.0, 0.0],
                         [0.253, 0.503, 0.243, 0.0],
                         [0.0, 0.210, 0.587, 0.202],
                         [0.0, 0.0, 1.0, 0.0]])
        p = rows / rows.sum(axis=1, keepdims=True)
        iv = interval_model(p, [0.25, 0.25, 0.25, 0.25])
        states = generate_markov_trace(iv, 100_000, seed=7)
        est, _ = estimate_matrix(states, 4)
        assert np.max(np.abs(est.p - p)) < 0.01

    def test_invalid_inputs(self):
        iv = interval_model(np.eye(4), [1.0, 0.0, 0.0, 0.0])
        with pytest.raises(ValueError):
            generate_markov_trace(iv, 0, seed=1)
        bad = np.eye(4)
        bad[0, 0] = 0.5  # rows no longer sum to one
        with pytest.raises(ModelValidationError):
            generate_markov_trace(
                type("M", (), {"matrix": type("P", (), {"p": bad})(),
                               "state_probs": np.full(4, 0.25)})(), 10, seed=1)
