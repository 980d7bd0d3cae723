import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from canmasq.attacks import (
    GroundTruth,
    InjectionSpec,
    benign_stream,
    default_category,
    inject,
    read_ground_truth,
    write_ground_truth,
)
from canmasq.ingest import SignalMatrix


def matrix(n=1000, seed=0):
    data = np.random.default_rng(seed).normal(size=(n, 3))
    return SignalMatrix(["a", "b", "c"], data, 100.0, 0.0)


class TestInject:
    def test_constant_max_replaces_101_samples(self):
        m = matrix()
        out, truth = inject(m, InjectionSpec("b", 1.0, 2.0, "constant-max"), "cap_1")
        changed = np.flatnonzero(out.data[:, 1] != m.data[:, 1])
        assert changed.tolist() == list(range(100, 201))
        assert np.all(out.data[100:201, 1] == m.data[:, 1].max())
        assert truth.intervals == [(1.0, 2.0)]
        assert truth.capture == "cap_1" and truth.category == "cap"

    def test_constant_max_uses_given_training_max(self):
        out, _ = inject(matrix(), InjectionSpec("a", 1.0, 2.0, "constant-max", value=42.0))
        assert np.all(out.data[100:201, 0] == 42.0)

    def test_constant_value_equal_to_current_is_noop(self):
        data = np.ones((300, 2))
        m = SignalMatrix(["a", "b"], data)
        out, _ = inject(m, InjectionSpec("a", 0.5, 1.5, "constant-value", value=1.0))
        assert np.array_equal(out.data, data)

    def test_decorrelate_is_deterministic_and_bounded(self):
        m = matrix()
        spec = InjectionSpec("c", 2.0, 7.0, "decorrelate", seed=5)
        first, _ = inject(m, spec)
        second, _ = inject(m, spec)
        assert np.array_equal(first.data, second.data)
        seg = first.data[200:701, 2]
        assert seg.min() >= m.data[:, 2].min() and seg.max() <= m.data[:, 2].max()
        assert abs(np.corrcoef(seg, m.data[200:701, 2])[0, 1]) < 0.5

    def test_different_seeds_differ(self):
        m = matrix()
        a, _ = inject(m, InjectionSpec("c", 2.0, 7.0, seed=1))
        b, _ = inject(m, InjectionSpec("c", 2.0, 7.0, seed=2))
        assert not np.array_equal(a.data, b.data)

    @settings(max_examples=40)
    @given(st.floats(0.0, 8.0), st.floats(0.01, 1.9), st.sampled_from(["constant-max", "decorrelate"]))
    def test_outside_interval_untouched(self, t0, width, mode):
        m = matrix()
        out, _ = inject(m, InjectionSpec("a", t0, t0 + width, mode, seed=3))
        assert out.data.shape == m.data.shape and out.columns == m.columns
        inside = (m.times >= t0 - 1e-9) & (m.times <= t0 + width + 1e-9)
        assert np.array_equal(out.data[~inside], m.data[~inside])
        assert np.array_equal(out.data[:, 1:], m.data[:, 1:])

    def test_input_not_modified(self):
        m = matrix()
        before = m.data.copy()
        inject(m, InjectionSpec("a", 1.0, 2.0, "constant-max"))
        assert np.array_equal(m.data, before)

    def test_errors(self):
        with pytest.raises(KeyError):
            inject(matrix(), InjectionSpec("zz", 1.0, 2.0))
        with pytest.raises(ValueError):
            inject(matrix(), InjectionSpec("a", 5.0, 20.0))
        with pytest.raises(ValueError):
            InjectionSpec("a", 2.0, 1.0)
        with pytest.raises(ValueError):
            InjectionSpec("a", 1.0, 2.0, "constant-value")
        with pytest.raises(ValueError):
            InjectionSpec("a", 1.0, 2.0, "flood")


class TestGroundTruth:
    def test_csv_round_trip(self, tmp_path):
        truths = [
            GroundTruth("correlated_signal_1", [(9.19, 30.05)]),
            GroundTruth("max_engine_2", [(1.5, 2.5), (10.0, 12.25)]),
        ]
        write_ground_truth(tmp_path / "gt.csv", truths)
        back = read_ground_truth(tmp_path / "gt.csv")
        assert back["correlated_signal_1"].intervals == [(9.19, 30.05)]
        assert back["max_engine_2"].intervals == [(1.5, 2.5), (10.0, 12.25)]
        assert back["max_engine_2"].category == "max_engine"

    def test_overlapping_intervals_rejected(self):
        with pytest.raises(ValueError):
            GroundTruth("x", [(0.0, 2.0), (1.0, 3.0)])

    def test_missing_columns(self, tmp_path):
        (tmp_path / "gt.csv").write_text("capture,start\nx,1\n")
        with pytest.raises(ValueError):
            read_ground_truth(tmp_path / "gt.csv")

    def test_default_category(self):
        assert default_category("light_off_3") == "light_off"
        assert default_category("accelerator") == "accelerator"


def test_benign_stream_shape_and_determinism():
    a = benign_stream(500, 3)
    b = benign_stream(500, 3)
    assert a.n_signals == 10 and a.n_samples == 500
    assert np.array_equal(a.data, b.data)
    assert not np.array_equal(a.data, benign_stream(500, 4).data)
