import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from canmasq import stats
from canmasq.attacks import GroundTruth, InjectionSpec, inject
from canmasq.detectors import DetectorConfig
from canmasq.evaluation import (
    COMPUTED,
    SKIPPED,
    UNDEFINED_AUC,
    Capture,
    HeatmapReport,
    UndefinedAUCError,
    auc_roc,
    default_grid,
    evaluate_cell,
    format_summary_markdown,
    hyperparam_search_moriano,
    label_windows,
    measure_ttw,
    summarize,
    sweep,
    time_detection,
)
from canmasq.ingest import SignalMatrix
from canmasq.windowing import WindowSpec, WindowView, enumerate_windows


def view(start, end):
    return WindowView(1, int(start * 100), int(end * 100), start, end)


def pair_count_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    total = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return total / (len(pos) * len(neg))


class TestLabels:
    truth = GroundTruth("correlated_signal_1", [(9.19, 30.05)])

    def test_window_before_interval(self):
        assert label_windows([view(0.0, 4.0)], self.truth).tolist() == [0]

    def test_window_inside_interval(self):
        assert label_windows([view(10.0, 14.0)], self.truth).tolist() == [1]

    def test_window_abutting_interval_end(self):
        assert label_windows([view(30.05, 34.05)], self.truth).tolist() == [0]

    def test_window_ending_at_interval_start(self):
        assert label_windows([view(5.19, 9.19)], self.truth).tolist() == [0]

    def test_partial_overlap(self):
        assert label_windows([view(30.0, 34.0), view(8.0, 9.2)], self.truth).tolist() == [1, 1]

    def test_matches_brute_force_sample_overlap(self):
        # a window is positive iff one of its own sample times lies in [t0, t1)
        truth = GroundTruth("c", [(3.005, 7.005), (12.005, 12.505)])
        views = enumerate_windows(2000, WindowSpec(150, 40))
        labels = label_windows(views, truth)
        for v, lab in zip(views, labels):
            times = np.arange(v.start_sample, v.end_sample) / 100.0
            hit = any(((times >= a) & (times < b)).any() for a, b in truth.intervals)
            assert bool(lab) == hit

    @settings(max_examples=50)
    @given(st.integers(0, 500), st.integers(2, 200), st.integers(1, 200))
    def test_monotone_in_omega(self, start, omega, extra):
        truth = GroundTruth("c", [(2.0, 3.0)])
        small = WindowView(1, start, start + omega, start / 100, (start + omega) / 100)
        large = WindowView(1, start, start + omega + extra, start / 100, (start + omega + extra) / 100)
        assert label_windows([large], truth)[0] >= label_windows([small], truth)[0]


class TestAuc:
    def test_perfect(self):
        assert auc_roc([0.9, 0.8, 0.3, 0.2], [1, 1, 0, 0]) == 1.0

    def test_pair_counting_example(self):
        assert auc_roc([0.7, 0.4, 0.5, 0.1], [1, 1, 0, 0]) == 0.75

    def test_all_ties(self):
        assert auc_roc([0.3] * 6, [1, 0, 1, 0, 0, 1]) == 0.5

    def test_single_class(self):
        with pytest.raises(UndefinedAUCError):
            auc_roc([0.1, 0.2], [1, 1])

    @settings(max_examples=100)
    @given(st.lists(st.tuples(st.integers(0, 5), st.booleans()), min_size=2, max_size=40))
    def test_matches_pair_counting_and_mann_whitney(self, rows):
        scores = [float(s) for s, _ in rows]
        labels = [l for _, l in rows]
        if all(labels) or not any(labels):
            return
        auc = auc_roc(scores, labels)
        assert auc == pytest.approx(pair_count_auc(scores, labels), abs=1e-12)
        pos = [s for s, l in rows if l]
        neg = [s for s, l in rows if not l]
        assert auc == pytest.approx(stats.mann_whitney_u(pos, neg).u / (len(pos) * len(neg)), abs=1e-12)
        assert auc_roc([-s for s in scores], labels) == pytest.approx(1 - auc, abs=1e-12)

    def test_agrees_with_sklearn(self):
        sklearn_metrics = pytest.importorskip("sklearn.metrics")
        rng = np.random.default_rng(0)
        scores, labels = rng.random(300).round(2), rng.integers(0, 2, 300)
        assert auc_roc(scores, labels) == pytest.approx(sklearn_metrics.roc_auc_score(labels, scores), abs=1e-12)


class TestTtw:
    def test_mean_equals_total_over_count(self):
        durations = [1_000_000, 2_000_000, 1_500_000, 3_000_000, 2_500_000, 1_200_000, 900_000]
        t = measure_ttw(durations)
        assert t.count == 7
        assert t.mean_ms == pytest.approx(t.ratio_ms, rel=1e-12)
        assert t.min_ms <= t.median_ms <= t.max_ms
        assert t.total_ms == pytest.approx(12.1)

    def test_zero_windows(self):
        with pytest.raises(ValueError):
            measure_ttw([])


def toy_setup(seed=0, n_train=3000, n_test=2000):
    rng = np.random.default_rng(seed)

    def stream(n):
        base = rng.normal(size=(n, 2))
        cols = [base[:, k // 2] + 0.4 * rng.normal(size=n) for k in range(4)]
        return SignalMatrix(["a", "b", "c", "d"], np.column_stack(cols))

    train = stream(n_train)
    captures = []
    for k in range(2):
        attacked, truth = inject(stream(n_test), InjectionSpec("a", 5.005, 12.005, seed=k), f"toy_{k + 1}")
        captures.append(Capture(truth.capture, attacked, truth))
    return train, captures


class TestSweep:
    def test_default_grid_has_180_cells(self):
        grid = default_grid()
        assert len(grid) == 180
        assert len(set(grid)) == 180
        assert all(w % 50 == 0 and d % 10 == 0 and d <= w for w, d in grid)

    def test_small_sweep(self):
        train, caps = toy_setup()
        grid = [(100, 50), (200, 100), (200, 200)]
        rep = sweep(train, caps, DetectorConfig("corr-correlation"), grid)
        assert rep.category == "toy" and len(rep.cells) == 3
        for cell in rep.cells:
            assert cell.status == COMPUTED
            assert set(cell.auc_per_capture) == {"toy_1", "toy_2"}
            assert cell.auc == pytest.approx(np.mean(list(cell.auc_per_capture.values())))
            assert 0.0 < cell.positive_fraction < 1.0
            assert cell.ttw_min <= cell.ttw_median <= cell.ttw_max
        s = rep.summary
        assert s["max"] == max(c.auc for c in rep.cells)
        assert s["min"] == min(c.auc for c in rep.cells)
        assert tuple(s["argmax"]) in {(c.omega, c.delta) for c in rep.cells if c.auc == s["max"]}
        assert s["std"] == pytest.approx(np.std([c.auc for c in rep.cells]))

    def test_positive_fraction_is_exact(self):
        train, caps = toy_setup()
        cell = evaluate_cell(train, caps[:1], DetectorConfig("corr-distribution"), WindowSpec(200, 100))
        views = enumerate_windows(caps[0].matrix.n_samples, WindowSpec(200, 100))
        expected = sum(1 for v in views if v.start_time < 12.005 and v.end_time > 5.005) / len(views)
        assert cell.positive_fraction == expected
        assert cell.window_count == len(views)

    def test_ganesan_refit_per_cell_and_workers_agree(self):
        train, caps = toy_setup()
        grid = [(100, 100), (200, 100)]
        one = sweep(train, caps, DetectorConfig("ganesan17"), grid, workers=1)
        two = sweep(train, caps, DetectorConfig("ganesan17"), grid, workers=2)
        assert [c.auc for c in one.cells] == [c.auc for c in two.cells]

    def test_skipped_and_undefined_cells(self):
        train, caps = toy_setup()
        short = Capture("short_1", caps[0].matrix.select(caps[0].matrix.columns), GroundTruth("short_1", []))
        rep = sweep(train, [short], DetectorConfig("corr-distribution"), [(100, 50)])
        assert rep.cells[0].status == UNDEFINED_AUC and rep.cells[0].n_undefined == 1
        tiny = SignalMatrix(train.columns, train.data[:80])
        cell = evaluate_cell(train, [Capture("t", tiny, GroundTruth("t", [(0.1, 0.2)]))], DetectorConfig("moriano22"), WindowSpec(100, 50))
        assert cell.status == SKIPPED
        summary = summarize([cell, rep.cells[0]])
        assert summary["n_skipped"] == 1 and summary["n_undefined"] == 1 and "mean" not in summary

    def test_report_round_trip(self, tmp_path):
        train, caps = toy_setup()
        rep = sweep(train, caps, DetectorConfig("moriano22"), [(100, 50), (150, 150)])
        rep.save_json(tmp_path / "r.json")
        back = HeatmapReport.load_json(tmp_path / "r.json")
        assert back.summary == rep.summary
        rep.save_csv(tmp_path / "r.csv")
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert lines[0].startswith("omega,delta,status,auc,ttw_mean")
        assert len(lines) == 3
        payload = json.loads((tmp_path / "r.json").read_text())
        assert payload["summary"]["max"] == max(c["auc"] for c in payload["cells"])

    def test_summary_table(self):
        train, caps = toy_setup()
        reps = [sweep(train, caps, DetectorConfig(m), [(100, 50), (200, 100)]) for m in ("corr-distribution", "moriano22")]
        text = format_summary_markdown(reps)
        assert "| toy |" in text and "corr-distribution" in text and "moriano22" in text
        assert "mean max" in text


def test_hyperparameter_grid():
    train, caps = toy_setup(n_train=2000, n_test=1500)
    rep = hyperparam_search_moriano(train, caps, 200, 100, r_grid=(-5.0, 3.0), alpha_grid=(0.1, 0.8))
    assert len(rep.auc) == 2 and len(rep.auc[0]) == 2
    assert rep.default_r == -5.0 and rep.default_alpha == 0.9
    best = rep.best
    assert best[2] == max(v for row in rep.auc for v in row)
    assert rep.change == pytest.approx(best[2] - rep.default_auc)


def test_default_hyperparameter_grid_size():
    from canmasq.evaluation import DEFAULT_ALPHA_GRID, DEFAULT_R_GRID

    assert len(DEFAULT_R_GRID) * len(DEFAULT_ALPHA_GRID) == 40
    assert 0.9 not in DEFAULT_ALPHA_GRID
    assert DEFAULT_ALPHA_GRID == (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8)


def test_time_detection_best_of_repeats():
    train, caps = toy_setup()
    from canmasq.detectors import fit

    model = fit(train, DetectorConfig("corr-distribution"))
    t = time_detection(model, caps[0].matrix, WindowSpec(200, 100), repeat=3)
    assert len(t.repeat_mean_ms) == 3
    assert t.mean_ms == pytest.approx(min(t.repeat_mean_ms), rel=1e-9)
