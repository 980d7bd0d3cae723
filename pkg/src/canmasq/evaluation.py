"""Window labeling, AUC-ROC, per-window latency and (omega, delta) sweeps."""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import stats
from .attacks import GroundTruth
from .detectors import DetectorConfig, TrainedModel, detect, fit
from .ingest import SignalMatrix
from .windowing import WindowSpec, WindowView, enumerate_windows

DEFAULT_OMEGAS = tuple(range(50, 401, 50))
DEFAULT_R_GRID = (-5.0, -3.0, -1.0, 1.0, 3.0)
DEFAULT_ALPHA_GRID = tuple(round(0.1 * k, 1) for k in range(1, 9))

COMPUTED = "computed"
SKIPPED = "skipped"
UNDEFINED_AUC = "undefined-auc"


class UndefinedAUCError(ValueError):
    """AUC needs at least one positive and one negative window."""


def default_grid(omegas: Iterable[int] = DEFAULT_OMEGAS, delta_step: int = 10) -> list[tuple[int, int]]:
    """Every (omega, delta) with delta running from ``delta_step`` to omega."""
    return [(w, d) for w in omegas for d in range(delta_step, w + 1, delta_step)]


@dataclass
class Capture:
    name: str
    matrix: SignalMatrix
    truth: GroundTruth

    @property
    def category(self) -> str:
        return self.truth.category


def label_windows(views: Sequence[WindowView], truth: GroundTruth) -> np.ndarray:
    """1 for windows whose span [start, end) overlaps an injection interval [t0, t1)."""
    labels = np.zeros(len(views), dtype=int)
    for k, view in enumerate(views):
        for t0, t1 in truth.intervals:
            if view.start_time < t1 and view.end_time > t0:
                labels[k] = 1
                break
    return labels


def auc_roc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative (ties count 1/2)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUCError(f"need both classes, got {n_pos} positive / {n_neg} negative")
    ranks = stats.midranks(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass(frozen=True)
class TTWStats:
    """Per-window detection time in milliseconds."""

    mean_ms: float
    std_ms: float
    median_ms: float
    min_ms: float
    max_ms: float
    total_ms: float
    count: int
    repeat_mean_ms: tuple[float, ...] = ()

    @property
    def ratio_ms(self) -> float:
        """Total detection time over the window count."""
        return self.total_ms / self.count


def measure_ttw(durations_ns) -> TTWStats:
    d = np.asarray(durations_ns, dtype=float) / 1e6
    if d.size == 0:
        raise ValueError("no windows were timed")
    return TTWStats(
        float(d.mean()),
        float(d.std()),
        float(np.median(d)),
        float(d.min()),
        float(d.max()),
        float(d.sum()),
        int(d.size),
    )


def time_detection(model: TrainedModel, matrix: SignalMatrix, spec: WindowSpec, repeat: int = 1) -> TTWStats:
    """Time every window, ``repeat`` times over; stats come from the fastest pass.

    The per-pass means are kept so the run-to-run spread stays visible.
    """
    runs = [[s.duration_ns for s in detect(model, matrix, spec)] for _ in range(max(1, repeat))]
    totals = [sum(r) for r in runs]
    best = runs[int(np.argmin(totals))]
    ttw = measure_ttw(best)
    return TTWStats(**{**asdict(ttw), "repeat_mean_ms": tuple(t / len(best) / 1e6 for t in totals)})


@dataclass
class EvalCell:
    omega: int
    delta: int
    status: str
    auc: float | None = None
    auc_per_capture: dict[str, float | None] = field(default_factory=dict)
    ttw_mean: float | None = None
    ttw_std: float | None = None
    ttw_median: float | None = None
    ttw_min: float | None = None
    ttw_max: float | None = None
    window_count: int = 0
    positive_fraction: float | None = None
    n_undefined: int = 0


def evaluate_cell(
    train: SignalMatrix,
    captures: Sequence[Capture],
    config: DetectorConfig,
    spec: WindowSpec,
    model: TrainedModel | None = None,
) -> EvalCell:
    """Score all captures at one (omega, delta); the cell AUC is the mean over captures.

    ``model`` may be passed for detectors whose fit does not depend on the window spec.
    """
    cell = EvalCell(spec.omega, spec.delta, SKIPPED)
    if train.n_samples < spec.omega or any(c.matrix.n_samples < spec.omega for c in captures):
        return cell
    if model is None or config.method == "ganesan17":
        model = fit(train, config, spec)
    durations: list[int] = []
    positives = 0
    aucs = []
    for cap in captures:
        views = enumerate_windows(cap.matrix.n_samples, spec, cap.matrix.rate_hz, cap.matrix.start_time)
        scored = list(detect(model, cap.matrix, spec))
        scores = np.array([s.score for s in scored])
        durations.extend(s.duration_ns for s in scored)
        labels = label_windows(views, cap.truth)
        positives += int(labels.sum())
        try:
            value = auc_roc(scores, labels)
        except UndefinedAUCError:
            value = None
            cell.n_undefined += 1
        cell.auc_per_capture[cap.name] = value
        if value is not None:
            aucs.append(value)
    ttw = measure_ttw(durations)
    cell.window_count = len(durations)
    cell.positive_fraction = positives / len(durations)
    cell.ttw_mean, cell.ttw_std, cell.ttw_median = ttw.mean_ms, ttw.std_ms, ttw.median_ms
    cell.ttw_min, cell.ttw_max = ttw.min_ms, ttw.max_ms
    if aucs:
        cell.status = COMPUTED
        cell.auc = float(np.mean(aucs))
    else:
        cell.status = UNDEFINED_AUC
    return cell


def summarize(cells: Sequence[EvalCell], metric: str = "auc") -> dict:
    """Mean, std, median, min and max of one cell metric over computed cells."""
    usable = [c for c in cells if c.status == COMPUTED and getattr(c, metric) is not None]
    out = {
        "metric": metric,
        "n_cells": len(cells),
        "n_computed": sum(c.status == COMPUTED for c in cells),
        "n_skipped": sum(c.status == SKIPPED for c in cells),
        "n_undefined": sum(c.status == UNDEFINED_AUC for c in cells),
    }
    if not usable:
        return out
    values = np.array([getattr(c, metric) for c in usable])
    lo, hi = int(np.argmin(values)), int(np.argmax(values))
    out.update(
        mean=float(values.mean()),
        std=float(values.std()),
        median=float(np.median(values)),
        min=float(values[lo]),
        argmin=[usable[lo].omega, usable[lo].delta],
        max=float(values[hi]),
        argmax=[usable[hi].omega, usable[hi].delta],
    )
    return out


@dataclass
class HeatmapReport:
    detector: str
    category: str
    captures: list[str]
    cells: list[EvalCell]
    config: dict = field(default_factory=dict)
    failures: list[tuple[int, int, str]] = field(default_factory=list)

    @property
    def summary(self) -> dict:
        return summarize(self.cells, "auc")

    @property
    def ttw_summary(self) -> dict:
        return summarize(self.cells, "ttw_mean")

    def cell(self, omega: int, delta: int) -> EvalCell:
        for c in self.cells:
            if c.omega == omega and c.delta == delta:
                return c
        raise KeyError((omega, delta))

    def to_dict(self) -> dict:
        return {
            "detector": self.detector,
            "category": self.category,
            "captures": list(self.captures),
            "config": self.config,
            "summary": self.summary,
            "ttw_summary": self.ttw_summary,
            "cells": [asdict(c) for c in self.cells],
            "failures": [list(f) for f in self.failures],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "HeatmapReport":
        return cls(
            payload["detector"],
            payload["category"],
            list(payload["captures"]),
            [EvalCell(**c) for c in payload["cells"]],
            payload.get("config", {}),
            [tuple(f) for f in payload.get("failures", [])],
        )

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load_json(cls, path) -> "HeatmapReport":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def save_csv(self, path) -> None:
        fields = [
            "omega", "delta", "status", "auc", "ttw_mean", "ttw_std", "ttw_median",
            "ttw_min", "ttw_max", "window_count", "positive_fraction", "n_undefined",
        ]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(fields)
            for c in self.cells:
                writer.writerow(["" if getattr(c, f) is None else getattr(c, f) for f in fields])


# process-pool worker state, set once per worker by _init_worker
_WORKER: dict = {}


def _init_worker(train, captures, config, model):
    _WORKER.update(train=train, captures=captures, config=config, model=model)


def _safe_cell(train, captures, config, grid_point, model) -> EvalCell | tuple[int, int, str]:
    try:
        return evaluate_cell(train, captures, config, WindowSpec(*grid_point), model)
    except Exception as exc:  # noqa: BLE001 - reported per cell, the sweep carries on
        return (grid_point[0], grid_point[1], f"{type(exc).__name__}: {exc}")


def _worker_cell(grid_point: tuple[int, int]):
    w = _WORKER
    return _safe_cell(w["train"], w["captures"], w["config"], grid_point, w["model"])


def _run_cells(train, captures, config, grid, workers: int):
    model = None if config.method == "ganesan17" else fit(train, config)
    if workers <= 1 or len(grid) <= 1:
        results = [_safe_cell(train, captures, config, g, model) for g in grid]
    else:
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker, initargs=(train, list(captures), config, model)
        ) as pool:
            results = list(pool.map(_worker_cell, grid, chunksize=max(1, len(grid) // (4 * workers))))
    cells = [r for r in results if isinstance(r, EvalCell)]
    failures = [r for r in results if not isinstance(r, EvalCell)]
    return cells, failures


def default_workers() -> int:
    env = os.environ.get("CANMASQ_WORKERS")
    if env:
        return max(1, int(env))
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)


def sweep(
    train: SignalMatrix,
    captures: Sequence[Capture],
    config: DetectorConfig,
    grid: Sequence[tuple[int, int]] | None = None,
    *,
    workers: int = 1,
    category: str | None = None,
) -> HeatmapReport:
    """AUC-ROC and TTW for every (omega, delta) cell over one attack category."""
    if not captures:
        raise ValueError("no captures to evaluate")
    grid = default_grid() if grid is None else list(grid)
    cells, failures = _run_cells(train, captures, config, grid, workers)
    if category is None:
        category = captures[0].category
    return HeatmapReport(config.method, category, [c.name for c in captures], cells, config.to_dict(), failures)


def group_by_category(captures: Sequence[Capture]) -> dict[str, list[Capture]]:
    groups: dict[str, list[Capture]] = {}
    for cap in captures:
        groups.setdefault(cap.category, []).append(cap)
    return groups


@dataclass
class HyperparamReport:
    category: str
    omega: int
    delta: int
    r_grid: list[float]
    alpha_grid: list[float]
    auc: list[list[float | None]]
    default_r: float
    default_alpha: float
    default_auc: float | None

    @property
    def best(self) -> tuple[float, float, float] | None:
        best = None
        for i, r in enumerate(self.r_grid):
            for j, a in enumerate(self.alpha_grid):
                v = self.auc[i][j]
                if v is not None and (best is None or v > best[2]):
                    best = (r, a, v)
        return best

    @property
    def change(self) -> float | None:
        best = self.best
        if best is None or self.default_auc is None:
            return None
        return best[2] - self.default_auc

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload["best"] = self.best
        payload["change"] = self.change
        return payload

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    def save_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["r", "alpha", "auc", "is_default"])
            for i, r in enumerate(self.r_grid):
                for j, a in enumerate(self.alpha_grid):
                    v = self.auc[i][j]
                    writer.writerow([r, a, "" if v is None else v, 0])
            writer.writerow([self.default_r, self.default_alpha, "" if self.default_auc is None else self.default_auc, 1])


def _cell_auc(train, captures, config, spec) -> float | None:
    cell = evaluate_cell(train, captures, config, spec)
    return cell.auc if cell.status == COMPUTED else None


def hyperparam_search_moriano(
    train: SignalMatrix,
    captures: Sequence[Capture],
    omega: int,
    delta: int,
    r_grid: Sequence[float] = DEFAULT_R_GRID,
    alpha_grid: Sequence[float] = DEFAULT_ALPHA_GRID,
    *,
    default: DetectorConfig | None = None,
) -> HyperparamReport:
    """AUC over an (r, alpha) grid at one window setting, plus the default configuration."""
    default = default or DetectorConfig("moriano22")
    spec = WindowSpec(omega, delta)
    grid = [
        [_cell_auc(train, captures, DetectorConfig("moriano22", r=r, alpha=a), spec) for a in alpha_grid]
        for r in r_grid
    ]
    return HyperparamReport(
        captures[0].category if captures else "",
        omega,
        delta,
        [float(r) for r in r_grid],
        [float(a) for a in alpha_grid],
        grid,
        default.r,
        default.alpha,
        _cell_auc(train, captures, default, spec),
    )


def _fmt(v: float | None) -> str:
    return "nan" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.2f}"


def summary_table(reports: Sequence[HeatmapReport], metric: str = "auc") -> list[dict]:
    """Category-by-detector summary rows (one row per category and detector)."""
    rows = []
    for rep in reports:
        s = summarize(rep.cells, metric)
        rows.append({"category": rep.category, "detector": rep.detector, **s})
    return rows


def format_summary_markdown(reports: Sequence[HeatmapReport], metric: str = "auc") -> str:
    """Markdown table with categories as rows and detectors as columns."""
    rows = summary_table(reports, metric)
    detectors = list(dict.fromkeys(r["detector"] for r in rows))
    categories = list(dict.fromkeys(r["category"] for r in rows))
    lookup = {(r["category"], r["detector"]): r for r in rows}
    extreme = "max" if metric == "auc" else "min"
    lines = [
        "| category | " + " | ".join(detectors) + f" | mean {extreme} | std {extreme} |",
        "|" + "---|" * (len(detectors) + 3),
    ]
    col_extremes: dict[str, list[float]] = {d: [] for d in detectors}
    for cat in categories:
        cells, row_extremes = [], []
        for det in detectors:
            r = lookup.get((cat, det))
            if r is None or "mean" not in r:
                cells.append("n/a")
                continue
            cells.append(
                f"μ={_fmt(r['mean'])} σ={_fmt(r['std'])} η={_fmt(r['median'])} "
                f"min={_fmt(r['min'])} {tuple(r['argmin'])} max={_fmt(r['max'])} {tuple(r['argmax'])}"
            )
            row_extremes.append(r[extreme])
            col_extremes[det].append(r[extreme])
        lines.append(
            f"| {cat} | " + " | ".join(cells)
            + f" | {_fmt(float(np.mean(row_extremes)) if row_extremes else None)}"
            + f" | {_fmt(float(np.std(row_extremes)) if row_extremes else None)} |"
        )
    lines.append(
        f"| mean {extreme} | "
        + " | ".join(_fmt(float(np.mean(v)) if v else None) for v in col_extremes.values())
        + " | | |"
    )
    lines.append(
        f"| std {extreme} | "
        + " | ".join(_fmt(float(np.std(v)) if v else None) for v in col_extremes.values())
        + " | | |"
    )
    return "\n".join(lines) + "\n"
