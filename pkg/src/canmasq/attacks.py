"""Synthetic benign streams and labeled masquerade injections.

A masquerade attacker keeps the original frame timing and only rewrites the
payload, so an injection replaces values of one signal inside an interval
and leaves every other sample and the time grid untouched.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .ingest import SignalMatrix

MODES = ("constant-max", "constant-value", "decorrelate")


@dataclass(frozen=True)
class InjectionSpec:
    """``value`` is the injected constant for constant-value; for constant-max it
    overrides the capture's own maximum (pass the training maximum here)."""

    signal_id: str
    t_start: float
    t_end: float
    mode: str = "decorrelate"
    value: float | None = None
    seed: int = 0
    step_scale: float = 0.05

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown injection mode {self.mode!r}; expected one of {MODES}")
        if not self.t_start < self.t_end:
            raise ValueError(f"empty interval [{self.t_start}, {self.t_end}]")
        if self.mode == "constant-value" and self.value is None:
            raise ValueError("constant-value injection needs a value")


@dataclass
class GroundTruth:
    capture: str
    intervals: list[tuple[float, float]] = field(default_factory=list)
    category: str | None = None

    def __post_init__(self):
        if self.category is None:
            self.category = default_category(self.capture)
        spans = sorted(self.intervals)
        for (a0, a1), (b0, _) in zip(spans, spans[1:]):
            if b0 < a1:
                raise ValueError(f"{self.capture}: overlapping injection intervals")
        self.intervals = [(float(a), float(b)) for a, b in spans]


def default_category(capture: str) -> str:
    """Capture name without a trailing ``_<number>`` replicate suffix."""
    return re.sub(r"_\d+$", "", capture)


def write_ground_truth(path, truths: list[GroundTruth]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["capture", "t_start", "t_end", "category"])
        for gt in truths:
            for t0, t1 in gt.intervals:
                writer.writerow([gt.capture, repr(t0), repr(t1), gt.category])


def read_ground_truth(path) -> dict[str, GroundTruth]:
    truths: dict[str, GroundTruth] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"capture", "t_start", "t_end"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: ground truth lacks columns {sorted(missing)}")
        rows: dict[str, list] = {}
        categories: dict[str, str | None] = {}
        for row in reader:
            name = row["capture"].strip()
            rows.setdefault(name, []).append((float(row["t_start"]), float(row["t_end"])))
            categories[name] = (row.get("category") or "").strip() or None
    for name, spans in rows.items():
        truths[name] = GroundTruth(name, spans, categories[name])
    return truths


def _interval_rows(matrix: SignalMatrix, t_start: float, t_end: float) -> tuple[int, int]:
    """Sample indices [lo, hi) whose time stamps fall inside [t_start, t_end]."""
    rel0 = (t_start - matrix.start_time) * matrix.rate_hz
    rel1 = (t_end - matrix.start_time) * matrix.rate_hz
    lo = max(0, math.ceil(rel0 - 1e-9))
    hi = min(matrix.n_samples, math.floor(rel1 + 1e-9) + 1)
    return lo, hi


def inject(matrix: SignalMatrix, spec: InjectionSpec, capture: str = "capture") -> tuple[SignalMatrix, GroundTruth]:
    if spec.signal_id not in matrix.columns:
        raise KeyError(f"unknown signal {spec.signal_id!r}")
    end_time = matrix.start_time + (matrix.n_samples - 1) / matrix.rate_hz
    if spec.t_start < matrix.start_time or spec.t_end > end_time:
        raise ValueError(
            f"interval [{spec.t_start}, {spec.t_end}] outside capture [{matrix.start_time}, {end_time}]"
        )
    col = matrix.columns.index(spec.signal_id)
    lo, hi = _interval_rows(matrix, spec.t_start, spec.t_end)
    data = matrix.data.copy()
    original = matrix.data[:, col]
    if spec.mode == "constant-max":
        data[lo:hi, col] = original.max() if spec.value is None else spec.value
    elif spec.mode == "constant-value":
        data[lo:hi, col] = spec.value
    else:
        data[lo:hi, col] = _bounded_walk(
            original[lo] if hi > lo else original[0],
            hi - lo,
            float(original.min()),
            float(original.max()),
            spec.step_scale,
            spec.seed,
        )
    attacked = SignalMatrix(list(matrix.columns), data, matrix.rate_hz, matrix.start_time)
    return attacked, GroundTruth(capture, [(spec.t_start, spec.t_end)])


def _bounded_walk(start: float, length: int, lo: float, hi: float, step_scale: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    span = hi - lo if hi > lo else 1.0
    steps = rng.normal(0.0, step_scale * span, size=length)
    walk = np.empty(length)
    value = start
    for k, step in enumerate(steps):
        value = min(hi, max(lo, value + step))
        walk[k] = value
    return walk


# Loadings of each signal on (group factor A, group factor B, its pair's own
# component). pair0_a loads on both group factors and bridges the two groups;
# every other signal belongs to one group. The small cross-group loadings
# spread the between-group correlations instead of making them one value.
FIXTURE_LOADINGS = {
    "pair0_a": (0.507, 0.551, 0.578),
    "pair0_b": (0.795, 0.0, 0.578),
    "pair1_a": (0.795, 0.114, 0.381),
    "pair1_b": (0.795, 0.229, 0.381),
    "pair2_a": (0.795, 0.057, 0.381),
    "pair2_b": (0.795, 0.171, 0.381),
    "pair3_a": (0.0, 0.795, 0.381),
    "pair3_b": (0.171, 0.795, 0.381),
    "pair4_a": (0.229, 0.795, 0.381),
    "pair4_b": (0.057, 0.795, 0.381),
}
FIXTURE_TARGET = "pair0_a"


def fixture_correlation() -> np.ndarray:
    """Population correlation matrix implied by :data:`FIXTURE_LOADINGS`."""
    L = np.array(list(FIXTURE_LOADINGS.values()))
    pair = np.arange(len(L)) // 2
    C = L[:, :2] @ L[:, :2].T + np.where(pair[:, None] == pair[None, :], np.outer(L[:, 2], L[:, 2]), 0.0)
    np.fill_diagonal(C, 1.0)
    return C


def benign_stream(n_samples: int, seed: int, *, rate_hz: float = 100.0) -> SignalMatrix:
    """Benign 10-signal stream made of five correlated pairs in two groups.

    Each signal mixes two group factors, a component shared with its pair
    partner and its own noise, following :data:`FIXTURE_LOADINGS`, so every
    signal has unit variance before scaling. Values are then offset and
    scaled into plausible physical ranges to exercise normalization.
    """
    rng = np.random.default_rng(seed)
    factors = rng.normal(size=(n_samples, 2))
    pairs = rng.normal(size=(n_samples, 5))
    noise = rng.normal(size=(n_samples, 10))
    columns, series = [], []
    for i, (name, (a, b, c)) in enumerate(FIXTURE_LOADINGS.items()):
        idio = math.sqrt(max(0.0, 1.0 - a * a - b * b - c * c))
        x = a * factors[:, 0] + b * factors[:, 1] + c * pairs[:, i // 2] + idio * noise[:, i]
        p = i // 2
        columns.append(name)
        series.append(10.0 * (p + 1) + (1.0 + p) * x)
    return SignalMatrix(columns, np.column_stack(series), rate_hz, 0.0)


def synthetic_fixture(
    seed: int = 1,
    train_samples: int = 30_000,
    test_samples: int = 20_000,
    n_captures: int = 1,
    *,
    target: str = FIXTURE_TARGET,
    mode: str = "decorrelate",
    rate_hz: float = 100.0,
) -> tuple[SignalMatrix, list[tuple[SignalMatrix, GroundTruth]]]:
    """Benign training stream plus attacked captures with one injection each.

    The injection covers the middle 30% of every capture (from 35% to 65% of
    its duration), shifted by half a sample so no window boundary coincides
    with an injection boundary. Capture k uses benign seed ``seed + 1 + 2k``
    and injection seed ``seed + 2 + 2k``.
    """
    train = benign_stream(train_samples, seed, rate_hz=rate_hz)
    duration = test_samples / rate_hz
    t_start = 0.35 * duration + 0.5 / rate_hz
    t_end = t_start + 0.30 * duration
    items = []
    for k in range(n_captures):
        benign = benign_stream(test_samples, seed + 1 + 2 * k, rate_hz=rate_hz)
        value = float(train.column(target).max()) if mode == "constant-max" else None
        spec = InjectionSpec(target, t_start, t_end, mode, value=value, seed=seed + 2 + 2 * k)
        items.append(inject(benign, spec, f"synthetic_{mode.replace('-', '_')}_{k + 1}"))
    return train, items
