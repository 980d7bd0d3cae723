"""ROAD masquerade captures: injection intervals, attack categories and a loader.

The loader expects a directory of matrices already prepared with
``canmasq preprocess`` (wide CSV, one column per selected signal):

* ``train.csv``: the benign training capture;
* ``<capture>.csv`` for any of the captures in :data:`INJECTION_INTERVALS`.

Intervals are seconds from the start of each capture, so they are shifted by
the capture's first time stamp when the matrix does not start at zero.
"""

from __future__ import annotations

import os
from pathlib import Path

from .attacks import GroundTruth, write_ground_truth
from .evaluation import Capture
from .ingest import SignalMatrix

ENV_VAR = "CANMASQ_ROAD_DIR"

# capture -> (duration s, injection start s, injection end s)
INJECTION_INTERVALS = {
    "correlated_signal_1": (33.10, 9.19, 30.05),
    "correlated_signal_2": (28.23, 6.83, 28.23),
    "correlated_signal_3": (16.96, 4.32, 16.96),
    "max_engine_coolant": (25.88, 19.98, 24.17),
    "max_speedometer_1": (88.02, 42.01, 66.45),
    "max_speedometer_2": (59.70, 16.01, 47.41),
    "max_speedometer_3": (86.77, 9.52, 70.59),
    "reverse_light_off_1": (28.11, 16.63, 23.35),
    "reverse_light_off_2": (40.67, 13.17, 36.88),
    "reverse_light_off_3": (57.88, 16.52, 40.86),
    "reverse_light_on_1": (54.85, 18.93, 38.84),
    "reverse_light_on_2": (72.02, 20.41, 57.30),
    "reverse_light_on_3": (64.26, 23.07, 46.58),
}

CATEGORIES = {
    "correlated_signal": "correlated_attack",
    "max_engine_coolant": "max_engine_attack",
    "max_speedometer": "max_speedometer_attack",
    "reverse_light_off": "light_off_attack",
    "reverse_light_on": "light_on_attack",
}


def category_of(capture: str) -> str:
    for prefix, category in CATEGORIES.items():
        if capture.startswith(prefix):
            return category
    raise KeyError(f"{capture!r} is not a known ROAD masquerade capture")


def ground_truth(capture: str, offset: float = 0.0) -> GroundTruth:
    _, t0, t1 = INJECTION_INTERVALS[capture]
    return GroundTruth(capture, [(t0 + offset, t1 + offset)], category_of(capture))


def write_ground_truth_csv(path) -> None:
    """All intervals as a ground-truth CSV usable with ``canmasq sweep``."""
    write_ground_truth(path, [ground_truth(name) for name in INJECTION_INTERVALS])


def data_dir() -> Path | None:
    """The extracts directory named by ``CANMASQ_ROAD_DIR``, if it exists."""
    value = os.environ.get(ENV_VAR)
    if not value:
        return None
    path = Path(value)
    return path if (path / "train.csv").is_file() else None


def load(directory) -> tuple[SignalMatrix, dict[str, list[Capture]]]:
    """Training matrix and the available captures grouped by attack category."""
    directory = Path(directory)
    train = SignalMatrix.from_csv(directory / "train.csv")
    groups: dict[str, list[Capture]] = {}
    for name in INJECTION_INTERVALS:
        path = directory / f"{name}.csv"
        if not path.is_file():
            continue
        matrix = SignalMatrix.from_csv(path)
        truth = ground_truth(name, matrix.start_time)
        groups.setdefault(truth.category, []).append(Capture(name, matrix, truth))
    return train, groups
