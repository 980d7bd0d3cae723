"""Sequence-based sliding windows of length omega with offset delta."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np


class EmptyStreamError(ValueError):
    pass


@dataclass(frozen=True)
class WindowSpec:
    omega: int
    delta: int

    def __post_init__(self):
        if int(self.omega) != self.omega or int(self.delta) != self.delta:
            raise ValueError(f"window parameters must be integers: {self}")
        if self.omega < 2:
            raise ValueError(f"omega must be >= 2 to correlate, got {self.omega}")
        if not 1 <= self.delta <= self.omega:
            raise ValueError(f"delta must lie in [1, omega={self.omega}], got {self.delta}")

    def count(self, stream_len: int) -> int:
        if stream_len < self.omega:
            return 0
        return (stream_len - self.omega) // self.delta + 1


@dataclass(frozen=True)
class WindowView:
    """Window j covers samples [start_sample, end_sample) and times [start_time, end_time)."""

    index: int
    start_sample: int
    end_sample: int
    start_time: float
    end_time: float


def enumerate_windows(
    stream_len: int, spec: WindowSpec, rate_hz: float = 100.0, start_time: float = 0.0
) -> list[WindowView]:
    if stream_len < spec.omega:
        raise EmptyStreamError(
            f"stream of {stream_len} samples is shorter than omega={spec.omega}"
        )
    views = []
    for j in range(1, spec.count(stream_len) + 1):
        start = spec.delta * (j - 1)
        end = start + spec.omega
        views.append(
            WindowView(j, start, end, start_time + start / rate_hz, start_time + end / rate_hz)
        )
    return views


def slice_window(data: np.ndarray, view: WindowView) -> np.ndarray:
    """Rows [start_sample, end_sample) of a t x n array (a view, not a copy)."""
    if view.start_sample < 0 or view.end_sample > data.shape[0]:
        raise IndexError(
            f"window [{view.start_sample}, {view.end_sample}) outside {data.shape[0]} rows"
        )
    return data[view.start_sample : view.end_sample]


def iter_windows(matrix, spec: WindowSpec) -> Iterator[tuple[WindowView, np.ndarray]]:
    for view in enumerate_windows(matrix.n_samples, spec, matrix.rate_hz, matrix.start_time):
        yield view, slice_window(matrix.data, view)
