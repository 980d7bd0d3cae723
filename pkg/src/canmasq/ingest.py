"""Decoded-signal ingestion: parsing, resampling and min-max normalization."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMATS = ("csv-long", "csv-wide")


class IngestError(ValueError):
    """Malformed or unusable input."""

    def __init__(self, message: str, path=None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class EmptyInputError(IngestError):
    pass


@dataclass(frozen=True)
class RawSignalTrace:
    signal_id: str
    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=float)
        vs = np.asarray(self.values, dtype=float)
        if ts.ndim != 1 or ts.shape != vs.shape:
            raise ValueError(f"{self.signal_id}: timestamps and values must be equal-length 1-D")
        if ts.size == 0:
            raise ValueError(f"{self.signal_id}: trace is empty")
        if np.any(np.diff(ts) <= 0):
            raise ValueError(f"{self.signal_id}: timestamps must be strictly increasing")
        if not (np.all(np.isfinite(ts)) and np.all(np.isfinite(vs))):
            raise ValueError(f"{self.signal_id}: non-finite sample")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vs)

    def __len__(self) -> int:
        return self.timestamps.size


@dataclass
class SignalMatrix:
    """Uniformly sampled multivariate series: ``data[k, i]`` is signal ``columns[i]``
    at time ``start_time + k / rate_hz``."""

    columns: list[str]
    data: np.ndarray
    rate_hz: float = 100.0
    start_time: float = 0.0

    def __post_init__(self):
        self.columns = list(self.columns)
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2 or self.data.shape[1] != len(self.columns):
            raise ValueError(
                f"data shape {self.data.shape} does not match {len(self.columns)} columns"
            )
        if len(set(self.columns)) != len(self.columns):
            raise ValueError("duplicate signal ids")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("signal matrix contains non-finite entries")
        if self.rate_hz <= 0:
            raise ValueError(f"rate_hz must be positive, got {self.rate_hz}")

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def n_signals(self) -> int:
        return self.data.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.rate_hz

    @property
    def times(self) -> np.ndarray:
        return self.start_time + np.arange(self.n_samples) / self.rate_hz

    def column(self, signal_id: str) -> np.ndarray:
        return self.data[:, self.columns.index(signal_id)]

    def select(self, columns) -> "SignalMatrix":
        idx = [self.columns.index(c) for c in columns]
        return SignalMatrix(list(columns), self.data[:, idx], self.rate_hz, self.start_time)

    def to_csv(self, path) -> None:
        """Write as a wide CSV (``time`` then one column per signal)."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time", *self.columns])
            for t, row in zip(self.times, self.data):
                writer.writerow([repr(float(t)), *(repr(float(v)) for v in row)])

    @classmethod
    def from_csv(cls, path, rate_hz: float | None = None) -> "SignalMatrix":
        """Read a uniformly sampled wide CSV written by :meth:`to_csv`."""
        traces = parse_signal_log(path, "csv-wide")
        times = traces[0].timestamps
        for tr in traces:
            if tr.timestamps.size != times.size or np.any(tr.timestamps != times):
                raise IngestError("wide CSV is not a complete uniform table", path)
        if rate_hz is None:
            if times.size < 2:
                raise IngestError("cannot infer the sampling rate from a single row", path)
            rate_hz = float(round(1.0 / np.median(np.diff(times)), 9))
        return cls(
            [tr.signal_id for tr in traces],
            np.column_stack([tr.values for tr in traces]),
            rate_hz,
            float(times[0]),
        )


@dataclass(frozen=True)
class NormalizationParams:
    columns: tuple[str, ...]
    minimum: np.ndarray
    maximum: np.ndarray
    constant: frozenset[str] = field(default_factory=frozenset)

    def to_dict(self) -> dict:
        return {
            "columns": list(self.columns),
            "min": [float(v) for v in self.minimum],
            "max": [float(v) for v in self.maximum],
            "constant": sorted(self.constant),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "NormalizationParams":
        return cls(
            tuple(payload["columns"]),
            np.asarray(payload["min"], dtype=float),
            np.asarray(payload["max"], dtype=float),
            frozenset(payload.get("constant", ())),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "NormalizationParams":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _to_float(text: str, path, line: int, what: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise IngestError(f"non-numeric {what} {text!r}", path, line) from None
    if not math.isfinite(value):
        raise IngestError(f"non-finite {what} {text!r}", path, line)
    return value


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def _collapse(signal_id: str, samples: list[tuple[float, float]]) -> RawSignalTrace:
    # stable sort keeps file order among equal timestamps, so the last one wins
    samples.sort(key=lambda s: s[0])
    ts = np.array([s[0] for s in samples])
    vs = np.array([s[1] for s in samples])
    keep = np.r_[ts[1:] != ts[:-1], True]
    return RawSignalTrace(signal_id, ts[keep], vs[keep])


def parse_signal_log(path, format: str = "csv-long") -> list[RawSignalTrace]:
    """Read decoded signal samples into one trace per signal.

    ``csv-long`` rows are ``timestamp,signal_id,value`` (a header row is
    optional). ``csv-wide`` has a header ``time,<id>,<id>,...``; empty cells
    mean the signal has no sample at that time. Traces come back in order of
    first appearance.
    """
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")
    path = Path(path)
    if not path.exists():
        raise IngestError("no such file", path)
    samples: dict[str, list[tuple[float, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [(lineno, row) for lineno, row in enumerate(csv.reader(fh), start=1) if row]
    if not rows:
        raise EmptyInputError("file is empty", path)

    if format == "csv-long":
        for lineno, row in rows:
            if lineno == rows[0][0] and not _is_number(row[0].strip()):
                continue  # header
            if len(row) != 3:
                raise IngestError(f"expected 3 fields, got {len(row)}", path, lineno)
            ts = _to_float(row[0].strip(), path, lineno, "timestamp")
            value = _to_float(row[2].strip(), path, lineno, "value")
            signal_id = row[1].strip()
            if not signal_id:
                raise IngestError("empty signal id", path, lineno)
            samples.setdefault(signal_id, []).append((ts, value))
    else:
        header_line, header = rows[0]
        columns = [c.strip() for c in header[1:]]
        if not columns or any(not c for c in columns):
            raise IngestError("wide header needs a time column and named signals", path, header_line)
        for c in columns:
            samples.setdefault(c, [])
        for lineno, row in rows[1:]:
            if len(row) != len(header):
                raise IngestError(f"expected {len(header)} fields, got {len(row)}", path, lineno)
            ts = _to_float(row[0].strip(), path, lineno, "timestamp")
            for name, cell in zip(columns, row[1:]):
                cell = cell.strip()
                if cell:
                    samples[name].append((ts, _to_float(cell, path, lineno, "value")))

    traces = [_collapse(sid, s) for sid, s in samples.items() if s]
    if not traces:
        raise EmptyInputError("no samples found", path)
    return traces


def resample(traces: list[RawSignalTrace], rate_hz: float = 100.0, *, edge_hold: bool = False) -> SignalMatrix:
    """Linearly interpolate every trace onto a common uniform grid.

    By default the grid spans the intersection of the trace time ranges.
    With ``edge_hold=True`` it spans their union and each signal repeats its
    first/last value outside its own range. Single-sample traces become
    constant columns and do not constrain the span.
    """
    if rate_hz <= 0:
        raise ValueError(f"rate_hz must be positive, got {rate_hz}")
    if not traces:
        raise EmptyInputError("no traces to resample")
    spans = [tr for tr in traces if len(tr) > 1] or list(traces)
    firsts = [tr.timestamps[0] for tr in spans]
    lasts = [tr.timestamps[-1] for tr in spans]
    if edge_hold:
        start, end = min(firsts), max(lasts)
    else:
        start, end = max(firsts), min(lasts)
    if end < start:
        raise IngestError(f"traces do not overlap in time ({start} > {end})")
    count = int(math.floor((end - start) * rate_hz + 1e-9)) + 1
    grid = start + np.arange(count) / rate_hz
    data = np.empty((count, len(traces)))
    for i, tr in enumerate(traces):
        if len(tr) == 1:
            data[:, i] = tr.values[0]
        else:
            data[:, i] = np.interp(grid, tr.timestamps, tr.values)
    return SignalMatrix([tr.signal_id for tr in traces], data, rate_hz, float(start))


def fit_normalization(matrix: SignalMatrix) -> NormalizationParams:
    """Training-side min/max per signal; exactly constant signals are dropped."""
    if matrix.n_samples == 0:
        raise IngestError("cannot normalize an empty matrix")
    lo = matrix.data.min(axis=0)
    hi = matrix.data.max(axis=0)
    constant = hi == lo
    if constant.all():
        raise IngestError("every signal is constant; nothing left to model")
    keep = ~constant
    return NormalizationParams(
        tuple(c for c, k in zip(matrix.columns, keep) if k),
        lo[keep],
        hi[keep],
        frozenset(c for c, k in zip(matrix.columns, constant) if k),
    )


def apply_normalization(matrix: SignalMatrix, params: NormalizationParams) -> SignalMatrix:
    """Min-max scale with training parameters; values outside [0, 1] are kept."""
    missing = [c for c in params.columns if c not in matrix.columns]
    if missing:
        raise IngestError(f"signals missing from capture: {', '.join(missing)}")
    idx = [matrix.columns.index(c) for c in params.columns]
    scaled = (matrix.data[:, idx] - params.minimum) / (params.maximum - params.minimum)
    return SignalMatrix(list(params.columns), scaled, matrix.rate_hz, matrix.start_time)
