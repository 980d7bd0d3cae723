"""The four correlation-based masquerade detectors.

Every detector is fitted once on the normalized training matrix and then
scores test windows with an anomaly score in [0, 1] (higher = more anomalous).

* ``corr-distribution``: 1 - Mann-Whitney p-value between the training and
  window correlation vectors.
* ``corr-correlation``: Spearman p-value between the two correlation vectors.
* ``ganesan17``: DBSCAN clusters of the window's signals; the largest
  within-cluster deviation of a pair correlation from its cluster mean, in
  cluster standard deviations, is compared against the training
  distribution of that maximum error.
* ``moriano22``: 1 - element-centric similarity between the Ward dendrograms
  of the training matrix and of the window.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Iterator, Union

import numpy as np

from . import stats
from .clustering import Dendrogram, correlation_to_distance, dbscan_precomputed, ward_ahc
from .ecs import HierarchicalClustering, build_affinity, ecs
from .ingest import SignalMatrix
from .windowing import WindowSpec, WindowView, enumerate_windows, slice_window

log = logging.getLogger(__name__)

METHODS = ("corr-distribution", "corr-correlation", "ganesan17", "moriano22")

SIGMA_FLOOR = 1e-9


class MethodMismatchError(ValueError):
    pass


class WindowOrderError(RuntimeError):
    """A stateful detector was fed windows out of order."""


@dataclass(frozen=True)
class DetectorConfig:
    method: str
    eps: float = 1.0
    min_samples: int = 1
    r: float = -5.0
    alpha: float = 0.9

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.eps <= 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.min_samples < 1:
            raise ValueError(f"min_samples must be >= 1, got {self.min_samples}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "eps": self.eps,
            "min_samples": self.min_samples,
            "r": self.r,
            "alpha": self.alpha,
        }


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CorrVectorModel:
    method: str
    columns: tuple[str, ...]
    u_train: np.ndarray


@dataclass(frozen=True)
class GanesanModel:
    columns: tuple[str, ...]
    eps: float
    min_samples: int
    error_mean: float
    error_std: float
    train_errors: np.ndarray
    signal_mean: np.ndarray
    signal_std: np.ndarray
    method: str = "ganesan17"


@dataclass(frozen=True)
class MorianoModel:
    columns: tuple[str, ...]
    dendrogram: Dendrogram
    affinity: np.ndarray
    r: float
    alpha: float
    method: str = "moriano22"


TrainedModel = Union[CorrVectorModel, GanesanModel, MorianoModel]


@dataclass(frozen=True)
class AnomalyScore:
    index: int
    start_time: float
    end_time: float
    score: float
    duration_ns: int

    def to_record(self) -> dict:
        return {
            "window_index": self.index,
            "start_time": self.start_time,
            "end_time": self.end_time,
            "score": self.score,
            "duration_ns": self.duration_ns,
        }


@dataclass
class GanesanState:
    """Running history of window errors for one stream, in window order."""

    last_index: int = 0
    errors: list[float] = field(default_factory=list)

    def advance(self, index: int) -> None:
        if index <= self.last_index:
            raise WindowOrderError(
                f"window {index} arrived after window {self.last_index}; ganesan17 needs ordered windows"
            )
        self.last_index = index


def window_vector(window: np.ndarray) -> np.ndarray:
    return stats.upper_triangle(stats.pearson_matrix(window))


def window_max_error(R: np.ndarray, eps: float = 1.0, min_samples: int = 1) -> float:
    """Largest within-cluster correlation deviation of one window.

    Signals are clustered by DBSCAN on 2 (1 - R). In every cluster with at
    least two members the pair correlations are standardized by the
    cluster's own mean and (population) standard deviation; the window error
    is the largest absolute standardized deviation, or 0 without any
    multi-member cluster.
    """
    clusters = dbscan_precomputed(correlation_to_distance(R), eps, min_samples)
    worst = 0.0
    for members in clusters.groups():
        if members.size < 2:
            continue
        sub = R[np.ix_(members, members)]
        pairs = stats.upper_triangle(sub)
        mu = pairs.mean()
        sigma = max(float(pairs.std()), SIGMA_FLOOR)
        worst = max(worst, float(np.max(np.abs(pairs - mu))) / sigma)
    return worst


def _check_train(train: SignalMatrix, spec: WindowSpec | None) -> None:
    if train.n_signals < 2:
        raise ValueError(f"need at least 2 signals, training has {train.n_signals}")
    if spec is not None and train.n_samples < spec.omega:
        raise ValueError(
            f"training has {train.n_samples} samples, shorter than omega={spec.omega}"
        )


def fit(train: SignalMatrix, config: DetectorConfig, spec: WindowSpec | None = None) -> TrainedModel:
    """Extract the reference representation of normal behaviour.

    Only ganesan17 depends on ``spec``: its error distribution is calibrated
    by replaying the training matrix through the same windows.
    """
    if config.method == "ganesan17" and spec is None:
        raise ValueError("ganesan17 needs a window spec to calibrate")
    _check_train(train, spec)
    columns = tuple(train.columns)
    if config.method in ("corr-distribution", "corr-correlation"):
        return CorrVectorModel(config.method, columns, _frozen(window_vector(train.data)))
    if config.method == "moriano22":
        dend = ward_ahc(correlation_to_distance(stats.pearson_matrix(train.data)))
        affinity = build_affinity(HierarchicalClustering.from_dendrogram(dend), config.alpha, config.r)
        return MorianoModel(columns, dend, _frozen(affinity), config.r, config.alpha)

    errors = np.array(
        [
            window_max_error(stats.pearson_matrix(slice_window(train.data, view)), config.eps, config.min_samples)
            for view in enumerate_windows(train.n_samples, spec, train.rate_hz, train.start_time)
        ]
    )
    return GanesanModel(
        columns,
        config.eps,
        config.min_samples,
        float(errors.mean()),
        max(float(errors.std()), SIGMA_FLOOR),
        _frozen(errors),
        _frozen(train.data.mean(axis=0)),
        _frozen(train.data.std(axis=0)),
    )


def _expect(model, method: str) -> None:
    if model.method != method:
        raise MethodMismatchError(f"model was fitted for {model.method}, not {method}")


def score_corr_distribution(model: CorrVectorModel, window: np.ndarray) -> float:
    _expect(model, "corr-distribution")
    result = stats.mann_whitney_u(model.u_train, window_vector(window))
    return 1.0 - result.pvalue


def score_corr_correlation(model: CorrVectorModel, window: np.ndarray) -> float:
    _expect(model, "corr-correlation")
    try:
        return stats.spearman(model.u_train, window_vector(window)).pvalue
    except stats.DegenerateInputError:
        log.debug("constant correlation vector; no rank structure, scoring 1.0")
        return 1.0


def score_ganesan17(
    model: GanesanModel, window: np.ndarray, state: GanesanState | None = None, index: int | None = None
) -> float:
    """Normal-CDF score of the window's max error under the training error distribution.

    With a ``state``, ``index`` must increase from call to call.
    """
    _expect(model, "ganesan17")
    if state is not None:
        state.advance(state.last_index + 1 if index is None else index)
    error = window_max_error(stats.pearson_matrix(window), model.eps, model.min_samples)
    if state is not None:
        state.errors.append(error)
    return stats.normal_cdf((error - model.error_mean) / model.error_std)


def score_moriano22(model: MorianoModel, window: np.ndarray) -> float:
    _expect(model, "moriano22")
    dend = ward_ahc(correlation_to_distance(stats.pearson_matrix(window)))
    affinity = build_affinity(HierarchicalClustering.from_dendrogram(dend), model.alpha, model.r)
    return 1.0 - ecs(model.affinity, affinity, model.alpha)


def score_window(model: TrainedModel, window: np.ndarray, state: GanesanState | None = None, index: int | None = None) -> float:
    if model.method == "corr-distribution":
        return score_corr_distribution(model, window)
    if model.method == "corr-correlation":
        return score_corr_correlation(model, window)
    if model.method == "moriano22":
        return score_moriano22(model, window)
    return score_ganesan17(model, window, state, index)


def detect(model: TrainedModel, matrix: SignalMatrix, spec: WindowSpec) -> Iterator[AnomalyScore]:
    """Score every window of ``matrix`` in order, timing each window.

    The timed region covers slicing, the correlation step and scoring.
    """
    if tuple(matrix.columns) != tuple(model.columns):
        raise ValueError("capture columns differ from the training columns")
    state = GanesanState() if model.method == "ganesan17" else None
    data = matrix.data
    views: list[WindowView] = enumerate_windows(matrix.n_samples, spec, matrix.rate_hz, matrix.start_time)
    for view in views:
        t0 = time.perf_counter_ns()
        value = score_window(model, slice_window(data, view), state, view.index)
        elapsed = time.perf_counter_ns() - t0
        yield AnomalyScore(view.index, view.start_time, view.end_time, value, elapsed)


def model_to_dict(model: TrainedModel) -> dict:
    payload: dict = {"method": model.method, "columns": list(model.columns)}
    if isinstance(model, CorrVectorModel):
        payload["u_train"] = model.u_train.tolist()
    elif isinstance(model, GanesanModel):
        payload.update(
            eps=model.eps,
            min_samples=model.min_samples,
            error_mean=model.error_mean,
            error_std=model.error_std,
            train_errors=model.train_errors.tolist(),
            signal_mean=model.signal_mean.tolist(),
            signal_std=model.signal_std.tolist(),
        )
    else:
        payload.update(
            n_leaves=model.dendrogram.n_leaves,
            merges=model.dendrogram.merges.tolist(),
            affinity=model.affinity.tolist(),
            r=model.r,
            alpha=model.alpha,
        )
    return payload


def model_from_dict(payload: dict) -> TrainedModel:
    method = payload["method"]
    columns = tuple(payload["columns"])
    if method in ("corr-distribution", "corr-correlation"):
        return CorrVectorModel(method, columns, _frozen(payload["u_train"]))
    if method == "ganesan17":
        return GanesanModel(
            columns,
            float(payload["eps"]),
            int(payload["min_samples"]),
            float(payload["error_mean"]),
            float(payload["error_std"]),
            _frozen(payload["train_errors"]),
            _frozen(payload["signal_mean"]),
            _frozen(payload["signal_std"]),
        )
    if method == "moriano22":
        dend = Dendrogram(int(payload["n_leaves"]), np.array(payload["merges"], dtype=float))
        return MorianoModel(columns, dend, _frozen(payload["affinity"]), float(payload["r"]), float(payload["alpha"]))
    raise ValueError(f"unknown method {method!r}")
