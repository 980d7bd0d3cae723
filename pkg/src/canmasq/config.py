"""Run configuration: TOML file, environment overrides and CLI overrides.

Precedence, lowest first: built-in defaults, the TOML file, the
``CANMASQ_OUTPUT_DIR`` / ``CANMASQ_WORKERS`` environment variables, then
explicit command-line flags.

Example file::

    [data]
    train = "prep/train.csv"
    captures = ["prep/attack_1.csv"]
    ground_truth = "prep/ground_truth.csv"

    [detector]
    method = "moriano22"
    r = -5.0
    alpha = 0.9

    [window]
    omega = 200
    delta = 50

    [run]
    output_dir = "out"
    workers = 4

    [[inject]]
    capture = "attack_1"
    signal_id = "pair1_a"
    t_start = 70.005
    t_end = 130.005
    mode = "decorrelate"
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .attacks import InjectionSpec
from .detectors import DetectorConfig
from .evaluation import DEFAULT_OMEGAS, default_grid
from .ingest import FORMATS
from .windowing import WindowSpec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class InjectionEntry:
    capture: str
    spec: InjectionSpec


@dataclass(frozen=True)
class RunConfig:
    # [data]
    train: str | None = None
    captures: tuple[str, ...] = ()
    ground_truth: str | None = None
    format: str = "csv-long"
    rate_hz: float = 100.0
    edge_hold: bool = False
    # [detector]
    method: str = "moriano22"
    eps: float = 1.0
    min_samples: int = 1
    r: float = -5.0
    alpha: float = 0.9
    # [window]
    omega: int = 200
    delta: int = 50
    omegas: tuple[int, ...] = DEFAULT_OMEGAS
    delta_step: int = 10
    # [run]
    output_dir: str = "out"
    seed: int = 0
    workers: int = 1
    # [[inject]]
    injections: tuple[InjectionEntry, ...] = field(default=())

    def __post_init__(self):
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}, got {self.format!r}")
        if self.rate_hz <= 0:
            raise ConfigError(f"rate_hz must be positive, got {self.rate_hz}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.delta_step < 1 or not self.omegas:
            raise ConfigError("window grid is empty")
        try:
            self.detector
            self.window
            for w in self.omegas:
                WindowSpec(w, min(self.delta_step, w))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def detector(self) -> DetectorConfig:
        return DetectorConfig(self.method, self.eps, self.min_samples, self.r, self.alpha)

    @property
    def window(self) -> WindowSpec:
        return WindowSpec(self.omega, self.delta)

    @property
    def grid(self) -> list[tuple[int, int]]:
        return default_grid(self.omegas, self.delta_step)

    def with_overrides(self, **overrides) -> "RunConfig":
        """Apply overrides whose value is not None."""
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ConfigError(f"unknown settings: {', '.join(sorted(unknown))}")
        values = {k: v for k, v in overrides.items() if v is not None}
        for key in ("captures", "omegas"):
            if key in values:
                values[key] = tuple(values[key])
        return replace(self, **values)


_SECTIONS = {
    "data": ("train", "captures", "ground_truth", "format", "rate_hz", "edge_hold"),
    "detector": ("method", "eps", "min_samples", "r", "alpha"),
    "window": ("omega", "delta", "omegas", "delta_step"),
    "run": ("output_dir", "seed", "workers"),
}
_INJECT_KEYS = {"capture", "signal_id", "t_start", "t_end", "mode", "value", "seed", "step_scale"}


def _parse_injection(entry: dict, where: str) -> InjectionEntry:
    unknown = set(entry) - _INJECT_KEYS
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    missing = {"capture", "signal_id", "t_start", "t_end"} - set(entry)
    if missing:
        raise ConfigError(f"{where}: missing keys {sorted(missing)}")
    body = {k: v for k, v in entry.items() if k != "capture"}
    try:
        return InjectionEntry(str(entry["capture"]), InjectionSpec(**body))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse_config(payload: dict, source: str = "<config>") -> RunConfig:
    """Validate a decoded TOML document; unknown sections or keys are errors."""
    values: dict = {}
    for section, body in payload.items():
        if section == "inject":
            if not isinstance(body, list):
                raise ConfigError(f"{source}: [[inject]] must be an array of tables")
            values["injections"] = tuple(
                _parse_injection(e, f"{source}: inject[{k}]") for k, e in enumerate(body)
            )
            continue
        if section not in _SECTIONS:
            raise ConfigError(f"{source}: unknown section [{section}]")
        if not isinstance(body, dict):
            raise ConfigError(f"{source}: [{section}] must be a table")
        unknown = set(body) - set(_SECTIONS[section])
        if unknown:
            raise ConfigError(f"{source}: unknown keys in [{section}]: {sorted(unknown)}")
        values.update(body)
    for key in ("captures", "omegas"):
        if key in values:
            values[key] = tuple(values[key])
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            payload = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such config file") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(payload, str(path))


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out: dict = {}
    if environ.get("CANMASQ_OUTPUT_DIR"):
        out["output_dir"] = environ["CANMASQ_OUTPUT_DIR"]
    if environ.get("CANMASQ_WORKERS"):
        try:
            out["workers"] = int(environ["CANMASQ_WORKERS"])
        except ValueError:
            raise ConfigError(f"CANMASQ_WORKERS must be an integer, got {environ['CANMASQ_WORKERS']!r}") from None
    return out


def resolve(path=None, cli: dict | None = None, environ=None) -> RunConfig:
    """Defaults, then file, then environment, then CLI flags."""
    config = load_config(path) if path else RunConfig()
    config = config.with_overrides(**env_overrides(environ))
    return config.with_overrides(**(cli or {}))
