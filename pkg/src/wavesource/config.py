"""Experiment configuration: one JSON document, one time unit throughout.

Relative paths are resolved against the directory of the config file.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .errors import WaveSourceError
from .forward import SourceSpec
from .signals import signal_from_dict


class ConfigError(WaveSourceError, ValueError):
    exit_code = 1


METHODS = ("deconvolution", "fourier")


@dataclass(frozen=True)
class ExperimentConfig:
    """Inputs of a simulate or identify run.

    ``source`` is needed for synthesis and, when present during
    identification, supplies the ground truth for the error report.
    ``records`` names a trajectory CSV holding at least nodes ``i`` and ``j``.
    ``assume_source`` makes localization advisory: the signal is recovered
    at that node even when the localization verdict is ambiguous.
    ``r = None`` means the documented default: 1 without noise, 10 with.
    ``threshold`` and ``min_margin`` likewise default to 1e-3 and 2 without
    noise, 1e-1 and 10 with it.
    """

    topology: Path
    i: int
    j: int
    T: float
    n_steps: int
    T0: float
    T_star: float | None = None
    source: dict | None = None
    records: Path | None = None
    a: tuple[float, ...] | None = None
    b: tuple[float, ...] | None = None
    m: tuple[int, ...] = (1,)
    fourier_terms: int = 7
    noise_level: float = 0.0
    seed: int = 0
    method: str = "deconvolution"
    mode: str = "diagonal_shift"
    r: float | None = None
    threshold: float | None = None
    min_margin: float | None = None
    observation_node: int | None = None
    assume_source: int | None = None
    output: Path = Path("out")
    base_dir: Path = field(default=Path("."), compare=False)

    def __post_init__(self):
        if self.i == self.j:
            raise ConfigError(f"observation nodes must differ, got i = j = {self.i}")
        if not self.T > 0 or int(self.n_steps) < 2:
            raise ConfigError("need T > 0 and n_steps >= 2")
        if not 0 <= self.T0 <= self.T:
            raise ConfigError(f"T0 = {self.T0:g} must lie in [0, T]")
        if self.T_star is not None and self.T_star < self.T0:
            raise ConfigError(f"T* = {self.T_star:g} must not precede T0 = {self.T0:g}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.mode not in ("diagonal_shift", "tikhonov"):
            raise ConfigError(f"mode must be diagonal_shift or tikhonov, got {self.mode!r}")
        if self.noise_level < 0:
            raise ConfigError("noise level must be non-negative")
        if not self.m or any(int(mm) < 1 for mm in self.m):
            raise ConfigError("adjoint indices m must be positive")
        if self.min_margin is not None and self.min_margin < 1:
            raise ConfigError(f"min_margin must be at least 1, got {self.min_margin:g}")

    @property
    def fit_start(self) -> float:
        return self.T0 if self.T_star is None else self.T_star

    @property
    def regularization(self) -> float:
        if self.r is not None:
            return self.r
        return 1.0 if self.noise_level == 0 else 10.0

    @property
    def localization_threshold(self) -> float:
        if self.threshold is not None:
            return self.threshold
        return 1e-3 if self.noise_level == 0 else 1e-1

    @property
    def localization_margin(self) -> float:
        if self.min_margin is not None:
            return self.min_margin
        return 2.0 if self.noise_level == 0 else 10.0

    def resolve(self, p: Path | str | None) -> Path | None:
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def topology_path(self) -> Path:
        return self.resolve(self.topology)

    @property
    def records_path(self) -> Path | None:
        return self.resolve(self.records)

    @property
    def output_dir(self) -> Path:
        return self.resolve(self.output)

    def source_spec(self) -> SourceSpec:
        if self.source is None:
            raise ConfigError("config has no 'source' section")
        try:
            signal = signal_from_dict(self.source["signal"])
            return SourceSpec(int(self.source["node"]), signal)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid source section: {exc}") from exc

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw) if kw else self

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        for key in ("topology", "records", "output"):
            d[key] = None if d[key] is None else str(d[key])
        d["m"] = list(self.m)
        return d


_FIELDS = set(ExperimentConfig.__dataclass_fields__) - {"base_dir"}


def config_from_dict(d: dict, base_dir: Path | str = ".") -> ExperimentConfig:
    d = dict(d)
    unknown = set(d) - _FIELDS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in ("topology", "i", "j", "T", "n_steps", "T0"):
        if key not in d:
            raise ConfigError(f"config is missing required key {key!r}")
    for key in ("topology", "records", "output"):
        if d.get(key) is not None:
            d[key] = Path(d[key])
    if "m" in d:
        d["m"] = tuple(int(x) for x in (d["m"] if isinstance(d["m"], list) else [d["m"]]))
    for key in ("a", "b"):
        if d.get(key) is not None:
            d[key] = tuple(float(x) for x in d[key])
    try:
        return ExperimentConfig(base_dir=Path(base_dir), **d)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data, path.parent)
