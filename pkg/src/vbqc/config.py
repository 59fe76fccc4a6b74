"""Run configuration: JSON files with a schema version and no unknown fields."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, replace
from typing import Any

from .noise import FidelityBudget, LinkConfig, NoiseModel, TimingModel
from .polarisation import DetectorPovm
from .wire import SCHEMA_VERSION

MODES = ("in_process", "two_process")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class VerifyGrid:
    n_grid: tuple[int, ...] = (3000, 6000, 9000, 12000, 15000, 18000, 21000, 24000)
    p_true: float = 0.185
    trials: int = 4000
    tau: float = 0.6
    omega: float = 0.2
    q: int = 2


@dataclass(frozen=True)
class RunConfig:
    seed_client: int = 1
    seed_server: int = 2
    q: int = 1
    rounds: int = 100
    test_fraction: float = 0.0
    alpha_settings: tuple[tuple[int, ...], ...] = ((0,),)
    final_basis: str = "Z"
    test_parity: Any = None  # None (random), 0, 1 or "alternate"
    redact_detector: bool = True
    omega: float | None = None
    noise: NoiseModel = field(default_factory=NoiseModel)
    verify: VerifyGrid = field(default_factory=VerifyGrid)
    mode: str = "in_process"
    out_dir: str = "out"

    def __post_init__(self):
        for name in ("seed_client", "seed_server"):
            v = getattr(self, name)
            if not isinstance(v, int) or not 0 <= v < 2**64:
                raise ConfigError(f"{name}: must be a 64-bit unsigned integer")
        if self.q < 1:
            raise ConfigError("q: must be >= 1")
        if self.rounds < 0:
            raise ConfigError("rounds: must be >= 0")
        if not 0.0 <= self.test_fraction <= 1.0:
            raise ConfigError("test_fraction: must lie in [0, 1]")
        if self.final_basis not in ("Z", "B"):
            raise ConfigError("final_basis: must be 'Z' or 'B'")
        if self.test_parity not in (None, 0, 1, "alternate"):
            raise ConfigError("test_parity: must be null, 0, 1 or 'alternate'")
        if self.mode not in MODES:
            raise ConfigError(f"mode: must be one of {', '.join(MODES)}")
        need = self.q + (self.final_basis == "B")
        if not self.alpha_settings:
            raise ConfigError("alpha_settings: need at least one setting")
        for i, s in enumerate(self.alpha_settings):
            if len(s) != need:
                raise ConfigError(f"alpha_settings[{i}]: expected {need} octants, got {len(s)}")
            if any(not isinstance(a, int) or not 0 <= a < 8 for a in s):
                raise ConfigError(f"alpha_settings[{i}]: octants must be integers 0..7")


NOISE_PRESETS = {"default": NoiseModel, "ideal": NoiseModel.ideal}


def _build(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigError(f"{path + '.' if path else ''}{unknown[0]}: unknown field")
    kwargs = {}
    for k, v in data.items():
        kwargs[k] = _coerce(names[k], v, f"{path}.{k}" if path else k)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from exc


def _coerce(f: dataclasses.Field, v, path: str):
    t = str(f.type)
    if t.startswith("tuple[tuple"):
        if not isinstance(v, list) or not all(isinstance(x, list) for x in v):
            raise ConfigError(f"{path}: expected a list of lists")
        return tuple(tuple(x) for x in v)
    if t.startswith("tuple"):
        if not isinstance(v, list):
            raise ConfigError(f"{path}: expected a list")
        return tuple(v)
    if t in ("float", "float | None") and isinstance(v, int) and not isinstance(v, bool):
        return float(v)
    return v


def _build_noise(data: dict, path: str = "noise") -> NoiseModel:
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object")
    data = dict(data)
    preset = data.pop("preset", "default")
    if preset not in NOISE_PRESETS:
        raise ConfigError(f"{path}.preset: must be one of {', '.join(NOISE_PRESETS)}")
    base = NOISE_PRESETS[preset]()
    subs = {"budget": FidelityBudget, "link": LinkConfig, "timing": TimingModel, "povm": DetectorPovm}
    kwargs = {}
    for k, v in data.items():
        if k in subs:
            current = dataclasses.asdict(getattr(base, k))
            unknown = sorted(set(v) - set(current)) if isinstance(v, dict) else []
            if unknown:
                raise ConfigError(f"{path}.{k}.{unknown[0]}: unknown field")
            if not isinstance(v, dict):
                raise ConfigError(f"{path}.{k}: expected an object")
            kwargs[k] = _build(subs[k], {**current, **v}, f"{path}.{k}")
        elif k in ("p_errdetect", "error_detection", "timing_calibrated"):
            kwargs[k] = v
        else:
            raise ConfigError(f"{path}.{k}: unknown field")
    try:
        return replace(base, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config: expected a JSON object")
    data = dict(data)
    version = data.pop("schema_version", None)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}, got {version!r}")
    noise = _build_noise(data.pop("noise", {}))
    verify = _build(VerifyGrid, data.pop("verify", {}), "verify")
    cfg = _build(RunConfig, data, "")
    return replace(cfg, noise=noise, verify=verify)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    try:
        return config_from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
