"""Run configuration: model geometry plus training hyperparameters.

Serialized as flat key=value text, one key per line, '#' for comments.
Every key round-trips losslessly; parse errors cite the key and line number.
The numeric fields are also embedded into checkpoints (as `config/<key>`
pseudo-parameters) so a checkpoint is self-describing for evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .network import ModelConfig
from .tensor import Tensor


class ConfigError(ValueError):
    """Bad configuration input; message cites key (and line when parsing files)."""


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    epochs: int = 60
    batch_size: int = 8
    lr: float = 1e-3
    lr_decay: float = 0.7
    lr_decay_every: int = 40
    seed: int = 0
    val_fraction: float = 0.2
    a1: float = 10.0
    a2: float = 0.5
    a3: float = 0.5
    dataset: str = ""
    checkpoint: str = ""

    def validate(self) -> None:
        self.model.validate()
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError(f"val_fraction must be in (0,1), got {self.val_fraction}")
        if self.lr <= 0 or self.lr_decay <= 0 or self.lr_decay_every < 1:
            raise ConfigError("learning-rate settings must be positive")
        if min(self.a1, self.a2, self.a3) < 0:
            raise ConfigError("loss weights must be non-negative")


# field name -> (owner, kind); owner "run" or "model"
def _schema() -> dict[str, tuple[str, str]]:
    kinds = {
        "input_n": "int", "level_ns": "int3", "out_n": "int", "base_c": "int",
        "neighbor_s": "int", "radii": "float2_or_none", "pdma_scales": "ints",
        "heads": "int", "use_pla": "bool", "use_pdma": "bool",
        "pdma_dense": "bool", "pdma_vanilla": "bool", "cd_squared": "bool",
    }
    out = {name: ("model", kind) for name, kind in kinds.items()}
    for f in fields(RunConfig):
        if f.name == "model":
            continue
        kind = {"epochs": "int", "batch_size": "int", "lr_decay_every": "int",
                "seed": "int", "dataset": "str", "checkpoint": "str"}.get(f.name, "float")
        out[f.name] = ("run", kind)
    return out


_SCHEMA = _schema()


def _parse_value(key: str, kind: str, text: str, where: str):
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            if text.lower() in ("true", "1", "yes"):
                return True
            if text.lower() in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if kind == "str":
            return text
        if kind == "int3":
            parts = tuple(int(p) for p in text.split(","))
            if len(parts) != 3:
                raise ValueError("need exactly three comma-separated values")
            return parts
        if kind == "ints":
            return tuple(int(p) for p in text.split(","))
        if kind == "float2_or_none":
            if text.lower() in ("none", "auto", ""):
                return None
            parts = tuple(float(p) for p in text.split(","))
            if len(parts) != 2:
                raise ValueError("need exactly two comma-separated values")
            return parts
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for key '{key}': {exc}") from None
    raise ConfigError(f"{where}: unhandled kind {kind} for key '{key}'")


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def apply_setting(run: RunConfig, key: str, text: str, where: str = "override") -> None:
    if key not in _SCHEMA:
        raise ConfigError(f"{where}: unknown key '{key}'")
    owner, kind = _SCHEMA[key]
    value = _parse_value(key, kind, text, where)
    target = run.model if owner == "model" else run
    setattr(target, key, value)


def parse_config(text: str, where: str = "config") -> RunConfig:
    run = RunConfig()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{where} line {line_no}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        apply_setting(run, key.strip(), value.strip(), where=f"{where} line {line_no}")
    return run


def load_config(path: str) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read(), where=path)


def format_config(run: RunConfig) -> str:
    lines = []
    for key, (owner, _) in _SCHEMA.items():
        target = run.model if owner == "model" else run
        lines.append(f"{key}={_format_value(getattr(target, key))}")
    return "\n".join(lines) + "\n"


def save_config(run: RunConfig, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(format_config(run))


# -- checkpoint embedding ----------------------------------------------------------


def config_entries(run: RunConfig) -> list[tuple[str, Tensor]]:
    """Numeric/boolean fields as scalar pseudo-parameters (strings excluded)."""
    out: list[tuple[str, Tensor]] = []
    for key, (owner, kind) in _SCHEMA.items():
        if kind == "str":
            continue
        value = getattr(run.model if owner == "model" else run, key)
        if value is None:
            out.append((f"config/{key}.none", Tensor(np.float64(1.0))))
        elif isinstance(value, tuple):
            for i, v in enumerate(value):
                out.append((f"config/{key}.{i}", Tensor(np.float64(v))))
        else:
            out.append((f"config/{key}", Tensor(np.float64(value))))
    return out


def config_from_entries(state: dict[str, np.ndarray]) -> RunConfig:
    """Rebuild a RunConfig from checkpoint pseudo-parameters."""
    run = RunConfig()
    for key, (owner, kind) in _SCHEMA.items():
        if kind == "str":
            continue
        target = run.model if owner == "model" else run
        if f"config/{key}.none" in state:
            setattr(target, key, None)
            continue
        if kind in ("int3", "ints", "float2_or_none"):
            parts = []
            i = 0
            while f"config/{key}.{i}" in state:
                parts.append(state[f"config/{key}.{i}"].item())
                i += 1
            if not parts:
                continue
            cast = float if kind == "float2_or_none" else int
            setattr(target, key, tuple(cast(p) for p in parts))
            continue
        name = f"config/{key}"
        if name not in state:
            continue
        raw = state[name].item()
        if kind == "int":
            setattr(target, key, int(raw))
        elif kind == "bool":
            setattr(target, key, bool(raw))
        else:
            setattr(target, key, float(raw))
    return run


def strip_config_entries(state: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: v for k, v in state.items() if not k.startswith("config/")}
