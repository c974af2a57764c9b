"""Experiment configuration: an INI file with sections ``model``,
``schedule``, ``data``, ``optimizer`` and ``run``.

Unknown sections or keys are errors. Values are parsed by the type of the
field's default; tuples are comma separated, booleans accept
``true/false/yes/no/1/0``.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    pass


@dataclass
class ModelSection:
    kind: str = "qdense"  # qdense | qunet | uss
    n_image_qubits: int = 6
    layers: int = 47
    guided: bool = True
    reuploads: int = 0
    classes: int = 2
    ancilla: bool = False
    channels: tuple = (2, 4, 8)
    kernel: int = 3
    init_scale: float = math.pi


@dataclass
class ScheduleSection:
    tau: int = 10
    beta_start: float = 0.05
    beta_end: float = 0.5
    target: str = "data"


@dataclass
class DataSection:
    source: str = "digits"  # digits | idx | cifar
    path: str = ""
    labels_path: str = ""
    size: int = 8
    classes: tuple = (0, 1)
    offset: int = 0
    limit: int = 64


@dataclass
class OptimizerSection:
    lr: float = 0.00097
    batch_size: int = 20
    epochs: int = 30
    remap: bool = True


@dataclass
class RunSection:
    seed: int = 0
    checkpoint: str = ""
    n_samples: int = 16
    feature_dim: int = 16
    shots: int = 0
    reset_each_step: bool = True
    n_inpaint: int = 50
    samples: str = ""


@dataclass
class Config:
    model: ModelSection = field(default_factory=ModelSection)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    data: DataSection = field(default_factory=DataSection)
    optimizer: OptimizerSection = field(default_factory=OptimizerSection)
    run: RunSection = field(default_factory=RunSection)

    def to_dict(self) -> dict:
        return {name: dataclasses.asdict(getattr(self, name)) for name in SECTIONS}

    def validate(self) -> "Config":
        m, s, d, o = self.model, self.schedule, self.data, self.optimizer
        checks = [
            ("model.kind", m.kind in ("qdense", "qunet", "uss"), "must be qdense, qunet or uss"),
            ("model.layers", m.layers >= 0, "must be non-negative"),
            ("model.classes", m.classes >= 1, "must be at least 1"),
            ("model.reuploads", m.reuploads >= 0, "must be non-negative"),
            ("model.reuploads", m.reuploads == 0 or m.guided, "re-uploads need a guided model"),
            ("model.reuploads", m.reuploads < max(m.layers, 1), "must be fewer than the layer count"),
            ("schedule.tau", s.tau >= 0, "must be non-negative"),
            ("schedule.target", s.target in ("data", "noise"), "must be data or noise"),
            ("schedule.beta_start", 0 < s.beta_start < 1, "must lie in (0, 1)"),
            ("schedule.beta_end", s.beta_start <= s.beta_end < 1, "must lie in [beta_start, 1)"),
            ("data.source", d.source in ("digits", "idx", "cifar"), "must be digits, idx or cifar"),
            ("data.size", d.size in (8, 28, 32), "must be 8, 28 or 32"),
            ("data.limit", d.limit >= 1, "must be positive"),
            ("optimizer.lr", o.lr >= 0, "must be non-negative"),
            ("optimizer.batch_size", o.batch_size >= 1, "must be positive"),
            ("optimizer.epochs", o.epochs >= 0, "must be non-negative"),
        ]
        for name, ok, why in checks:
            if not ok:
                raise ConfigError(f"{name}: {why}")
        if m.kind in ("qdense", "uss") and d.size * d.size > 1 << m.n_image_qubits:
            raise ConfigError(f"model.n_image_qubits: {d.size}x{d.size} pixels do not fit in {m.n_image_qubits} qubits")
        return self


SECTIONS = ("model", "schedule", "data", "optimizer", "run")


def _parse_value(raw: str, default: Any, where: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(v) for v in raw.replace(" ", "").split(",") if v)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def apply_overrides(cfg: Config, values: dict[str, dict[str, Any]]) -> Config:
    """Set ``values[section][key]`` on ``cfg``; strings are parsed, other
    values are taken as they are."""
    for section, entries in values.items():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        target = getattr(cfg, section)
        known = {f.name for f in dataclasses.fields(target)}
        for key, value in entries.items():
            if key not in known:
                raise ConfigError(f"{section}.{key}: unknown key")
            default = getattr(target, key)
            if isinstance(value, str) and not isinstance(default, str):
                value = _parse_value(value, default, f"{section}.{key}")
            elif isinstance(default, tuple):
                value = tuple(value)
            setattr(target, key, value)
    return cfg


def parse_config(text: str, base: Config | None = None) -> Config:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys are case sensitive
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    values = {s: dict(parser.items(s)) for s in parser.sections()}
    return apply_overrides(base or Config(), values)


def load_config(path, base: Config | None = None) -> Config:
    return parse_config(Path(path).read_text(), base)


def dump_config(cfg: Config) -> str:
    out = []
    for section, entries in cfg.to_dict().items():
        out.append(f"[{section}]")
        for key, value in entries.items():
            if isinstance(value, (tuple, list)):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = repr(value)
            out.append(f"{key} = {value}")
        out.append("")
    return "\n".join(out)


def from_dict(values: dict) -> Config:
    return apply_overrides(Config(), values)


# ---------------------------------------------------------------------------
# presets: one per quantum model row of the published learning-rate table


def _qdense(layers, lr, guided, target="data", reuploads=0, size=8, qubits=6, source="digits"):
    return {
        "model": {"kind": "qdense", "layers": layers, "guided": guided, "reuploads": reuploads, "n_image_qubits": qubits},
        "schedule": {"target": target},
        "data": {"size": size, "source": source},
        "optimizer": {"lr": lr, "batch_size": 20},
    }


def _qunet(channels, layers, lr, guided, target="data", size=8, source="digits"):
    return {
        "model": {"kind": "qunet", "channels": channels, "layers": layers, "guided": guided},
        "schedule": {"target": target},
        "data": {"size": size, "source": source},
        "optimizer": {"lr": lr, "batch_size": 10},
    }


def _uss(layers, lr, guided=False, ancilla=False, reuploads=0, size=8, qubits=6, source="digits"):
    return {
        "model": {
            "kind": "uss",
            "layers": layers,
            "guided": guided,
            "ancilla": ancilla or guided,
            "reuploads": reuploads,
            "n_image_qubits": qubits,
        },
        "schedule": {"target": "data"},
        "data": {"size": size, "source": source},
        "optimizer": {"lr": lr, "batch_size": 20},
    }


PRESETS: dict[str, dict] = {
    # MNIST digits 8x8, guided, data target
    "qdense-guided-8": _qdense(47, 0.00097, True),
    "qdense-guided-8-reup3": _qdense(47, 0.00360, True, reuploads=3),
    "qdense-guided-8-reup5": _qdense(47, 0.00345, True, reuploads=5),
    "qdense-guided-8-reup7": _qdense(47, 0.00362, True, reuploads=7),
    # MNIST digits 8x8, unguided, data target
    "qdense-8": _qdense(50, 0.00065, False),
    "qunet-8-l8": _qunet((2, 4, 8), 8, 0.00023, False),
    "qunet-8-l12": _qunet((2, 4, 8), 12, 0.00815, False),
    # MNIST digits 8x8, unguided, noise target
    "qdense-8-noise": _qdense(55, 0.00160, False, "noise"),
    "qunet-8-noise-l8": _qunet((2, 4, 8), 8, 0.00113, False, "noise"),
    "qunet-8-noise-l12": _qunet((2, 4, 8), 12, 0.00912, False, "noise"),
    # MNIST 28x28, guided, noise target
    "qdense-guided-28-noise-l30": _qdense(30, 0.00409, True, "noise", size=28, qubits=10, source="idx"),
    "qdense-guided-28-noise-l60": _qdense(60, 0.00211, True, "noise", size=28, qubits=10, source="idx"),
    "qunet-guided-28-noise-l9": _qunet((2, 4, 8), 9, 0.00287, True, "noise", size=28, source="idx"),
    "qunet-guided-28-noise-l19": _qunet((2, 4, 8), 19, 0.01479, True, "noise", size=28, source="idx"),
    # Fashion-MNIST (32x32), guided, noise target
    "qdense-guided-fashion-l121": _qdense(121, 0.00014, True, "noise", size=32, qubits=10, source="idx"),
    "qdense-guided-fashion-l60": _qdense(60, 0.00723, True, "noise", size=32, qubits=10, source="idx"),
    "qunet-guided-fashion-l8": _qunet((3, 6, 12), 8, 0.00051, True, "noise", size=32, source="idx"),
    "qunet-guided-fashion-l12": _qunet((3, 6, 12), 12, 0.00029, True, "noise", size=32, source="idx"),
    # unitary single sampling, MNIST digits 8x8, unguided
    "uss-8-ancilla-l476": _uss(476, 0.00012, ancilla=True),
    "uss-8-ancilla-l47": _uss(47, 0.00322, ancilla=True),
    "uss-8-l55": _uss(55, 0.00172),
    "uss-8-l555": _uss(555, 0.00002),
    "uss-8-l111": _uss(111, 0.00419),
    "uss-8-ancilla-l95": _uss(95, 0.00104, ancilla=True),
    # the 56-layer model converted to a matrix in the experiments; no table row,
    # learning rate borrowed from the 55-layer row
    "uss-8-l56": _uss(56, 0.00172),
    # unitary single sampling, MNIST digits 8x8, guided
    "uss-guided-8-l476": _uss(476, 0.00022, guided=True),
    "uss-guided-8-l476-reup10": _uss(476, 0.00016, guided=True, reuploads=10),
    "uss-guided-8-l47": _uss(47, 0.00721, guided=True),
    "uss-guided-8-l47-reup10": _uss(47, 0.00220, guided=True, reuploads=10),
    "uss-guided-8-l95": _uss(95, 0.00099, guided=True),
    # unitary single sampling, MNIST digits 32x32, unguided
    "uss-32-l66": _uss(66, 0.00212, size=32, qubits=10, source="idx"),
    "uss-32-l133": _uss(133, 0.00190, size=32, qubits=10, source="idx"),
}


def preset(name: str) -> Config:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}")
    return from_dict(PRESETS[name])
