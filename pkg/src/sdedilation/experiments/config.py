"""Experiment configuration schema."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .builtins import BUILTINS

EXPERIMENTS = ("pathwise3d", "weak2conv", "spde_moment", "lightcone_decay", "invariants")


class ConfigError(ValueError):
    """Raised with one diagnostic line per problem."""


def _multiple(a: float, b: float) -> bool:
    """``a`` is a positive integer multiple of ``b`` within rounding."""
    k = round(a / b)
    return k >= 1 and abs(k * b - a) <= 1e-9 * max(1.0, abs(a))


class ChainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    M: int = Field(64, ge=2)
    h: float = Field(1.0, gt=0)
    p_star: Union[float, list[float]] = 0.1
    use_mlc: bool = False

    @property
    def p_values(self) -> list[float]:
        return list(self.p_star) if isinstance(self.p_star, list) else [self.p_star]


class SystemConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    builtin: str
    params: dict = Field(default_factory=dict)

    @model_validator(mode="after")
    def _known(self):
        if self.builtin not in BUILTINS:
            raise ValueError(f"unknown builtin {self.builtin!r}; choose from {sorted(BUILTINS)}")
        return self


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    experiment: Literal["pathwise3d", "weak2conv", "spde_moment", "lightcone_decay", "invariants"]
    system: Optional[SystemConfig] = None
    chain: ChainConfig = Field(default_factory=ChainConfig)
    scheme: str = "weak1"
    dt: Optional[float] = Field(None, gt=0)
    dt_values: Optional[list[float]] = None
    tau: Optional[float] = Field(None, gt=0)
    T: float = Field(1.0, gt=0)
    samples: int = Field(1000, ge=1)
    reference_samples: int = Field(1000000, ge=1)
    reference_dt: float = Field(2.0**-12, gt=0)
    m_values: Optional[list[int]] = None
    criteria: Optional[list[int]] = None
    dilated: bool = False
    readout: Literal["lh", "site"] = "site"
    seed: int = 0
    output: Optional[str] = None

    @model_validator(mode="after")
    def _grid(self):
        if self.dt is not None and not _multiple(self.T, self.dt):
            raise ValueError(f"dt={self.dt} does not divide T={self.T}")
        if self.tau is not None:
            if not _multiple(self.T, self.tau):
                raise ValueError(f"tau={self.tau} does not divide T={self.T}")
            if self.dt is not None and not _multiple(self.tau, self.dt):
                raise ValueError(f"dt={self.dt} does not divide tau={self.tau}")
        for d in self.dt_values or []:
            if d <= 0 or not _multiple(self.T, d):
                raise ValueError(f"dt value {d} does not divide T={self.T}")
        if self.scheme not in ("em", "weak1", "weak1_kraus", "weak2", "weak2_measurement"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        return self


DEFAULTS: dict[str, dict] = {
    "pathwise3d": {
        "experiment": "pathwise3d",
        "system": {"builtin": "example3d", "params": {"sigma": 1.0}},
        "chain": {"M": 64, "h": 1.0, "p_star": [0.4, 0.1], "use_mlc": False},
        "scheme": "weak1", "dt": 1e-3, "T": 1.0, "readout": "site", "seed": 2024,
    },
    "weak2conv": {
        "experiment": "weak2conv",
        "system": {"builtin": "weak2", "params": {}},
        "chain": {"M": 500, "h": 2.0, "p_star": 0.1, "use_mlc": True},
        "scheme": "weak2", "T": 1.0, "dt_values": [2.0**-k for k in range(4, 9)],
        "samples": 100000, "reference_samples": 1000000, "reference_dt": 2.0**-12, "seed": 17,
    },
    "spde_moment": {
        "experiment": "spde_moment",
        "system": {"builtin": "spde", "params": {"N_grid": 16, "eps": 0.1, "beta": 0.5, "sigma1": 0.5, "sigma2": 0.3}},
        "chain": {"M": 32, "h": 1.0, "p_star": 5e-6, "use_mlc": True},
        "T": 1.0, "seed": 0,
    },
    "lightcone_decay": {
        "experiment": "lightcone_decay",
        "system": {"builtin": "example3d", "params": {"sigma": 1.0}},
        "chain": {"M": 32, "h": 1.0, "p_star": 0.1, "use_mlc": False},
        "scheme": "weak1", "dt": 1e-3, "T": 0.182, "samples": 200, "m_values": [4, 6, 8, 10, 12], "seed": 3,
    },
    "invariants": {
        "experiment": "invariants",
        "criteria": [1, 2, 3, 5, 6, 8, 9, 10],
        "seed": 0,
    },
}


def default_config(name: str) -> ExperimentConfig:
    if name not in DEFAULTS:
        raise ConfigError(f"unknown experiment {name!r}; choose from {list(EXPERIMENTS)}")
    return ExperimentConfig.model_validate(DEFAULTS[name])


def format_validation_error(err: ValidationError) -> list[str]:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return lines


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse JSON text; errors carry line/column or field paths."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{source}: top level must be a JSON object")
    name = doc.get("experiment")
    merged = dict(DEFAULTS.get(name, {})) if isinstance(name, str) else {}
    merged.update(doc)
    try:
        return ExperimentConfig.model_validate(merged)
    except ValidationError as exc:
        raise ConfigError("\n".join(f"{source}: {line}" for line in format_validation_error(exc))) from exc


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"{p}: cannot read ({exc.strerror})") from exc
    return parse_config(text, str(p))
