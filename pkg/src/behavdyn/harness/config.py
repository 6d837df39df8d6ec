"""Validated run configuration.

A :class:`RunConfig` is a JSON document with a ``command`` and one section
per command family.  Unknown keys are rejected at every level and numeric
ranges are checked by the domain types themselves, so a config that parses
is one the simulation modules accept.
"""

from __future__ import annotations

import json
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..chaos import MapSpec
from ..coordination import ExperimentDesign, HkbParams, TemperatureProtocol
from ..errors import BehavdynError
from ..flock import FlockParams

__all__ = [
    "ConfigError",
    "FlockSection",
    "HkbSection",
    "ProtocolSection",
    "ExperimentSection",
    "EntropySection",
    "ChaosSection",
    "SweepSection",
    "RunConfig",
    "COMMANDS",
    "parse_config",
    "load_config",
    "dump_config",
]

COMMANDS = ("flock", "hkb", "experiment", "entropy", "chaos", "sweep")
_U64_MAX = (1 << 64) - 1


class ConfigError(BehavdynError, ValueError):
    """Malformed or out-of-range configuration."""


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class FlockSection(_Section):
    M: int = 1000
    D: float = 2.0
    E: float = 5.0
    V: float = 1.0
    max_speed: float = 10.0
    k: float = 0.1
    k_prime: float = 0.5
    t_ties: float = 0.55
    W: float = 1.0
    omega_sel: float = 1.0
    nodes: int = 10
    mode: Literal["PI1", "PI2", "PI3"] = "PI3"
    width: float = 100.0
    height: float = 100.0
    boundary: Literal["wrap", "clamp"] = "wrap"
    flip: bool = True
    steps: int = Field(50, ge=1)

    def to_params(self):
        return FlockParams(**self.model_dump(exclude={"steps"}))

    @model_validator(mode="after")
    def _check(self):
        self.to_params()
        return self


class HkbSection(_Section):
    a: float = 1.0
    b: float = 0.5
    c: float = 0.0
    d: float = 0.0
    delta_omega: float = 0.0
    Q: float = 0.5
    phi0: float = 0.0
    dt: float = Field(0.005, gt=0)
    duration: float = Field(60.0, gt=0)
    bins: int = Field(36, ge=2)

    def to_params(self):
        return HkbParams(a=self.a, b=self.b, c=self.c, d=self.d,
                         delta_omega=self.delta_omega, Q=self.Q)

    @model_validator(mode="after")
    def _check(self):
        self.to_params()
        return self


class ProtocolSection(_Section):
    T_mean: float = 36.8
    amplitude: float = 0.5
    perturbation: Dict[str, float] = Field(
        default_factory=lambda: {"NORMAL": 0.0, "HEAT": 1.0, "ICE": -1.0})
    gain_c: float = 0.0
    gain_d: float = -0.2

    def to_protocol(self):
        return TemperatureProtocol(T_mean=self.T_mean, amplitude=self.amplitude,
                                   perturbation=dict(self.perturbation),
                                   gain_c=self.gain_c, gain_d=self.gain_d)

    @model_validator(mode="after")
    def _check(self):
        self.to_protocol()
        return self


class ExperimentSection(_Section):
    circadian_points: List[float] = Field(default_factory=lambda: [5.0, 12.0, 17.0, 0.0])
    participants: int = 8
    trials_per_point: int = 6
    conditions: List[Literal["NORMAL", "HEAT", "ICE"]] = Field(
        default_factory=lambda: ["NORMAL"], min_length=1)
    jitter: float = Field(0.1, ge=0)
    sample_stride: int = Field(20, ge=1)
    write_samples: bool = True
    protocol: ProtocolSection = Field(default_factory=ProtocolSection)

    def design(self, condition):
        return ExperimentDesign(circadian_points=tuple(self.circadian_points),
                                participants=self.participants,
                                trials_per_point=self.trials_per_point,
                                condition=condition)

    @model_validator(mode="after")
    def _check(self):
        if len(set(self.conditions)) != len(self.conditions):
            raise ValueError("conditions must not repeat")
        if len(set(self.circadian_points)) != len(self.circadian_points):
            raise ValueError("circadian_points must not repeat")
        for cond in self.conditions:
            self.design(cond)
            self.protocol.to_protocol().offset(cond)
        return self


class EntropySection(_Section):
    probs: Optional[List[float]] = None
    renormalize: bool = False
    series_csv: Optional[str] = None
    column: str = "phi_radians"
    bins: int = Field(36, ge=2)


class ChaosSection(_Section):
    r_values: List[float] = Field(default_factory=lambda: [2.5, 3.2, 3.9, 4.0], min_length=1)
    x0: float = Field(0.3, ge=0, le=1)
    n: int = Field(1_000_000, ge=1000)
    burn_in: int = Field(1000, ge=0)
    epsilon0: float = Field(1e-9, gt=0)
    divergence_steps: int = Field(20, ge=2)

    @model_validator(mode="after")
    def _check(self):
        for r in self.r_values:
            MapSpec(r)
        return self


class SweepSection(_Section):
    target: Literal["flock", "hkb", "chaos"] = "flock"
    axis: str = "t_ties"
    grid: List[float] = Field(
        default_factory=lambda: [round(0.50 + 0.01 * i, 2) for i in range(11)], min_length=1)
    replicates: int = Field(1, ge=1)


class RunConfig(_Section):
    command: Literal["flock", "hkb", "experiment", "entropy", "chaos", "sweep"]
    seed: int = Field(0, ge=0, le=_U64_MAX)
    output_dir: str = "out"
    format: Literal["csv", "json", "dat"] = "csv"
    jobs: int = Field(1, ge=1)
    flock: FlockSection = Field(default_factory=FlockSection)
    hkb: HkbSection = Field(default_factory=HkbSection)
    experiment: ExperimentSection = Field(default_factory=ExperimentSection)
    entropy: EntropySection = Field(default_factory=EntropySection)
    chaos: ChaosSection = Field(default_factory=ChaosSection)
    sweep: SweepSection = Field(default_factory=SweepSection)

    def with_overrides(self, **overrides):
        """Return a validated copy with top-level keys replaced (``None`` ignored)."""
        data = self.model_dump()
        data.update({k: v for k, v in overrides.items() if v is not None})
        return parse_config(data)


def _format_error(exc):
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        msg = err["msg"]
        if msg.startswith("Value error, "):
            msg = msg[len("Value error, "):]
        if err["type"] == "extra_forbidden":
            msg = "unknown key"
        parts.append(f"{loc}: {msg}")
    return "; ".join(parts)


def parse_config(doc):
    """Validate a config given as a JSON string or an already-decoded mapping.

    Raises
    ------
    ConfigError
        On malformed JSON, unknown keys, type mismatches or out-of-range
        values; the message names the offending key and the constraint.
    """
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    try:
        return RunConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(_format_error(exc)) from None


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def dump_config(cfg):
    """Canonical JSON text of a config (sorted keys, every default explicit)."""
    return json.dumps(cfg.model_dump(mode="json"), sort_keys=True, indent=2)
