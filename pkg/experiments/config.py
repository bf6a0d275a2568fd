"""Experiment descriptions: pydantic models loaded from YAML or JSON files."""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, Field, ValidationError, model_validator

from core.balls import BallKind, BallSpec
from core.config import settings
from core.errors import ConfigError
from core.measures import GibbsModel, ModelKind, validate_polynomial
from core.spectral_field import P_MAX, FourierField, TorusSpec, trig_field
from core.streams import SampleLayout
from evaluation.estimators import Schedule, check_compensation

ExperimentKind = Literal[
    "om_limit",
    "degeneracy3d",
    "wick_moment",
    "joint_limit",
    "third_order",
    "second_order",
    "oracle_suite",
]
SCHEDULED = ("joint_limit", "third_order")


class TorusConfig(BaseModel):
    d: Literal[1, 2, 3]
    mass: float = Field(default=0.0, ge=0)

    def build(self) -> TorusSpec:
        return TorusSpec(self.d, self.mass)


class ModeConfig(BaseModel):
    """One mode k with complex amplitude re + i im; the conjugate goes to -k."""

    k: list[int]
    re: float = 0.0
    im: float = 0.0


class FieldConfig(BaseModel):
    modes: list[ModeConfig] = Field(default_factory=list)
    N: Optional[int] = Field(default=None, ge=1)

    def build(self, torus: TorusSpec) -> FourierField:
        if not self.modes:
            return FourierField.zeros(torus, self.N or 1)
        return trig_field(torus, [(m.k, complex(m.re, m.im)) for m in self.modes], self.N)


class ModelConfig(BaseModel):
    kind: ModelKind
    N: int = Field(ge=1)
    coeffs: list[float] = Field(default_factory=list)
    level: Optional[int] = None
    counterterm_scale: float = Field(default=1.0, gt=0)
    wick_quadratic: bool = True

    def build(self, torus: TorusSpec) -> GibbsModel:
        return GibbsModel(
            self.kind,
            torus,
            self.N,
            coeffs=tuple(self.coeffs),
            level=self.level,
            counterterm_scale=self.counterterm_scale,
            wick_quadratic=self.wick_quadratic,
        )


class BallConfig(BaseModel):
    """
    With ``acceptance`` set, ``r_values`` are nominal: the run multiplies them
    by the unit that puts that fraction of ``pilot_count`` GFF samples inside
    the smallest ball at the origin.
    """

    kind: BallKind = BallKind.PLAIN
    r_values: list[float] = Field(min_length=1)
    alpha: float = 0.0
    norm: Literal["besov", "sup"] = "besov"
    degree: int = 4
    kappa: float = Field(default=0.1, gt=0)
    n_set: list[int] = Field(default_factory=list)
    counterterm_scale: float = Field(default=1.0, gt=0)
    acceptance: Optional[float] = Field(default=None, gt=0, lt=1)
    pilot_count: int = Field(default=1024, ge=32)

    @model_validator(mode="after")
    def _radii_positive(self):
        if any(r <= 0 for r in self.r_values):
            raise ValueError("radii must be positive")
        return self

    def build(self, r: Optional[float] = None) -> BallSpec:
        return BallSpec(
            self.kind,
            self.r_values[0] if r is None else r,
            alpha=self.alpha,
            norm=self.norm,
            degree=self.degree,
            kappa=self.kappa,
            n_set=tuple(self.n_set),
            counterterm_scale=self.counterterm_scale,
        )


class ScheduleConfig(BaseModel):
    exponent: float = Field(default=0.5, gt=0)
    n_values: Optional[list[int]] = None


class SamplerConfig(BaseModel):
    count: int = Field(ge=1)
    seed: Optional[int] = None
    chunk_size: Optional[int] = Field(default=None, ge=1)
    threads: Optional[int] = Field(default=None, ge=1)

    def layout(self) -> SampleLayout:
        return SampleLayout.build(self.count, self.seed, self.chunk_size)


class WickConfig(BaseModel):
    orders: list[int] = Field(default_factory=lambda: [3])
    levels: list[int] = Field(default_factory=lambda: [2, 4, 8])
    test_field: FieldConfig = Field(default_factory=FieldConfig)


class OutputConfig(BaseModel):
    directory: str = Field(default_factory=lambda: settings.PHILAB_RESULTS_DIR)
    basename: Optional[str] = None


class ExperimentConfig(BaseModel):
    name: str
    experiment: ExperimentKind
    diagnostics: bool = False
    torus: TorusConfig
    model: Optional[ModelConfig] = None
    z1: FieldConfig = Field(default_factory=FieldConfig)
    z2: FieldConfig = Field(default_factory=FieldConfig)
    ball: Optional[BallConfig] = None
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    wick: WickConfig = Field(default_factory=WickConfig)
    sampler: SamplerConfig
    output: OutputConfig = Field(default_factory=OutputConfig)

    @model_validator(mode="after")
    def _sections_present(self):
        if self.experiment in ("om_limit", "second_order", "oracle_suite") and (
            self.model is None or self.ball is None
        ):
            raise ValueError(f"{self.experiment} needs both a model and a ball section")
        if self.experiment in SCHEDULED + ("degeneracy3d",) and self.ball is None:
            raise ValueError(f"{self.experiment} needs a ball section")
        return self

    @property
    def basename(self) -> str:
        return self.output.basename or self.name

    def schedule_levels(self) -> list[int]:
        if self.schedule.n_values:
            return list(self.schedule.n_values)
        return [max(math.ceil(r**-self.schedule.exponent), 2) for r in self.ball.r_values]

    def build_schedule(self, unit: float = 1.0) -> Schedule:
        """Radii unit * r_values; levels from the nominal radii."""
        if self.schedule.n_values:
            return Schedule(tuple(unit * r for r in self.ball.r_values), tuple(self.schedule.n_values))
        return Schedule.default(self.ball.r_values, self.schedule.exponent, unit)

    def sampler_cutoff(self) -> int:
        """Cutoff of the sampled GFF: the model's, else the largest level or center mode in use."""
        if self.model is not None:
            return self.model.N
        candidates = [_mode_cutoff(self.z1), _mode_cutoff(self.z2)]
        if self.ball is not None:
            candidates += self.ball.n_set
        if self.experiment in SCHEDULED:
            candidates += self.schedule_levels()
        return max(candidates)

    def check_objects(self):
        """
        Build every torus, model, field, ball and schedule the run will use,
        so that invalid parameters fail here with the entry that holds them.
        """
        # 1. Torus, model and centers
        torus = _built("torus", self.torus.build)
        if self.model is not None:
            if self.model.kind == ModelKind.PPHI2:
                _built("model.coeffs", validate_polynomial, self.model.coeffs)
            _built("model", self.model.build, torus)
        cutoff = self.sampler_cutoff()
        centers = {}
        for name in ("z1", "z2"):
            centers[name] = _built(f"{name}.modes", getattr(self, name).build, torus)
            if centers[name].N > cutoff:
                raise ConfigError(f"center cutoff {centers[name].N} exceeds the sampler cutoff {cutoff}", f"{name}.N")

        # 2. Balls at every radius
        if self.ball is not None:
            for r in self.ball.r_values:
                ball = _built("ball", self.ball.build, r)
            if ball.is_3d:
                if torus.d != 3:
                    raise ConfigError(f"{ball.kind.value} balls live in d = 3, got d = {torus.d}", "ball.kind")
                if ball.n_set[-1] > cutoff:
                    raise ConfigError(f"level {ball.n_set[-1]} exceeds the sampler cutoff {cutoff}", "ball.n_set")

        # 3. Wick moments
        if self.experiment in ("wick_moment", "oracle_suite"):
            _built("wick.test_field.modes", self.wick.test_field.build, torus)
            if any(not 1 <= p <= P_MAX for p in self.wick.orders):
                raise ConfigError(f"Wick orders must lie in 1..{P_MAX}, got {self.wick.orders}", "wick.orders")
            if any(n < 1 for n in self.wick.levels):
                raise ConfigError(f"levels must be positive, got {self.wick.levels}", "wick.levels")

        # 4. Schedule and compensation
        if self.experiment in SCHEDULED:
            schedule = _built("schedule", self.build_schedule)
            if max(schedule.n_values) > cutoff:
                raise ConfigError(f"levels {list(schedule.n_values)} exceed the sampler cutoff {cutoff}", "schedule")
            if self.experiment == "joint_limit":
                _built("z2.modes", check_compensation, centers["z1"], centers["z2"], schedule.n_values)
        return self


def _mode_cutoff(field: FieldConfig) -> int:
    return field.N or max((abs(v) for mode in field.modes for v in mode.k), default=1)


def _built(path: str, build, *args):
    try:
        return build(*args)
    except ValueError as e:
        raise ConfigError(str(e), path) from e


def _field_path(error: ValidationError) -> tuple[str, str]:
    first = error.errors()[0]
    return ".".join(str(part) for part in first["loc"]), first["msg"]


def parse_config(data: dict) -> ExperimentConfig:
    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        path, message = _field_path(e)
        raise ConfigError(message, path) from e
    return config.check_objects()


def load_config(path: str | Path) -> ExperimentConfig:
    """Read an experiment description from .yaml/.yml or .json."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file {path} not found")
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"Cannot parse {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path} does not describe a mapping")
    return parse_config(data)


def apply_override(data: dict, assignment: str) -> dict:
    """Set a dotted key (``sampler.count=1000``); the value is read as YAML."""
    if "=" not in assignment:
        raise ConfigError(f"Override {assignment!r} is not of the form key=value")
    key, raw = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = data
    for i, part in enumerate(parts[:-1]):
        child = node.get(part) if isinstance(node, dict) else None
        if child is None:
            child = {}
            node[part] = child
        if not isinstance(child, dict):
            raise ConfigError("cannot descend into a non-mapping", ".".join(parts[: i + 1]))
        node = child
    node[parts[-1]] = yaml.safe_load(raw)
    return data


def dump_config(config: ExperimentConfig) -> dict:
    return config.model_dump(mode="json")
