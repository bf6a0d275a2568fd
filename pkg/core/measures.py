"""
Reference Gaussian free field, Cameron-Martin shifts and Gibbs potentials.

Every Gibbs measure is handled as a reweighting of the GFF mu_0 by
exp(-potential); normalizing constants are never computed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterator, Sequence

import numpy as np
from loguru import logger

from core.errors import ModelError
from core.norms import h10_norm, h10_pairing, lp_norm
from core.spectral_field import (
    P_MAX,
    FourierField,
    ModeTruncation,
    TorusSpec,
    WickBundle,
    bundle_bytes,
    dealiased_size,
    laplacian_eigenvalues,
    synthesize,
    wick_bundle,
)
from core.streams import SampleLayout, map_chunks


class ModelKind(str, Enum):
    GFF = "gff"
    PHI4_1 = "phi4_1"
    PPHI2 = "pphi2"
    PHI4_3 = "phi4_3"


def validate_polynomial(coeffs: Sequence[float]) -> tuple[float, ...]:
    """Coefficients a_0..a_2k of an even-degree polynomial with a_2k > 0."""
    coeffs = tuple(float(a) for a in coeffs)
    if not coeffs:
        raise ModelError("Polynomial needs at least one coefficient")
    degree = len(coeffs) - 1
    if degree % 2:
        raise ModelError(f"Polynomial degree must be even, got {degree}")
    if coeffs[-1] <= 0:
        raise ModelError(f"Leading coefficient must be positive, got {coeffs[-1]}")
    if degree > P_MAX:
        raise ModelError(f"Polynomial degree {degree} exceeds the supported {P_MAX}")
    return coeffs


@dataclass(frozen=True)
class GibbsModel:
    """
    Which measure is sampled. ``N`` is the sampler cutoff; for PHI4_3 the
    potential acts on the level-``level`` truncation with counterterm
    C_n = -counterterm_scale * log(level).
    """

    kind: ModelKind
    torus: TorusSpec
    N: int
    coeffs: tuple[float, ...] = ()
    level: int | None = None
    counterterm_scale: float = 1.0
    wick_quadratic: bool = True

    def __post_init__(self):
        ModeTruncation(self.N, self.torus.d)
        if self.kind == ModelKind.PHI4_1 and self.torus.d != 1:
            raise ModelError("The plain quartic model lives in d = 1")
        if self.kind == ModelKind.PPHI2:
            object.__setattr__(self, "coeffs", validate_polynomial(self.coeffs))
        if self.kind == ModelKind.PHI4_3:
            if self.torus.d != 3:
                raise ModelError("The renormalized quartic model lives in d = 3")
            if self.level is None or not 2 <= self.level <= self.N:
                raise ModelError(f"Level must lie in 2..{self.N}, got {self.level}")
            if self.counterterm_scale <= 0:
                raise ModelError(f"Counterterm scale must be positive, got {self.counterterm_scale}")

    @classmethod
    def gff(cls, torus: TorusSpec, N: int) -> "GibbsModel":
        return cls(ModelKind.GFF, torus, N)

    @classmethod
    def phi4_1(cls, N: int, mass: float = 0.0) -> "GibbsModel":
        return cls(ModelKind.PHI4_1, TorusSpec(1, mass), N)

    @classmethod
    def pphi2(cls, torus: TorusSpec, N: int, coeffs: Sequence[float]) -> "GibbsModel":
        return cls(ModelKind.PPHI2, torus, N, coeffs=tuple(coeffs))

    @classmethod
    def phi4_2(cls, N: int, mass: float = 0.0) -> "GibbsModel":
        return cls.pphi2(TorusSpec(2, mass), N, (0.0, 0.0, 0.0, 0.0, 0.25))

    @classmethod
    def phi4_3(cls, N: int, level: int, counterterm_scale: float = 1.0, mass: float = 0.0) -> "GibbsModel":
        return cls(ModelKind.PHI4_3, TorusSpec(3, mass), N, level=level, counterterm_scale=counterterm_scale)

    def at_level(self, level: int) -> "GibbsModel":
        return replace(self, level=level)

    @property
    def trunc(self) -> ModeTruncation:
        return ModeTruncation(self.N, self.torus.d)

    @property
    def degree(self) -> int:
        if self.kind == ModelKind.GFF:
            return 0
        if self.kind == ModelKind.PPHI2:
            return len(self.coeffs) - 1
        return 4

    @property
    def counterterm(self) -> float:
        if self.kind != ModelKind.PHI4_3:
            return 0.0
        return -self.counterterm_scale * math.log(self.level)

    @property
    def potential_level(self) -> int:
        return self.level if self.kind == ModelKind.PHI4_3 else self.N


@dataclass(frozen=True, eq=False)
class CameronMartinShift:
    z: FourierField
    h10_sq: float = field(init=False)

    def __post_init__(self):
        if self.z.batch_shape:
            raise ValueError("A shift is a single field")
        object.__setattr__(self, "h10_sq", h10_norm(self.z) ** 2)


def sample_gff(
    trunc: ModeTruncation,
    torus: TorusSpec,
    rng: np.random.Generator,
    size: int | None = None,
) -> FourierField:
    """
    GFF samples with E|phi_k|^2 = 1 / lambda_k (real and imaginary parts
    each of variance 1 / (2 lambda_k)) and phi_{-k} = conj(phi_k).
    """
    batch = () if size is None else (size,)
    shape = batch + trunc.shape
    sigma = np.sqrt(1.0 / laplacian_eigenvalues(torus, trunc.N))
    noise = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)
    mirrored = np.conj(noise[(Ellipsis,) + (slice(None, None, -1),) * torus.d])
    return FourierField(torus, trunc, sigma * (noise + mirrored) / math.sqrt(2.0))


def cm_log_weight(shift: CameronMartinShift, phi: FourierField):
    """-z*(phi) - |z|^2_{H^1_0} / 2, with z*(phi) = sum_k lambda_k z_k conj(phi_k)."""
    return -h10_pairing(shift.z, phi) - 0.5 * shift.h10_sq


def model_bundle(model: GibbsModel, phi: FourierField) -> WickBundle:
    """The Wick bundle a model's potential reads, at the model's level."""
    p_max = 1 if model.kind in (ModelKind.GFF, ModelKind.PHI4_1) else model.degree
    return wick_bundle(phi, p_max=p_max, level=model.potential_level)


def potential(model: GibbsModel, bundle: WickBundle):
    """Unnormalized minus-log-density of the model relative to mu_0."""
    base = bundle.base
    if model.kind == ModelKind.GFF:
        return np.zeros(base.batch_shape) if base.batch_shape else 0.0
    if model.kind != ModelKind.PHI4_1 and bundle.p_max < model.degree:
        raise ModelError(f"Bundle holds powers up to {bundle.p_max}, model needs {model.degree}")
    if bundle.level_n != model.potential_level:
        raise ModelError(f"Bundle at level {bundle.level_n}, model reads level {model.potential_level}")
    if model.kind == ModelKind.PHI4_1:
        return 0.25 * lp_norm(synthesize(base, dealiased_size(2 * base.N)), 4) ** 4
    if model.kind == ModelKind.PPHI2:
        return sum(a * bundle.power(j).mean for j, a in enumerate(model.coeffs) if a != 0.0)
    quadratic = bundle.power(2).mean
    if not model.wick_quadratic:
        quadratic = quadratic + bundle.c_n
    return 0.25 * (bundle.power(4).mean - model.counterterm * quadratic)


def log_weight(model: GibbsModel, phi: FourierField):
    return -potential(model, model_bundle(model, phi))


def weight_bytes(model: GibbsModel) -> int:
    """Per-sample memory of the bundle behind log_weight."""
    if model.kind == ModelKind.GFF:
        return 0
    p_max = 1 if model.kind == ModelKind.PHI4_1 else model.degree
    return bundle_bytes(model.torus.d, model.potential_level, p_max)


def sample_batch(
    model: GibbsModel,
    count: int,
    layout: SampleLayout | None = None,
    threads: int | None = None,
) -> Iterator[tuple[FourierField, np.ndarray]]:
    """
    Chunks of GFF samples with their self-normalized importance log-weights
    -potential. Deterministic given the layout.
    """
    layout = layout or SampleLayout.build(count)
    logger.info(f"Sampling {layout.count} fields for {model.kind.value} at cutoff {model.N}")

    def chunk(rng: np.random.Generator, size: int):
        phi = sample_gff(model.trunc, model.torus, rng, size)
        return phi, np.asarray(log_weight(model, phi), dtype=float)

    yield from map_chunks(chunk, layout, threads, desc="sample_batch")
