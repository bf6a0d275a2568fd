"""
Ball specifications and membership predicates.

A ball is a list of norm conditions on phi - z: a single Besov or sup norm
for plain balls, the C^{-alpha} norms of the Wick powers 1..2k-1 for the
enhanced P(phi)_2 sets, and three conditions per level n for the 3D sets.
The 3D sets quantify over a finite level set ``n_set`` rather than all n.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Literal

import numpy as np
from loguru import logger

from core.errors import AliasingError, ModelError
from core.measures import GibbsModel, log_weight, sample_gff, weight_bytes
from core.norms import besov_bytes, besov_norm, sup_norm
from core.spectral_field import FourierField, bundle_bytes, project, variance_constant, wick_bundle
from core.streams import SampleLayout, map_chunks
from evaluation.metrics import Estimate, product_estimate


class BallKind(str, Enum):
    PLAIN = "plain"
    ENHANCED_P = "enhanced_p"
    ENHANCED_3D = "enhanced_3d"
    FULLY_RENORM_3D = "fully_renorm_3d"


NormKind = Literal["besov", "sup"]


@dataclass(frozen=True, eq=False)
class BallSpec:
    """
    ``alpha`` is the Besov index of plain balls and the negative index of the
    enhanced 2D sets; ``kappa`` and ``n_set`` parametrize the 3D sets.
    """

    kind: BallKind
    r: float
    alpha: float = 0.0
    norm: NormKind = "besov"
    degree: int = 4
    kappa: float = 0.1
    n_set: tuple[int, ...] = ()
    counterterm_scale: float = 1.0
    center: FourierField | None = None

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"Ball radius must be positive, got {self.r}")
        if self.norm not in ("besov", "sup"):
            raise ValueError(f"Unknown ball norm {self.norm!r}")
        if self.kind == BallKind.ENHANCED_P and (self.degree < 2 or self.degree % 2):
            raise ModelError(f"Enhanced balls need an even degree >= 2, got {self.degree}")
        if self.kind in (BallKind.ENHANCED_3D, BallKind.FULLY_RENORM_3D):
            levels = tuple(int(n) for n in self.n_set)
            if not levels:
                raise ValueError("A 3D ball needs at least one level")
            if list(levels) != sorted(set(levels)) or levels[0] < 2:
                raise ValueError(f"Levels must be increasing and at least 2, got {levels}")
            object.__setattr__(self, "n_set", levels)
        if self.center is not None and self.center.batch_shape:
            raise ValueError("A ball center is a single field")

    @classmethod
    def plain(cls, r: float, alpha: float = 0.0, norm: NormKind = "besov", center=None) -> "BallSpec":
        return cls(BallKind.PLAIN, r, alpha=alpha, norm=norm, center=center)

    @classmethod
    def enhanced_p(cls, r: float, alpha: float, degree: int, center=None) -> "BallSpec":
        return cls(BallKind.ENHANCED_P, r, alpha=alpha, degree=degree, center=center)

    @classmethod
    def enhanced_2d(cls, r: float, alpha: float, center=None) -> "BallSpec":
        return cls.enhanced_p(r, alpha, 4, center)

    @classmethod
    def enhanced_3d(cls, r: float, kappa: float, n_set, center=None) -> "BallSpec":
        return cls(BallKind.ENHANCED_3D, r, kappa=kappa, n_set=tuple(n_set), center=center)

    @classmethod
    def fully_renorm_3d(
        cls, r: float, kappa: float, n_set, counterterm_scale: float = 1.0, center=None
    ) -> "BallSpec":
        return cls(
            BallKind.FULLY_RENORM_3D,
            r,
            kappa=kappa,
            n_set=tuple(n_set),
            counterterm_scale=counterterm_scale,
            center=center,
        )

    def centered_at(self, center: FourierField | None) -> "BallSpec":
        return replace(self, center=center)

    def with_radius(self, r: float) -> "BallSpec":
        return replace(self, r=r)

    @property
    def is_3d(self) -> bool:
        return self.kind in (BallKind.ENHANCED_3D, BallKind.FULLY_RENORM_3D)


@dataclass(frozen=True)
class BallCondition:
    label: str
    value: np.ndarray | float
    threshold: float

    @property
    def holds(self):
        return np.asarray(self.value) < self.threshold


def _shifted(spec: BallSpec, phi: FourierField) -> FourierField:
    if spec.center is None:
        return phi
    if spec.center.N > phi.N:
        raise AliasingError(f"Ball center has cutoff {spec.center.N}, field only {phi.N}")
    return phi - spec.center


def ball_conditions(spec: BallSpec, phi: FourierField) -> list[BallCondition]:
    """Every norm condition of the ball evaluated at phi (per sample for batches)."""
    diff = _shifted(spec, phi)

    if spec.kind == BallKind.PLAIN:
        if spec.norm == "sup":
            return [BallCondition("sup", sup_norm(diff), spec.r)]
        return [BallCondition(f"C^{spec.alpha:g}", besov_norm(diff, spec.alpha), spec.r)]

    if spec.kind == BallKind.ENHANCED_P:
        bundle = wick_bundle(diff, p_max=spec.degree - 1, c_n=variance_constant(phi.torus, phi.N))
        return [
            BallCondition(f":{p}: C^{-spec.alpha:g}", besov_norm(bundle.power(p), -spec.alpha), spec.r)
            for p in range(1, spec.degree)
        ]

    if spec.n_set[-1] > phi.N:
        raise AliasingError(f"Level {spec.n_set[-1]} exceeds the field cutoff {phi.N}")
    conditions = []
    for n in spec.n_set:
        bundle = wick_bundle(project(diff, n), p_max=3)
        cube = bundle.power(3)
        if spec.kind == BallKind.FULLY_RENORM_3D:
            counterterm = -spec.counterterm_scale * math.log(n)
            cube = cube - counterterm * bundle.base
        conditions += [
            BallCondition(f"n={n} :1: C^{-0.5 - spec.kappa:g}", besov_norm(bundle.base, -0.5 - spec.kappa), spec.r),
            BallCondition(f"n={n} :2: C^{-1 - spec.kappa:g}", besov_norm(bundle.power(2), -1.0 - spec.kappa), spec.r),
            BallCondition(
                f"n={n} :3: C^{-1.5 - spec.kappa:g}",
                besov_norm(cube, -1.5 - spec.kappa),
                spec.r * math.log(n),
            ),
        ]
    return conditions


def contains(spec: BallSpec, phi: FourierField):
    """True where phi lies in the ball; an array for batches."""
    inside = np.logical_and.reduce([condition.holds for condition in ball_conditions(spec, phi)])
    return bool(inside) if np.ndim(inside) == 0 else inside


def ball_gauge(spec: BallSpec, phi: FourierField):
    """
    Every threshold is proportional to r, so phi lies in the same ball of
    radius r exactly when its gauge is below r. One norm evaluation then
    serves a whole radius scan.
    """
    conditions = ball_conditions(spec, phi)
    gauge = np.max([np.asarray(c.value, dtype=float) * (spec.r / c.threshold) for c in conditions], axis=0)
    return float(gauge) if np.ndim(gauge) == 0 else gauge


def ball_bytes(spec: BallSpec, d: int, N: int) -> int:
    """Per-sample memory of one gauge evaluation on fields of cutoff N."""
    field = 16 * (2 * N + 1) ** d
    if spec.kind == BallKind.PLAIN:
        return field + besov_bytes(d, N)
    if spec.kind == BallKind.ENHANCED_P:
        p_max = spec.degree - 1
        return field + bundle_bytes(d, N, p_max) + besov_bytes(d, p_max * N)
    return field + max(bundle_bytes(d, n, 3) + besov_bytes(d, 3 * n) for n in spec.n_set)


def acceptance_rate(
    spec: BallSpec,
    model: GibbsModel,
    count: int,
    layout: SampleLayout | None = None,
    threads: int | None = None,
) -> Estimate:
    """Self-normalized probability of the ball under the model, from GFF samples."""
    layout = layout or SampleLayout.build(count)

    def chunk(rng: np.random.Generator, size: int):
        phi = sample_gff(model.trunc, model.torus, rng, size)
        return np.asarray(log_weight(model, phi), dtype=float), contains(spec, phi)

    sample_bytes = ball_bytes(spec, model.torus.d, model.N) + weight_bytes(model)
    parts = map_chunks(chunk, layout, threads, desc="acceptance_rate", sample_bytes=sample_bytes)
    lw = np.concatenate([part[0] for part in parts])
    inside = np.concatenate([part[1] for part in parts])
    estimate = product_estimate([(np.where(inside, lw, -np.inf), 1.0), (lw, -1.0)])
    if estimate.degenerate:
        logger.warning(f"Ball {spec.kind.value} at r={spec.r:g}: only {inside.sum()} acceptances")
    return estimate


def gauge_quantile(
    spec: BallSpec,
    model: GibbsModel,
    fraction: float,
    count: int,
    layout: SampleLayout | None = None,
    threads: int | None = None,
) -> float:
    """
    Radius at which the origin ball holds ``fraction`` of the GFF samples at
    the model cutoff, estimated from ``count`` pilot samples.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"Acceptance fraction must lie in (0, 1), got {fraction}")
    if spec.center is not None:
        raise ValueError("The radius unit is measured on the ball at the origin")
    layout = layout or SampleLayout.build(count)

    def chunk(rng: np.random.Generator, size: int):
        return np.asarray(ball_gauge(spec, sample_gff(model.trunc, model.torus, rng, size)), dtype=float)

    sample_bytes = ball_bytes(spec, model.torus.d, model.N)
    gauges = np.concatenate(map_chunks(chunk, layout, threads, desc="gauge_quantile", sample_bytes=sample_bytes))
    radius = float(np.quantile(gauges, fraction))
    logger.debug(f"Ball {spec.kind.value}: {fraction:.3g} of {gauges.size} pilot samples inside r={radius:.4g}")
    return radius
