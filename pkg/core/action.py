"""
Action functionals S(z) = 1/4 int z^4 + 1/2 |z|^2_{H^1_0} and
S_P(z) = int P(z) + 1/2 |z|^2_{H^1_0}, and the small-ball ratio constants
they predict.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from core.measures import GibbsModel, ModelKind, validate_polynomial
from core.norms import h10_norm, lp_norm
from core.spectral_field import (
    FourierField,
    dealiased_size,
    laplacian_eigenvalues,
    pointwise_power,
    synthesize,
)

Functional = Callable[[FourierField], float]


@dataclass(frozen=True)
class ActionValue:
    quartic_part: float
    gradient_part: float

    @property
    def total(self) -> float:
        return self.quartic_part + self.gradient_part


def _gradient_part(z: FourierField) -> float:
    return 0.5 * h10_norm(z) ** 2


def action_phi4(z: FourierField) -> ActionValue:
    grid = synthesize(z, dealiased_size(2 * z.N))
    return ActionValue(quartic_part=0.25 * lp_norm(grid, 4) ** 4, gradient_part=_gradient_part(z))


def action_p(z: FourierField, coeffs: Sequence[float]) -> ActionValue:
    coeffs = validate_polynomial(coeffs)
    half_degree = max((len(coeffs) - 1) // 2, 1)
    grid = synthesize(z, dealiased_size(half_degree * z.N))
    axes = tuple(range(-z.d, 0))
    integral = np.mean(P.polyval(grid.values, coeffs), axis=axes)
    return ActionValue(quartic_part=float(integral), gradient_part=_gradient_part(z))


def model_action(model: GibbsModel) -> Functional:
    """The action whose differences the model's small-ball ratios exponentiate."""
    if model.kind == ModelKind.GFF:
        return _gradient_part
    if model.kind == ModelKind.PPHI2:
        return lambda z: action_p(z, model.coeffs).total
    return lambda z: action_phi4(z).total


def _phi4_total(z: FourierField) -> float:
    return action_phi4(z).total


def action_gradient(z: FourierField) -> FourierField:
    """
    Variational gradient z^3 + (-Delta + m) z, so that dS[z](h) = <gradient, h>
    for every band-limited real h.
    """
    cube = pointwise_power(z, 3)
    lam = laplacian_eigenvalues(z.torus, z.N)
    stiffness = FourierField(z.torus, z.trunc, np.where(np.isfinite(lam), lam, 0.0) * z.coeffs)
    return cube + stiffness


def log_om_prediction(z1: FourierField, z2: FourierField, model: GibbsModel | None = None) -> float:
    """S(z2) - S(z1); the quartic action unless a model says otherwise."""
    action = model_action(model) if model is not None else _phi4_total
    return float(action(z2) - action(z1))


def om_prediction(z1: FourierField, z2: FourierField, model: GibbsModel | None = None) -> float:
    return math.exp(log_om_prediction(z1, z2, model))


def second_difference(f: Functional, z1: FourierField, z2: FourierField) -> float:
    """f(z1) + f(2 z2 - z1) - 2 f(z2); vanishes for affine f."""
    return float(f(z1) + f(2.0 * z2 - z1) - 2.0 * f(z2))


def third_difference(f: Functional, z1: FourierField, z2: FourierField) -> float:
    """3 f(z1) + f(3 z1 - 2 z2) - f(z2) - 3 f(2 z1 - z2); vanishes for quadratic f."""
    return float(3.0 * f(z1) + f(3.0 * z1 - 2.0 * z2) - f(z2) - 3.0 * f(2.0 * z1 - z2))


def log_second_order_prediction(z1: FourierField, z2: FourierField, model: GibbsModel | None = None) -> float:
    action = model_action(model) if model is not None else _phi4_total
    return -second_difference(action, z1, z2)


def second_order_prediction(z1: FourierField, z2: FourierField, model: GibbsModel | None = None) -> float:
    return math.exp(log_second_order_prediction(z1, z2, model))


def log_third_order_prediction(z1: FourierField, z2: FourierField) -> float:
    """-3 S(z1) - S(3 z1 - 2 z2) + S(z2) + 3 S(2 z1 - z2)."""
    return -third_difference(_phi4_total, z1, z2)


def third_order_prediction(z1: FourierField, z2: FourierField) -> float:
    return math.exp(log_third_order_prediction(z1, z2))
