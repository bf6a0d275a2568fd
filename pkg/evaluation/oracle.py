"""
Independent ground truth at tiny scale.

Nothing here samples: ball probabilities come from quadrature over the few
real degrees of freedom of a d = 1, N <= 2 truncation, and Wick moments come
from the covariance kernel. Estimators are checked against these values, so
this module must not import them.
"""
from __future__ import annotations

import math

import numpy as np
from loguru import logger
from scipy import special, stats

from core.balls import BallKind, BallSpec
from core.errors import AliasingError
from core.norms import besov_norm, sup_norm
from core.spectral_field import (
    FourierField,
    GridField,
    ModeTruncation,
    TorusSpec,
    analyze,
    dealiased_size,
    green_kernel,
    hermite,
    laplacian_eigenvalues,
    project,
    synthesize,
    variance_constant,
    wick_binomial_pairing,
)

DIRECTION_CHUNK = 16384
RADIAL_CAP = 12.0


def _mode_scales(torus: TorusSpec, N: int) -> np.ndarray:
    """Standard deviation of the real and imaginary part of c_k, k = 1..N."""
    lam = laplacian_eigenvalues(torus, N)[N + 1 :]
    return np.sqrt(1.0 / (2.0 * lam))


def _directions(dof: int, resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit vectors in R^dof with area weights of the sphere S^{dof-1}."""
    if dof == 2:
        t = 2.0 * math.pi * np.arange(resolution) / resolution
        return np.stack([np.cos(t), np.sin(t)], axis=1), np.full(resolution, 2.0 * math.pi / resolution)
    n_polar = max(resolution // 128, 16)
    n_azimuth = 2 * n_polar
    nodes, weights = np.polynomial.legendre.leggauss(n_polar)
    psi = 0.5 * math.pi * (nodes + 1.0)
    w_psi = 0.5 * math.pi * weights
    t = 2.0 * math.pi * np.arange(n_azimuth) / n_azimuth
    p1, p2, tt = np.meshgrid(psi, psi, t, indexing="ij")
    w = np.einsum("i,j->ij", w_psi * np.sin(psi) ** 2, w_psi * np.sin(psi))[..., None]
    w = np.broadcast_to(w * (2.0 * math.pi / n_azimuth), p1.shape)
    theta = np.stack(
        [
            np.cos(p1),
            np.sin(p1) * np.cos(p2),
            np.sin(p1) * np.sin(p2) * np.cos(tt),
            np.sin(p1) * np.sin(p2) * np.sin(tt),
        ],
        axis=-1,
    )
    return theta.reshape(-1, 4), w.reshape(-1)


def _fields_from_coordinates(torus: TorusSpec, N: int, u: np.ndarray) -> FourierField:
    """Fields whose coefficients are c_k = sigma_k (u_{2k-2} + i u_{2k-1})."""
    sigma = _mode_scales(torus, N)
    trunc = ModeTruncation(N, 1)
    coeffs = np.zeros((u.shape[0],) + trunc.shape, dtype=np.complex128)
    c = sigma * (u[:, 0::2] + 1j * u[:, 1::2])
    coeffs[:, N + 1 :] = c
    coeffs[:, :N] = np.conj(c[:, ::-1])
    return FourierField(torus, trunc, coeffs)


def _coordinates_of(center: FourierField, N: int) -> np.ndarray:
    sigma = _mode_scales(center.torus, N)
    c = center.padded(N).coeffs[N + 1 :]
    u = np.empty(2 * N)
    u[0::2] = c.real / sigma
    u[1::2] = c.imag / sigma
    return u


def gaussian_ball_prob_lowdim(
    trunc: ModeTruncation,
    torus: TorusSpec,
    spec: BallSpec,
    oversample: int | None = None,
    resolution: int = 4096,
    radial_nodes: int = 64,
) -> float:
    """
    mu_0(B_r(z)) for a plain ball on the d = 1 GFF truncated at N <= 2.

    In standardized coordinates u the field minus the center is linear in
    u - u_z, so along each direction theta from u_z the ball ends at radius
    r / |phi_theta|. The radial Gaussian integral is the regularized lower
    incomplete gamma function when the center is 0 and Gauss-Legendre
    otherwise; directions use the trapezoid rule on the circle (N = 1) or
    Gauss-Legendre in both polar angles (N = 2).
    """
    if torus.d != 1 or trunc.d != 1 or trunc.N > 2:
        raise ValueError("Quadrature oracle handles d = 1 with N <= 2 only")
    if spec.kind != BallKind.PLAIN:
        raise ValueError(f"Quadrature oracle handles plain balls only, got {spec.kind.value}")
    N = trunc.N
    dof = 2 * N
    if spec.center is not None and spec.center.N > N:
        raise AliasingError(f"Center cutoff {spec.center.N} exceeds the truncation {N}")

    theta, weights = _directions(dof, resolution)
    radius = np.empty(theta.shape[0])
    for start in range(0, theta.shape[0], DIRECTION_CHUNK):
        fields = _fields_from_coordinates(torus, N, theta[start : start + DIRECTION_CHUNK])
        if spec.norm == "sup":
            nu = sup_norm(fields, oversample)
        else:
            nu = besov_norm(fields, spec.alpha, oversample=oversample)
        radius[start : start + DIRECTION_CHUNK] = spec.r / np.asarray(nu)
    area = 2.0 * math.pi ** (dof / 2.0) / special.gamma(dof / 2.0)
    weights = weights * area / weights.sum()

    u_z = np.zeros(dof) if spec.center is None else _coordinates_of(spec.center, N)
    if not np.any(u_z):
        inner = special.gammainc(dof / 2.0, 0.5 * np.minimum(radius, 1e150) ** 2) / area
    else:
        cap = np.minimum(radius, np.linalg.norm(u_z) + RADIAL_CAP)
        nodes, gl_weights = np.polynomial.legendre.leggauss(radial_nodes)
        rho = 0.5 * cap[:, None] * (nodes[None, :] + 1.0)
        along = theta @ u_z
        exponent = -0.5 * (u_z @ u_z + 2.0 * rho * along[:, None] + rho**2)
        integrand = np.exp(exponent) * rho ** (dof - 1) / (2.0 * math.pi) ** (dof / 2.0)
        inner = 0.5 * cap * (integrand @ gl_weights)
    probability = float(np.clip(weights @ inner, 0.0, 1.0))
    logger.debug(f"Quadrature ball probability {probability:.6f} over {theta.shape[0]} directions")
    return probability


def gaussian_sup_ball_prob_single_mode(torus: TorusSpec, r: float, center: FourierField | None = None) -> float:
    """
    Continuum sup-ball probability for the N = 1, d = 1 GFF: sup|phi - z| is
    2|c_1 - z_1|, so the probability is a (non-central) chi-square cdf.
    """
    if torus.d != 1:
        raise ValueError("Single-mode closed form is for d = 1")
    variance = 1.0 / (2.0 * laplacian_eigenvalues(torus, 1)[2])
    bound = r**2 / (4.0 * variance)
    shift = 0.0 if center is None else abs(complex(center.coeff((1,)))) ** 2 / variance
    if shift == 0.0:
        return float(stats.chi2.cdf(bound, df=2))
    return float(stats.ncx2.cdf(bound, df=2, nc=shift))


def wick_pair_moment(p: int, f: FourierField, g: FourierField, N: int) -> float:
    """
    E[<Phi_N^{:p:}, f> <Phi_N^{:p:}, g>] = p! int int f(x) G_N(x - y)^p g(y) dx dy,
    with G_N^p evaluated on a grid that resolves it exactly.
    """
    if p < 1:
        raise ValueError(f"Moment order must be positive, got {p}")
    torus = f.torus
    M = dealiased_size(p * N)
    kernel = green_kernel(torus, N, M)
    power = analyze(GridField(torus, kernel.values**p), p * N, keep_mean=True)
    K = max(power.N, f.N, g.N)
    h, a, b = power.padded(K), f.padded(K), g.padded(K)
    spectral = np.sum(h.coeffs * a.coeffs * np.conj(b.coeffs)).real
    return float(math.factorial(p) * (spectral + h.mean * a.mean * b.mean))


def binomial_direct_check(
    phi: FourierField,
    z: FourierField,
    n: int,
    p: int,
    c_n: float | None = None,
) -> float:
    """
    |binomial expansion - <H_p((phi - z)_n, c_n), 1>| relative to the mean
    absolute value of the integrand on its grid.
    """
    c_n = variance_constant(phi.torus, n) if c_n is None else c_n
    shifted = project(phi - z, n)
    grid = synthesize(shifted, dealiased_size(max(p, 1) * n))
    values = hermite(p, grid.values, c_n)
    direct = float(np.mean(values))
    scale = max(float(np.mean(np.abs(values))), np.finfo(float).tiny)
    expanded = wick_binomial_pairing(phi, z, n, p, c_n)
    return abs(expanded - direct) / scale
