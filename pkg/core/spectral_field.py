"""
Band-limited real fields on the unit torus T^d = [0, 1)^d.

A field of cutoff N stores its Fourier coefficients on the centered box
{k in Z^d : max_i |k_i| <= N} as a complex array of shape (2N+1,)*d, indexed
by k + N, with basis e_k(x) = exp(2 pi i k.x). Leading axes, when present,
index independent samples, so every operation below works on a whole batch
at once.

The zero mode is never part of a field (mean-zero sector). Pointwise
polynomials such as Wick powers do have a mean; it is carried separately in
``FourierField.mean`` so that pairings against constants stay exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from loguru import logger
from scipy import fft as sfft

from core.errors import AliasingError

P_MAX = 6


@dataclass(frozen=True)
class TorusSpec:
    d: int
    mass: float = 0.0

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"Torus dimension must be 1, 2 or 3, got {self.d}")
        if self.mass < 0:
            raise ValueError(f"Mass must be nonnegative, got {self.mass}")


@dataclass(frozen=True)
class ModeTruncation:
    """All k with 0 < max_i |k_i| <= N."""

    N: int
    d: int

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"Cutoff must be a positive integer, got {self.N}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (2 * self.N + 1,) * self.d

    @property
    def zero_index(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    def wavenumbers(self) -> np.ndarray:
        """Integer wavenumbers, shape (d,) + box shape."""
        return _wavenumbers(self.N, self.d)

    def box_norm(self) -> np.ndarray:
        return np.abs(self.wavenumbers()).max(axis=0)

    @property
    def mode_set(self) -> np.ndarray:
        """The retained modes as an (n_modes, d) integer array."""
        k = self.wavenumbers().reshape(self.d, -1).T
        return k[np.abs(k).max(axis=1) > 0]


@lru_cache(maxsize=None)
def _wavenumbers(N: int, d: int) -> np.ndarray:
    axis = np.arange(-N, N + 1)
    k = np.stack(np.meshgrid(*([axis] * d), indexing="ij"))
    k.setflags(write=False)
    return k


@lru_cache(maxsize=None)
def laplacian_eigenvalues(torus: TorusSpec, N: int) -> np.ndarray:
    """
    lambda_k = 4 pi^2 |k|^2 + mass on the centered box.

    The zero mode is set to +inf so that 1 / lambda vanishes there.
    """
    trunc = ModeTruncation(N, torus.d)
    k = trunc.wavenumbers()
    lam = 4.0 * math.pi**2 * np.sum(k.astype(float) ** 2, axis=0) + torus.mass
    lam[trunc.zero_index] = np.inf
    lam.setflags(write=False)
    return lam


@dataclass(frozen=True, eq=False)
class FourierField:
    torus: TorusSpec
    trunc: ModeTruncation
    coeffs: np.ndarray
    mean: np.ndarray | float = 0.0

    def __post_init__(self):
        d = self.torus.d
        if self.trunc.d != d:
            raise ValueError("Truncation and torus dimensions differ")
        coeffs = np.array(self.coeffs, dtype=np.complex128)
        if coeffs.ndim < d or coeffs.shape[-d:] != self.trunc.shape:
            raise ValueError(
                f"Coefficient array of shape {coeffs.shape} does not end with {self.trunc.shape}"
            )
        coeffs[(Ellipsis,) + self.trunc.zero_index] = 0.0
        coeffs.setflags(write=False)
        mean = np.array(np.broadcast_to(np.asarray(self.mean, dtype=float), coeffs.shape[:-d]))
        mean.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "mean", mean)

    @classmethod
    def zeros(cls, torus: TorusSpec, N: int, batch_shape: tuple[int, ...] = ()) -> "FourierField":
        trunc = ModeTruncation(N, torus.d)
        return cls(torus, trunc, np.zeros(batch_shape + trunc.shape, dtype=np.complex128))

    @classmethod
    def constant(cls, torus: TorusSpec, N: int, value: float = 1.0) -> "FourierField":
        return cls.zeros(torus, N).with_mean(value)

    @property
    def N(self) -> int:
        return self.trunc.N

    @property
    def d(self) -> int:
        return self.torus.d

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[: -self.d]

    @property
    def box_axes(self) -> tuple[int, ...]:
        return tuple(range(-self.d, 0))

    def __len__(self) -> int:
        if not self.batch_shape:
            raise TypeError("A single field has no length")
        return self.batch_shape[0]

    def __getitem__(self, index) -> "FourierField":
        if not self.batch_shape:
            raise TypeError("A single field cannot be indexed")
        return FourierField(self.torus, self.trunc, self.coeffs[index], self.mean[index])

    def with_mean(self, mean) -> "FourierField":
        return FourierField(self.torus, self.trunc, self.coeffs, mean)

    def padded(self, N: int) -> "FourierField":
        """The same field described on a larger box."""
        if N == self.N:
            return self
        if N < self.N:
            raise AliasingError(f"Cannot pad a field of cutoff {self.N} down to {N}")
        width = [(0, 0)] * len(self.batch_shape) + [(N - self.N, N - self.N)] * self.d
        return FourierField(self.torus, ModeTruncation(N, self.d), np.pad(self.coeffs, width), self.mean)

    def _aligned(self, other: "FourierField") -> tuple["FourierField", "FourierField"]:
        if other.torus != self.torus:
            raise ValueError("Fields live on different tori")
        N = max(self.N, other.N)
        return self.padded(N), other.padded(N)

    def __add__(self, other: "FourierField") -> "FourierField":
        a, b = self._aligned(other)
        return FourierField(a.torus, a.trunc, a.coeffs + b.coeffs, a.mean + b.mean)

    def __sub__(self, other: "FourierField") -> "FourierField":
        a, b = self._aligned(other)
        return FourierField(a.torus, a.trunc, a.coeffs - b.coeffs, a.mean - b.mean)

    def __neg__(self) -> "FourierField":
        return FourierField(self.torus, self.trunc, -self.coeffs, -self.mean)

    def __mul__(self, scalar: float) -> "FourierField":
        return FourierField(self.torus, self.trunc, self.coeffs * scalar, self.mean * scalar)

    __rmul__ = __mul__

    def coeff(self, k: Sequence[int]) -> np.ndarray | complex:
        k = tuple(int(v) for v in k)
        if max(abs(v) for v in k) > self.N:
            return 0.0
        return self.coeffs[(Ellipsis,) + tuple(v + self.N for v in k)]


@dataclass(frozen=True, eq=False)
class GridField:
    torus: TorusSpec
    values: np.ndarray

    @property
    def M(self) -> int:
        return self.values.shape[-1]

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.values.shape[: -self.torus.d]

    def points(self) -> np.ndarray:
        """Grid coordinates x_j = j / M, shape (d,) + (M,)*d."""
        axis = np.arange(self.M) / self.M
        return np.stack(np.meshgrid(*([axis] * self.torus.d), indexing="ij"))


def trig_field(
    torus: TorusSpec,
    modes: Iterable[tuple[Sequence[int], complex]],
    N: int | None = None,
) -> FourierField:
    """
    Build a real field from (k, amplitude) pairs; the conjugate amplitude is
    placed at -k. ``N`` defaults to the largest box norm among the modes.
    """
    modes = [(tuple(int(v) for v in k), complex(a)) for k, a in modes]
    for k, _ in modes:
        if len(k) != torus.d:
            raise ValueError(f"Mode {k} does not match dimension {torus.d}")
        if all(v == 0 for v in k):
            raise ValueError("The zero mode is not part of the field")
    if N is None:
        N = max((max(abs(v) for v in k) for k, _ in modes), default=1)
    trunc = ModeTruncation(N, torus.d)
    coeffs = np.zeros(trunc.shape, dtype=np.complex128)
    for k, amplitude in modes:
        if max(abs(v) for v in k) > N:
            raise AliasingError(f"Mode {k} exceeds cutoff {N}")
        coeffs[tuple(v + N for v in k)] = amplitude
        coeffs[tuple(-v + N for v in k)] = np.conj(amplitude)
    return FourierField(torus, trunc, coeffs)


def dealiased_size(degree: int) -> int:
    """Smallest FFT-friendly M with M >= 2 * degree + 1."""
    return sfft.next_fast_len(2 * degree + 1)


def bundle_bytes(d: int, n: int, p_max: int) -> int:
    """Approximate memory of one sample's Wick bundle: grid, Hermite table and spectra."""
    M = dealiased_size(p_max * n)
    return 8 * M**d * (p_max + 2) + 16 * p_max * (2 * p_max * n + 1) ** d


def _embedding_index(N: int, M: int, d: int) -> tuple:
    idx = np.arange(-N, N + 1) % M
    return (Ellipsis,) + np.ix_(*([idx] * d))


def synthesize(f: FourierField, M: int | None = None) -> GridField:
    """Evaluate f on the uniform grid of M points per dimension."""
    if M is None:
        M = 2 * f.N + 1
    if M < 2 * f.N + 1:
        raise AliasingError(f"Grid size {M} aliases cutoff {f.N}; need at least {2 * f.N + 1}")
    full = np.zeros(f.batch_shape + (M,) * f.d, dtype=np.complex128)
    full[_embedding_index(f.N, M, f.d)] = f.coeffs
    values = sfft.ifftn(full, axes=f.box_axes, norm="forward", workers=1).real
    if np.any(f.mean):
        values = values + f.mean.reshape(f.batch_shape + (1,) * f.d)
    return GridField(f.torus, values)


def analyze(g: GridField, N: int, keep_mean: bool = False) -> FourierField:
    """
    Discrete Fourier coefficients of a grid field restricted to cutoff N.

    The zero mode is dropped unless ``keep_mean`` is set, in which case it is
    returned as the field's mean.
    """
    d = g.torus.d
    if g.M < 2 * N + 1:
        raise AliasingError(f"Grid size {g.M} cannot resolve cutoff {N}")
    axes = tuple(range(-d, 0))
    spectrum = sfft.fftn(g.values, axes=axes, norm="forward", workers=1)
    coeffs = spectrum[_embedding_index(N, g.M, d)]
    mean = spectrum[(Ellipsis,) + (0,) * d].real if keep_mean else 0.0
    return FourierField(g.torus, ModeTruncation(N, d), coeffs, mean)


def project(f: FourierField, n: int) -> FourierField:
    """Keep the modes with max_i |k_i| <= n."""
    if n > f.N:
        raise AliasingError(f"Cannot project a field of cutoff {f.N} to level {n}")
    if n == f.N:
        return f
    lo, hi = f.N - n, f.N + n + 1
    window = (Ellipsis,) + (slice(lo, hi),) * f.d
    return FourierField(f.torus, ModeTruncation(n, f.d), f.coeffs[window], f.mean)


def hermite(p: int, y, c: float):
    """
    Hermite polynomial with variance c: H_0 = 1, H_1 = y,
    H_{p+1} = y H_p - p c H_{p-1}.
    """
    if p < 0:
        raise ValueError(f"Hermite order must be nonnegative, got {p}")
    return hermite_table(p, y, c)[p]


def hermite_table(p_max: int, y, c: float) -> list:
    """[H_0(y, c), ..., H_{p_max}(y, c)] by the three-term recurrence."""
    if c < 0:
        raise ValueError(f"Hermite variance must be nonnegative, got {c}")
    scalar = np.ndim(y) == 0
    y = np.asarray(y, dtype=float)
    table = [np.ones_like(y)]
    if p_max >= 1:
        table.append(y)
    for q in range(1, p_max):
        table.append(y * table[q] - q * c * table[q - 1])
    return [float(h) for h in table] if scalar else table


@lru_cache(maxsize=None)
def variance_constant(torus: TorusSpec, N: int) -> float:
    """c_N = sum over the mode set of 1 / lambda_k."""
    if N < 1:
        raise ValueError(f"Cutoff must be positive, got {N}")
    return float(np.sum(1.0 / laplacian_eigenvalues(torus, N)))


def wick_power(base: FourierField, p: int, c_n: float, M: int | None = None) -> FourierField:
    """
    The field with grid values H_p(base(x), c_n), analyzed exactly up to
    cutoff p * N. Its mean is kept.
    """
    if not 0 <= p <= P_MAX:
        raise ValueError(f"Wick order must lie in 0..{P_MAX}, got {p}")
    if p == 0:
        return FourierField.zeros(base.torus, base.N, base.batch_shape).with_mean(1.0)
    if p == 1:
        return base
    if M is None:
        M = dealiased_size(p * base.N)
    if M < 2 * p * base.N + 1:
        raise AliasingError(
            f"Grid size {M} would alias the degree-{p} power of a cutoff-{base.N} field"
        )
    grid = synthesize(base, M)
    values = hermite(p, grid.values, c_n)
    return analyze(GridField(base.torus, values), p * base.N, keep_mean=True)


def pointwise_power(f: FourierField, q: int) -> FourierField:
    """f^q with its mean, i.e. the Hermite polynomial with zero variance."""
    return wick_power(f, q, 0.0)


@dataclass(frozen=True, eq=False)
class WickBundle:
    """
    A truncation phi_n with its Wick powers; ``powers[p]`` is phi_n^{:p:},
    ``powers[0]`` the constant 1 and ``powers[1]`` the base itself.
    """

    level_n: int
    base: FourierField
    powers: tuple[FourierField, ...]
    c_n: float

    @property
    def p_max(self) -> int:
        return len(self.powers) - 1

    def power(self, p: int) -> FourierField:
        if p > self.p_max:
            raise ValueError(f"Bundle holds powers up to {self.p_max}, asked for {p}")
        return self.powers[p]


def wick_bundle(
    phi: FourierField,
    p_max: int = 4,
    level: int | None = None,
    c_n: float | None = None,
) -> WickBundle:
    """All Wick powers of project(phi, level) up to p_max from a single dealiased grid."""
    if not 1 <= p_max <= P_MAX:
        raise ValueError(f"p_max must lie in 1..{P_MAX}, got {p_max}")
    base = phi if level is None else project(phi, level)
    if c_n is None:
        c_n = variance_constant(base.torus, base.N)
    M = dealiased_size(p_max * base.N)
    logger.debug(f"Wick bundle: level {base.N}, p_max {p_max}, grid {M}^{base.d}")
    grid = synthesize(base, M)
    table = hermite_table(p_max, grid.values, c_n)
    powers = [FourierField.zeros(base.torus, base.N, base.batch_shape).with_mean(1.0), base]
    for p in range(2, p_max + 1):
        powers.append(analyze(GridField(base.torus, table[p]), p * base.N, keep_mean=True))
    return WickBundle(level_n=base.N, base=base, powers=tuple(powers), c_n=float(c_n))


def plancherel(f: FourierField, g: FourierField) -> np.ndarray | float:
    """Sum_k f_k conj(g_k) plus the product of the means, on the unit torus."""
    a, b = f._aligned(g)
    value = np.sum(a.coeffs * np.conj(b.coeffs), axis=a.box_axes).real + a.mean * b.mean
    return float(value) if np.ndim(value) == 0 else value


def wick_binomial_pairing(
    phi: FourierField,
    z: FourierField,
    n: int,
    p: int,
    c_n: float | None = None,
):
    """
    <(phi - z)_n^{:p:}, 1> expanded as
    sum_m C(p, m) (-1)^(p-m) <phi_n^{:m:}, z_n^(p-m)>, every term paired in Fourier space.
    """
    phi_n, z_n = project(phi, n), project(z, min(n, z.N))
    bundle = wick_bundle(phi_n, p_max=max(p, 1), c_n=c_n)
    total = 0.0
    for m in range(p + 1):
        sign = -1.0 if (p - m) % 2 else 1.0
        total = total + sign * math.comb(p, m) * plancherel(bundle.power(m), pointwise_power(z_n, p - m))
    return total


def green_kernel(torus: TorusSpec, N: int, M: int | None = None) -> GridField:
    """G_N(x) = sum over the mode set of e_k(x) / lambda_k on an M-point grid."""
    trunc = ModeTruncation(N, torus.d)
    kernel = FourierField(torus, trunc, 1.0 / laplacian_eigenvalues(torus, N))
    return synthesize(kernel, M)
