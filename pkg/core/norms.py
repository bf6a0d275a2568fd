"""
Littlewood-Paley blocks and the norms built on them.

Two dyadic partitions are available. The smooth one telescopes a C^2
piecewise-polynomial radial bump chi (1 on |xi| <= 3/4, 0 on |xi| >= 4/3):
psi_{-1} = chi, psi_j = chi(./2^{j+1}) - chi(./2^j). The sharp one uses
indicator annuli 2^j <= |k| < 2^{j+1}, with block -1 holding only the mean.

Sup norms are taken over a grid of max(2K+1, oversample * K) points per
dimension for a block of box bandwidth K; the discretization error of that
maximum is not corrected.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import numpy as np
from scipy import fft as sfft

from core.config import settings
from core.errors import AliasingError
from core.spectral_field import (
    FourierField,
    GridField,
    ModeTruncation,
    TorusSpec,
    laplacian_eigenvalues,
    plancherel,
    project,
    synthesize,
)

PartitionKind = Literal["smooth", "sharp"]

BUMP_INNER = 3.0 / 4.0
BUMP_OUTER = 4.0 / 3.0


def _bump(t: np.ndarray) -> np.ndarray:
    s = np.clip((t - BUMP_INNER) / (BUMP_OUTER - BUMP_INNER), 0.0, 1.0)
    return 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


@dataclass(frozen=True, eq=False)
class DyadicPartition:
    """Per-mode weights psi_j(k) for j = -1..j_max on the box of cutoff N."""

    torus: TorusSpec
    N: int
    kind: PartitionKind
    weights: np.ndarray
    bandwidths: tuple[int, ...]

    @property
    def j_max(self) -> int:
        return self.weights.shape[0] - 2

    @property
    def blocks(self) -> range:
        return range(-1, self.j_max + 1)

    def weight(self, j: int) -> np.ndarray:
        return self.weights[j + 1]

    def bandwidth(self, j: int) -> int:
        return self.bandwidths[j + 1]


@lru_cache(maxsize=None)
def dyadic_partition(torus: TorusSpec, N: int, kind: PartitionKind | None = None) -> DyadicPartition:
    kind = kind or settings.PHILAB_PARTITION
    trunc = ModeTruncation(N, torus.d)
    k = trunc.wavenumbers()
    radius = np.sqrt(np.sum(k.astype(float) ** 2, axis=0))
    r_max = math.sqrt(torus.d) * N
    if kind == "smooth":
        j_max = max(math.ceil(math.log2(r_max / BUMP_INNER)) - 1, 0)
        layers = [_bump(radius)]
        for j in range(0, j_max + 1):
            layers.append(_bump(radius / 2.0 ** (j + 1)) - _bump(radius / 2.0**j))
    elif kind == "sharp":
        squared = np.sum(k.astype(float) ** 2, axis=0)
        index = np.full(squared.shape, -1)
        nonzero = squared > 0
        index[nonzero] = np.floor(np.log2(squared[nonzero]) / 2.0).astype(int)
        j_max = int(index.max())
        layers = [(index == j).astype(float) for j in range(-1, j_max + 1)]
    else:
        raise ValueError(f"Unknown partition kind {kind!r}")
    weights = np.stack(layers)
    weights.setflags(write=False)
    box = trunc.box_norm()
    bandwidths = tuple(int(box[layer != 0].max(initial=0)) for layer in weights)
    return DyadicPartition(torus=torus, N=N, kind=kind, weights=weights, bandwidths=bandwidths)


def _sup_grid(bandwidth: int, oversample: int) -> int:
    bandwidth = max(bandwidth, 1)
    return sfft.next_fast_len(max(2 * bandwidth + 1, oversample * bandwidth))


def besov_bytes(d: int, bandwidth: int, oversample: int | None = None) -> int:
    """Memory of the complex grid one Littlewood-Paley block of a sample is synthesized on."""
    return 16 * _sup_grid(bandwidth, oversample or settings.PHILAB_BESOV_OVERSAMPLE) ** d


def lp_block(
    f: FourierField,
    j: int,
    partition: DyadicPartition | None = None,
    oversample: int | None = None,
) -> GridField:
    """Delta_j f synthesized on a grid oversampled beyond the block bandwidth."""
    partition = partition or dyadic_partition(f.torus, f.N)
    oversample = oversample or settings.PHILAB_BESOV_OVERSAMPLE
    if partition.N < f.N:
        raise AliasingError(f"Partition of cutoff {partition.N} does not cover cutoff {f.N}")
    f = f.padded(partition.N)
    weight = partition.weight(j)
    block = FourierField(f.torus, f.trunc, f.coeffs * weight, f.mean * weight[f.trunc.zero_index])
    K = max(partition.bandwidth(j), 1)
    return synthesize(project(block, min(K, f.N)), _sup_grid(K, oversample))


def besov_norm(
    f: FourierField,
    alpha: float,
    partition: DyadicPartition | None = None,
    oversample: int | None = None,
):
    """sup_j 2^{j alpha} max_x |Delta_j f(x)|; one value per sample."""
    partition = partition or dyadic_partition(f.torus, f.N)
    axes = f.box_axes
    norm = np.zeros(f.batch_shape)
    for j in partition.blocks:
        if j >= 0 and partition.bandwidth(j) == 0:
            continue
        block = lp_block(f, j, partition, oversample)
        norm = np.maximum(norm, 2.0 ** (j * alpha) * np.max(np.abs(block.values), axis=axes))
    return float(norm) if norm.ndim == 0 else norm


@lru_cache(maxsize=None)
def _energy_weights(torus: TorusSpec, N: int) -> np.ndarray:
    lam = laplacian_eigenvalues(torus, N)
    weights = np.where(np.isfinite(lam), lam, 0.0)
    weights.setflags(write=False)
    return weights


def h10_pairing(z: FourierField, phi: FourierField):
    """sum_k lambda_k z_k conj(phi_k), the Cameron-Martin pairing."""
    a, b = z._aligned(phi)
    value = np.sum(_energy_weights(a.torus, a.N) * a.coeffs * np.conj(b.coeffs), axis=a.box_axes).real
    return float(value) if np.ndim(value) == 0 else value


def h10_norm(f: FourierField):
    """sqrt(sum_k lambda_k |f_k|^2); lambda_k carries the mass when there is one."""
    value = np.sqrt(np.maximum(h10_pairing(f, f), 0.0))
    return float(value) if np.ndim(value) == 0 else value


def l2_norm(f: FourierField):
    value = np.sqrt(np.maximum(plancherel(f, f), 0.0))
    return float(value) if np.ndim(value) == 0 else value


def lp_norm(g: GridField, p: float):
    """(M^{-d} sum |values|^p)^{1/p}, or the grid maximum for p = inf."""
    if p < 1:
        raise ValueError(f"Exponent must be at least 1, got {p}")
    axes = tuple(range(-g.torus.d, 0))
    if math.isinf(p):
        value = np.max(np.abs(g.values), axis=axes)
    else:
        value = np.mean(np.abs(g.values) ** p, axis=axes) ** (1.0 / p)
    return float(value) if np.ndim(value) == 0 else value


def sup_norm(f: FourierField, oversample: int | None = None):
    """max_x |f(x)| on an oversampled grid."""
    oversample = oversample or settings.PHILAB_BESOV_OVERSAMPLE
    return lp_norm(synthesize(f, _sup_grid(f.N, oversample)), math.inf)


def pairing(f: FourierField, g: FourierField):
    """<f, g> = sum_k f_k conj(g_k) + mean_f mean_g (Plancherel on the unit torus)."""
    return plancherel(f, g)
