import math

import numpy as np
import pytest

from core.errors import AliasingError
from core.measures import sample_gff
from core.norms import (
    besov_norm,
    dyadic_partition,
    h10_norm,
    h10_pairing,
    l2_norm,
    lp_block,
    lp_norm,
    pairing,
    sup_norm,
)
from core.spectral_field import FourierField, ModeTruncation, TorusSpec, analyze, synthesize, trig_field

SQRT2_HALF = math.sqrt(2.0) / 2.0


@pytest.mark.parametrize("kind", ["smooth", "sharp"])
@pytest.mark.parametrize("d,N", [(1, 3), (1, 32), (2, 8), (3, 5)])
def test_partition_of_unity(kind, d, N):
    partition = dyadic_partition(TorusSpec(d), N, kind)
    np.testing.assert_allclose(partition.weights.sum(axis=0), 1.0, atol=1e-14)
    assert np.all(partition.weights >= -1e-15)


@pytest.mark.parametrize("kind", ["smooth", "sharp"])
def test_blocks_reconstruct_the_field(random_field, kind):
    torus = TorusSpec(2)
    f = random_field(torus, 6)
    partition = dyadic_partition(torus, 6, kind)
    total = FourierField.zeros(torus, 6)
    for j in partition.blocks:
        K = min(max(partition.bandwidth(j), 1), 6)
        total = total + analyze(lp_block(f, j, partition), K).padded(6)
    np.testing.assert_allclose(total.coeffs, f.coeffs, atol=1e-12)


def test_single_mode_lives_in_one_sharp_block(t1):
    f = trig_field(t1, [((4,), 0.5)], N=8)
    partition = dyadic_partition(t1, 8, "sharp")
    for j in partition.blocks:
        block_max = np.max(np.abs(lp_block(f, j, partition).values))
        assert block_max == pytest.approx(1.0 if j == 2 else 0.0, abs=1e-14)
    for alpha in (-0.5, 0.0, 0.3):
        assert besov_norm(f, alpha, partition) == pytest.approx(2.0 ** (2 * alpha))


def test_besov_norm_of_zero_is_zero(t2):
    assert besov_norm(FourierField.zeros(t2, 4), 0.5) == 0.0


def test_besov_norm_is_homogeneous_and_subadditive(random_field, t2):
    f, g = random_field(t2, 4), random_field(t2, 4)
    for alpha in (-0.3, 0.25):
        assert besov_norm(-2.5 * f, alpha) == pytest.approx(2.5 * besov_norm(f, alpha), rel=1e-12)
        assert besov_norm(f + g, alpha) <= besov_norm(f, alpha) + besov_norm(g, alpha) + 1e-12


def test_besov_norm_increases_with_alpha(random_field, t1):
    f = random_field(t1, 16, size=20)
    partition = dyadic_partition(t1, 16, "sharp")
    assert np.all(besov_norm(f, 0.1, partition) <= besov_norm(f, 0.5, partition) + 1e-12)


def test_besov_norm_batches_agree_with_single_fields(random_field, t1):
    f = random_field(t1, 8, size=5)
    batch = besov_norm(f, 0.25)
    assert batch.shape == (5,)
    for i in range(5):
        assert batch[i] == pytest.approx(besov_norm(f[i], 0.25), rel=1e-12)


def test_block_rejects_partition_below_field_cutoff(random_field, t1):
    f = random_field(t1, 8)
    with pytest.raises(AliasingError):
        lp_block(f, 0, dyadic_partition(t1, 4))


def test_h10_norm_of_cosine(cos_field):
    assert h10_norm(cos_field) == pytest.approx(2 * math.pi)


def test_h10_pythagoras_for_disjoint_spectra(t2):
    f = trig_field(t2, [((1, 0), 0.3)])
    g = trig_field(t2, [((0, 2), 0.2 + 0.1j)])
    assert h10_pairing(f, g) == pytest.approx(0.0, abs=1e-15)
    assert h10_norm(f + g) ** 2 == pytest.approx(h10_norm(f) ** 2 + h10_norm(g) ** 2)


def test_h10_norm_matches_grid_gradient(random_field, t2):
    f = random_field(t2, 4)
    k = f.trunc.wavenumbers()
    M = 17
    energy = 0.0
    for axis in range(2):
        derivative = FourierField(t2, f.trunc, 2j * math.pi * k[axis] * f.coeffs)
        energy += np.mean(synthesize(derivative, M).values ** 2)
    assert h10_norm(f) ** 2 == pytest.approx(energy, rel=1e-10)


def test_h10_norm_includes_mass():
    massive = TorusSpec(1, mass=2.0)
    f = trig_field(massive, [((1,), SQRT2_HALF)])
    assert h10_norm(f) ** 2 == pytest.approx(4 * math.pi**2 + 2.0)


def test_lp_norms_of_cosine(cos_field):
    grid = synthesize(cos_field, 5)
    assert lp_norm(grid, 2) == pytest.approx(1.0)
    assert lp_norm(grid, 4) ** 4 == pytest.approx(1.5)
    assert lp_norm(grid, math.inf) == pytest.approx(math.sqrt(2.0))
    assert l2_norm(cos_field) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        lp_norm(grid, 0.5)


def test_sup_norm_of_cosine(cos_field):
    assert sup_norm(cos_field) == pytest.approx(math.sqrt(2.0))


def test_pairing(t1, cos_field, random_field):
    assert pairing(cos_field, cos_field) == pytest.approx(1.0)
    assert pairing(cos_field, trig_field(t1, [((2,), 0.5)])) == pytest.approx(0.0, abs=1e-15)
    f, g = random_field(t1, 5), random_field(t1, 3)
    assert pairing(f, g) == pytest.approx(pairing(g, f))
    grid_product = np.mean(synthesize(f, 16).values * synthesize(g.padded(5), 16).values)
    assert pairing(f, g) == pytest.approx(grid_product, rel=1e-10, abs=1e-14)


def _worst_duality_ratio(torus, N, rng, pairs=200):
    trunc = ModeTruncation(N, torus.d)
    f = sample_gff(trunc, torus, rng, pairs)
    g = sample_gff(trunc, torus, rng, pairs)
    ratios = np.abs(pairing(f, g)) / (besov_norm(f, 0.5) * besov_norm(g, -0.4))
    return float(np.max(ratios))


def test_duality_bound_is_stable_under_refinement(t1, rng):
    coarse = _worst_duality_ratio(t1, 8, rng)
    fine = _worst_duality_ratio(t1, 16, rng)
    assert np.isfinite(coarse) and np.isfinite(fine)
    assert fine <= 2.0 * coarse
