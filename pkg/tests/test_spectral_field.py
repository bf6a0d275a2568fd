import math

import numpy as np
import pytest

from core.errors import AliasingError
from core.measures import sample_gff
from core.spectral_field import (
    FourierField,
    GridField,
    ModeTruncation,
    TorusSpec,
    analyze,
    green_kernel,
    hermite,
    plancherel,
    pointwise_power,
    project,
    synthesize,
    trig_field,
    variance_constant,
    wick_binomial_pairing,
    wick_bundle,
    wick_power,
)
from evaluation.metrics import mean_estimate

SQRT2_HALF = math.sqrt(2.0) / 2.0


def test_single_mode_synthesizes_to_cosine(t1):
    f = trig_field(t1, [((1,), 0.5)])
    grid = synthesize(f, 8)
    x = np.arange(8) / 8
    np.testing.assert_allclose(grid.values, np.cos(2 * math.pi * x), atol=1e-14)


def test_zero_field_synthesizes_to_zero(t2):
    grid = synthesize(FourierField.zeros(t2, 3), 9)
    assert grid.values.shape == (9, 9)
    assert not np.any(grid.values)


@pytest.mark.parametrize("d,N,M", [(1, 6, 13), (1, 6, 16), (2, 4, 9), (2, 4, 12), (3, 2, 5), (3, 2, 8)])
def test_synthesize_analyze_round_trip(random_field, d, N, M):
    f = random_field(TorusSpec(d), N)
    back = analyze(synthesize(f, M), N)
    np.testing.assert_allclose(back.coeffs, f.coeffs, atol=1e-12 * np.abs(f.coeffs).max())


def test_batches_synthesize_like_single_fields(random_field, t2):
    batch = random_field(t2, 3, size=4)
    grids = synthesize(batch, 7)
    for i in range(4):
        np.testing.assert_allclose(grids.values[i], synthesize(batch[i], 7).values, atol=1e-14)


def test_undersized_grid_is_rejected(cos_field):
    f = cos_field.padded(4)
    with pytest.raises(AliasingError):
        synthesize(f, 8)
    with pytest.raises(AliasingError):
        analyze(synthesize(f, 9), 5)


def test_analyze_cosine_and_constant(t1):
    x = np.arange(8) / 8
    cosine = analyze(GridField(t1, np.cos(2 * math.pi * x)), 3)
    assert cosine.coeff((1,)) == pytest.approx(0.5, abs=1e-15)
    assert cosine.coeff((-1,)) == pytest.approx(0.5, abs=1e-15)
    constant = analyze(GridField(t1, np.full(8, 2.5)), 3)
    assert not np.any(constant.coeffs)
    assert float(constant.mean) == 0.0
    assert float(analyze(GridField(t1, np.full(8, 2.5)), 3, keep_mean=True).mean) == pytest.approx(2.5)


def test_cube_of_cosine_has_three_eighths_and_one_eighth(t1):
    x = np.arange(8) / 8
    cube = analyze(GridField(t1, np.cos(2 * math.pi * x) ** 3), 3)
    expected = {-3: 0.125, -2: 0.0, -1: 0.375, 1: 0.375, 2: 0.0, 3: 0.125}
    for k, value in expected.items():
        assert cube.coeff((k,)) == pytest.approx(value, abs=1e-15)


def test_zero_mode_is_never_stored(t2):
    coeffs = np.ones((5, 5), dtype=complex)
    f = FourierField(t2, ModeTruncation(2, 2), coeffs)
    assert f.coeffs[2, 2] == 0
    assert f.coeffs[0, 0] == 1


def test_trig_field_validation(t1, t2):
    with pytest.raises(ValueError):
        trig_field(t2, [((0, 0), 1.0)])
    with pytest.raises(ValueError):
        trig_field(t2, [((1,), 1.0)])
    with pytest.raises(AliasingError):
        trig_field(t1, [((3,), 1.0)], N=2)


def test_project_and_pad_are_inverse(random_field, t3):
    f = random_field(t3, 2)
    np.testing.assert_array_equal(project(f.padded(4), 2).coeffs, f.coeffs)
    assert project(f, 2) is f
    with pytest.raises(AliasingError):
        project(f, 3)


def test_field_arithmetic_aligns_cutoffs(t1):
    a = trig_field(t1, [((1,), 0.5)])
    b = trig_field(t1, [((3,), 0.25)])
    total = 2.0 * a - b
    assert total.N == 3
    assert total.coeff((1,)) == pytest.approx(1.0)
    assert total.coeff((-3,)) == pytest.approx(-0.25)


@pytest.mark.parametrize(
    "p,y,c,expected",
    [(0, 1.7, 0.3, 1.0), (1, 1.7, 0.3, 1.7), (2, 2.0, 1.0, 3.0), (3, 1.0, 1.0, -2.0), (4, 0.0, 2.0, 12.0)],
)
def test_hermite_values(p, y, c, expected):
    assert hermite(p, y, c) == pytest.approx(expected)


@pytest.mark.parametrize("c", [0.0, 0.5, 2.0])
@pytest.mark.parametrize("p", [1, 2, 3, 4, 5, 6])
def test_hermite_derivative(p, c):
    y = np.linspace(-2.0, 2.0, 21)
    h = 1e-5
    derivative = (hermite(p, y + h, c) - hermite(p, y - h, c)) / (2 * h)
    np.testing.assert_allclose(derivative, p * hermite(p - 1, y, c), rtol=1e-6, atol=1e-6)


def test_hermite_rejects_negative_variance():
    with pytest.raises(ValueError):
        hermite(2, 1.0, -0.1)


def test_variance_constant_single_mode(t1):
    assert variance_constant(t1, 1) == pytest.approx(0.0506606, abs=1e-7)
    assert variance_constant(t1, 1) == pytest.approx(2.0 / (4.0 * math.pi**2))


def test_variance_constant_grows_logarithmically_in_2d(t2):
    c = [variance_constant(t2, N) for N in (16, 32, 64)]
    assert (c[2] - c[1]) / (c[1] - c[0]) == pytest.approx(1.0, abs=0.05)


def test_variance_constant_grows_linearly_in_3d(t3):
    c = [variance_constant(t3, N) for N in (8, 16, 32)]
    assert (c[2] - c[1]) / (c[1] - c[0]) == pytest.approx(2.0, abs=0.05)


def test_wick_square_of_single_mode(t1):
    a, c = 0.7, 0.1
    phi = trig_field(t1, [((1,), a * SQRT2_HALF)])
    square = wick_power(phi, 2, c)
    assert square.N == 2
    assert float(square.mean) == pytest.approx(a**2 - c)
    assert square.coeff((2,)) == pytest.approx(a**2 / 2)
    assert square.coeff((1,)) == pytest.approx(0.0, abs=1e-15)


def test_wick_power_low_orders(cos_field):
    assert wick_power(cos_field, 1, 0.3) is cos_field
    unit = wick_power(cos_field, 0, 0.3)
    assert float(unit.mean) == 1.0
    assert not np.any(unit.coeffs)


def test_wick_power_rejects_aliasing_grid(cos_field):
    with pytest.raises(AliasingError):
        wick_power(cos_field, 2, 0.1, M=4)
    with pytest.raises(ValueError):
        wick_power(cos_field, 7, 0.1)


def test_pointwise_power_matches_grid_power(random_field, t2):
    f = random_field(t2, 2)
    cube = pointwise_power(f, 3)
    grid = synthesize(f, 13).values ** 3
    np.testing.assert_allclose(synthesize(cube, 13).values, grid, atol=1e-12)


def test_wick_bundle_matches_individual_powers(random_field, t2):
    phi = random_field(t2, 3)
    bundle = wick_bundle(phi, p_max=4)
    assert bundle.power(1) is phi
    assert bundle.c_n == pytest.approx(variance_constant(t2, 3))
    for p in range(2, 5):
        direct = wick_power(phi, p, bundle.c_n)
        np.testing.assert_allclose(bundle.power(p).coeffs, direct.coeffs, atol=1e-12)
        assert float(bundle.power(p).mean) == pytest.approx(float(direct.mean), abs=1e-12)
    with pytest.raises(ValueError):
        bundle.power(5)


def test_wick_bundle_at_level(random_field, t1):
    phi = random_field(t1, 8)
    bundle = wick_bundle(phi, p_max=2, level=4)
    assert bundle.level_n == 4
    np.testing.assert_array_equal(bundle.base.coeffs, project(phi, 4).coeffs)


@pytest.mark.parametrize("p", [2, 3, 4])
def test_wick_powers_have_mean_zero(t1, rng, p):
    N = 16
    phi = sample_gff(ModeTruncation(N, 1), t1, rng, 8000)
    power = wick_power(phi, p, variance_constant(t1, N))
    estimate = mean_estimate(power.mean)
    assert abs(estimate.value) < 4 * estimate.stderr


def test_binomial_pairing_of_first_order_is_mean_zero(random_field, t2):
    phi, z = random_field(t2, 4), random_field(t2, 2, 0.5)
    assert wick_binomial_pairing(phi, z, 4, 1) == pytest.approx(0.0, abs=1e-14)


def test_binomial_pairing_of_second_order(random_field, t2):
    phi, z = random_field(t2, 4), random_field(t2, 2, 0.5)
    c = variance_constant(t2, 4)
    expanded = wick_binomial_pairing(phi, z, 4, 2)
    by_hand = float(wick_power(phi, 2, c).mean) - 2.0 * plancherel(phi, z) + float(pointwise_power(z, 2).mean)
    direct = float(wick_power(phi - z, 2, c).mean)
    assert expanded == pytest.approx(by_hand, rel=1e-10, abs=1e-12)
    assert expanded == pytest.approx(direct, rel=1e-10, abs=1e-12)


def test_green_kernel(t1, t2):
    kernel = green_kernel(t1, 1, 8)
    x = np.arange(8) / 8
    np.testing.assert_allclose(kernel.values, 2 * np.cos(2 * math.pi * x) / (4 * math.pi**2), atol=1e-15)
    assert green_kernel(t2, 3).values[0, 0] == pytest.approx(variance_constant(t2, 3))
