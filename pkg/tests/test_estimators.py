import math

import numpy as np
import pytest

from core.balls import BallSpec, gauge_quantile
from core.errors import AliasingError, HypothesisError, ModelError
from core.measures import GibbsModel
from core.spectral_field import FourierField, TorusSpec, trig_field
from core.streams import SampleLayout
from evaluation.estimators import (
    COLUMNS,
    ScanRow,
    Schedule,
    cameron_martin_normalization,
    check_compensation,
    counterterm_residual,
    degeneracy_scan_3d,
    dyadic_levels,
    extrapolate_log_ratio,
    joint_limit_ratio,
    mechanism_bound_2d,
    om_limit_scan,
    om_ratio_direct,
    om_ratio_recentered,
    proof_bound_3d,
    second_order_ratio,
    third_order_ratio,
    wick_moment_estimate,
)
from evaluation.metrics import Estimate
from evaluation.oracle import gaussian_ball_prob_lowdim, wick_pair_moment

SQRT2_HALF = math.sqrt(2.0) / 2.0


def _layout(count, seed=17, chunk_size=256):
    return SampleLayout.build(count, seed=seed, chunk_size=chunk_size)


def test_default_schedule():
    schedule = Schedule.default([0.4, 0.2, 0.1])
    assert schedule.n_values == (2, 3, 4)
    assert schedule.n_of(0.2) == 3
    assert list(schedule) == [(0.4, 2), (0.2, 3), (0.1, 4)]


def test_schedule_in_radius_units_keeps_the_nominal_levels():
    schedule = Schedule.default([0.4, 0.2, 0.1], unit=20.0)
    assert schedule.n_values == (2, 3, 4)
    assert schedule.r_values == pytest.approx((8.0, 4.0, 2.0))
    with pytest.raises(HypothesisError):
        Schedule.default([0.4, 0.2], unit=0.0)


@pytest.mark.parametrize(
    "r_values,n_values",
    [((0.4, 0.2), (2, 8)), ((0.2, 0.4), (2, 2)), ((0.4,), (1,)), ((0.4, 0.2), (2,))],
)
def test_invalid_schedules(r_values, n_values):
    with pytest.raises(HypothesisError):
        Schedule(r_values, n_values)


def test_dyadic_levels():
    assert dyadic_levels(8) == (2, 4, 8)
    assert dyadic_levels(10) == (2, 4, 8)
    with pytest.raises(ValueError):
        dyadic_levels(1)


def test_direct_ratio_of_a_ball_with_itself_is_one():
    model = GibbsModel.phi4_1(N=4)
    spec = BallSpec.plain(0.8, alpha=0.25)
    estimate = om_ratio_direct(model, spec, spec, 2048, _layout(2048))
    assert estimate.value == 1.0
    twin = BallSpec.plain(0.8, alpha=0.25)
    assert om_ratio_direct(model, spec, twin, 2048, _layout(2048)).value == 1.0


def test_recentered_ratio_of_equal_centers_is_one(t1):
    model = GibbsModel.phi4_1(N=4)
    z = trig_field(t1, [((1,), 0.1)])
    estimate = om_ratio_recentered(model, z, z, BallSpec.plain(0.8, alpha=0.25), 2048, _layout(2048))
    assert estimate.value == 1.0


def test_recentered_ratio_is_thread_independent(t1):
    model = GibbsModel.phi4_1(N=4)
    z1, z2 = trig_field(t1, [((1,), 0.1)]), FourierField.zeros(t1, 1)
    ball = BallSpec.plain(0.8, alpha=0.25)
    serial = om_ratio_recentered(model, z1, z2, ball, 2048, _layout(2048), threads=1)
    pooled = om_ratio_recentered(model, z1, z2, ball, 2048, _layout(2048), threads=4)
    assert serial.value == pooled.value
    assert serial.log_stderr == pooled.log_stderr


def test_recentered_estimator_rejects_centered_balls_and_wide_centers(t1):
    model = GibbsModel.phi4_1(N=4)
    z = trig_field(t1, [((1,), 0.1)])
    with pytest.raises(ValueError):
        om_ratio_recentered(model, z, z, BallSpec.plain(0.5, center=z), 256, _layout(256))
    wide = trig_field(t1, [((6,), 0.1)])
    with pytest.raises(AliasingError):
        om_ratio_recentered(model, wide, z, BallSpec.plain(0.5), 256, _layout(256))


@pytest.mark.slow
def test_recentered_and_direct_agree_with_quadrature(t1):
    model = GibbsModel.gff(t1, 1)
    z = trig_field(t1, [((1,), 0.05)])
    origin = FourierField.zeros(t1, 1)
    ball = BallSpec.plain(0.3, norm="sup")
    exact = gaussian_ball_prob_lowdim(model.trunc, t1, ball.centered_at(z)) / gaussian_ball_prob_lowdim(
        model.trunc, t1, ball
    )
    direct = om_ratio_direct(model, ball.centered_at(z), ball, 100_000, _layout(100_000, chunk_size=4096))
    recentered = om_ratio_recentered(model, z, origin, ball, 100_000, _layout(100_000, seed=18, chunk_size=4096))
    for estimate in (direct, recentered):
        assert abs(estimate.log_value - math.log(exact)) < 4 * estimate.log_stderr + 1e-3
    combined = math.hypot(direct.log_stderr, recentered.log_stderr)
    assert abs(direct.log_value - recentered.log_value) < 4 * combined


def test_om_limit_scan_with_equal_centers(t1):
    model = GibbsModel.phi4_1(N=4)
    z = trig_field(t1, [((1,), 0.1)])
    table = om_limit_scan(model, z, z, BallSpec.plain(0.8, alpha=0.25), [0.8, 0.6, 0.4], 2048, layout=_layout(2048))
    frame = table.to_frame()
    assert list(frame.columns[: len(COLUMNS)]) == COLUMNS
    assert len(frame) == 3
    assert np.all(frame["estimate"] == 1.0)
    assert np.all(frame["log_predicted"] == 0.0)
    assert set(table.fit) == {"intercept", "slope", "points"}


def test_om_limit_scan_rejects_increasing_radii(t1):
    model = GibbsModel.phi4_1(N=4)
    z = trig_field(t1, [((1,), 0.1)])
    with pytest.raises(ValueError):
        om_limit_scan(model, z, z, BallSpec.plain(0.8), [0.4, 0.8], 256, layout=_layout(256))


def test_om_limit_scan_predicts_the_action_difference(t1, cos_field):
    model = GibbsModel.phi4_1(N=4)
    zero = FourierField.zeros(t1, 1)
    table = om_limit_scan(model, cos_field, zero, BallSpec.plain(2.0, alpha=0.25), [2.0], 512, layout=_layout(512))
    assert table.rows[0].log_predicted == pytest.approx(-20.1142, abs=1e-4)


def _row(r, log_value, log_stderr=0.01):
    estimate = Estimate(math.exp(log_value), 0.0, 100, 100.0, False, log_value, log_stderr)
    return ScanRow("synthetic", r, None, estimate, 0.0)


def test_extrapolation_recovers_a_line():
    rows = [_row(r, 0.5 - 2.0 * r) for r in (0.4, 0.2, 0.1)]
    fit = extrapolate_log_ratio(rows)
    assert fit["intercept"] == pytest.approx(0.5)
    assert fit["slope"] == pytest.approx(-2.0)
    assert fit["points"] == 3
    assert math.isnan(extrapolate_log_ratio(rows[:1])["intercept"])


def test_degeneracy_scan_with_zero_center(t3):
    z = FourierField.zeros(t3, 1)
    ball = BallSpec.enhanced_3d(1e3, 0.1, (2,))
    table = degeneracy_scan_3d(z, ball, (2,), 64, layout=_layout(64, chunk_size=32))
    [row] = table.rows
    assert row.estimate.value == 1.0
    assert row.log_predicted == 0.0
    assert table.fit["predicted_slope"] == 0.0


def test_degeneracy_prediction_carries_the_counterterm(t3):
    z = trig_field(t3, [((1, 0, 0), 0.5)])
    ball = BallSpec.enhanced_3d(1e3, 0.1, (2,))
    table = degeneracy_scan_3d(z, ball, (2,), 32, counterterm_scale=2.0, layout=_layout(32, chunk_size=32))
    [row] = table.rows
    l2_sq = 0.5
    quartic = 0.25 * 0.375 * 0.5**2 * 4
    gradient = 0.5 * 4 * math.pi**2 * l2_sq
    expected = -(quartic + gradient) - 0.25 * 2.0 * math.log(2) * l2_sq
    assert row.log_predicted == pytest.approx(expected)
    assert row.extras["counterterm"] == pytest.approx(-2.0 * math.log(2))
    assert table.fit["predicted_slope"] == pytest.approx(-0.25 * 2.0 * l2_sq)


def test_compensation_requires_equal_norms(t3):
    z1 = trig_field(t3, [((1, 0, 0), 0.5)])
    z2 = trig_field(t3, [((0, 2, 0), 0.5)])
    gaps = check_compensation(z1, z2, (2, 4))
    assert gaps == pytest.approx([0.0, 0.0], abs=1e-12)
    with pytest.raises(HypothesisError):
        check_compensation(z1, 0.5 * z2, (2, 4))


def test_compensation_gap_when_spectrum_exceeds_level(t3):
    z1 = trig_field(t3, [((1, 0, 0), 0.5)])
    z2 = trig_field(t3, [((0, 3, 0), 0.5)], N=3)
    gaps = check_compensation(z1, z2, (2, 3))
    assert gaps[0] == pytest.approx(math.log(2) * 0.5)
    assert gaps[1] == pytest.approx(0.0, abs=1e-12)


def test_joint_limit_rejects_uncompensated_centers(t3):
    z1 = trig_field(t3, [((1, 0, 0), 0.5)])
    z2 = trig_field(t3, [((0, 1, 0), 0.3)])
    ball = BallSpec.fully_renorm_3d(0.4, 0.1, (2,))
    with pytest.raises(HypothesisError):
        joint_limit_ratio(z1, z2, Schedule.default([0.4, 0.2]), ball, 32, layout=_layout(32, chunk_size=32))


def test_joint_limit_runs_on_compensated_centers(t3):
    z1 = trig_field(t3, [((1, 0, 0), 0.05)])
    z2 = trig_field(t3, [((0, 1, 0), 0.05)])
    ball = BallSpec.fully_renorm_3d(1e3, 0.1, (2,))
    schedule = Schedule((1e3, 5e2), (2, 3))
    table = joint_limit_ratio(z1, z2, schedule, ball, 64, N=3, layout=_layout(64, chunk_size=32))
    assert [row.n for row in table.rows] == [2, 3]
    for row in table.rows:
        assert row.log_predicted == pytest.approx(0.0, abs=1e-12)
        assert row.extras["compensation_gap"] == pytest.approx(0.0, abs=1e-12)
        assert row.estimate.value == pytest.approx(1.0, rel=0.5)


def test_counterterm_residuals(random_field, t3):
    z1, z2 = random_field(t3, 3, 0.3), random_field(t3, 3, 0.3)
    for n in (2, 3, 8):
        third, scale = counterterm_residual([z1, 3.0 * z1 - 2.0 * z2, z2, 2.0 * z1 - z2], (3, 1, -1, -3), n)
        assert abs(third) < 1e-10 * max(scale, 1.0)
    second, _ = counterterm_residual([z1, 2.0 * z2 - z1, z2], (1, 1, -2), 2)
    l2_sq = float(np.sum(np.abs((z1 - z2).coeffs[..., 1:6, 1:6, 1:6]) ** 2))
    assert second == pytest.approx(-0.25 * math.log(2) * 2.0 * l2_sq)


def test_third_order_ratio_with_equal_centers(t3):
    z = trig_field(t3, [((1, 0, 0), 0.05)])
    ball = BallSpec.fully_renorm_3d(1e3, 0.1, (2,))
    table = third_order_ratio(z, z, Schedule((1e3,), (2,)), ball, 64, layout=_layout(64, chunk_size=32))
    [row] = table.rows
    assert row.estimate.value == pytest.approx(1.0, rel=1e-10)
    assert row.log_predicted == pytest.approx(0.0, abs=1e-10)


def test_second_order_ratio_reports_the_counterterm(t3):
    model = GibbsModel.phi4_3(N=2, level=2)
    z1 = trig_field(t3, [((1, 0, 0), 0.2)])
    z2 = trig_field(t3, [((0, 1, 0), 0.1)])
    ball = BallSpec.fully_renorm_3d(1e3, 0.1, (2,))
    table = second_order_ratio(model, z1, z2, ball, [1e3], 64, layout=_layout(64, chunk_size=32))
    [row] = table.rows
    l2_sq = 2 * 0.2**2 + 2 * 0.1**2
    assert row.extras["counterterm_residual"] == pytest.approx(-0.25 * math.log(2) * 2.0 * l2_sq)
    assert row.n == 2


def test_mechanism_bound(t2):
    model = GibbsModel.phi4_2(N=2)
    z = trig_field(t2, [((1, 0), 0.1)])
    ball = BallSpec.enhanced_2d(1e3, 0.3)
    table = mechanism_bound_2d(model, z, ball, [1e3, 1e-9], 128, layout=_layout(128, chunk_size=64))
    big, tiny = table.rows
    assert big.extras["accepted"] == 128
    assert tiny.extras["accepted"] == 0
    assert np.isfinite(big.extras["sup_over_r"])
    assert tiny.extras["sup_abs"] == 0.0
    with pytest.raises(ModelError):
        mechanism_bound_2d(GibbsModel.phi4_1(4), trig_field(TorusSpec(1), [((1,), 0.1)]), ball, [1.0], 8)


def test_mechanism_terms_vanish_for_a_zero_center(t2):
    model = GibbsModel.phi4_2(N=2)
    z = FourierField.zeros(t2, 1)
    table = mechanism_bound_2d(model, z, BallSpec.enhanced_2d(1e3, 0.3), [1e3], 64, layout=_layout(64))
    assert table.rows[0].extras["sup_abs"] == pytest.approx(0.0, abs=1e-14)


def test_proof_bound(t3):
    z = trig_field(t3, [((1, 0, 0), 0.2)])
    ball = BallSpec.enhanced_3d(1e3, 0.1, (2,))
    table = proof_bound_3d(z, ball, (2,), 64, layout=_layout(64, chunk_size=32))
    [row] = table.rows
    assert row.extras["accepted"] == 64
    assert np.isfinite(row.extras["bound_constant"])
    assert row.extras["bound_constant"] >= 0.0


@pytest.mark.slow
def test_cameron_martin_normalization_is_one(t1):
    z = trig_field(t1, [((1,), 0.05), ((2,), 0.02j)])
    estimate = cameron_martin_normalization(z, 4, 100_000, _layout(100_000, chunk_size=8192))
    assert abs(estimate.value - 1.0) < 4 * estimate.stderr


@pytest.mark.slow
@pytest.mark.parametrize(
    "d,modes",
    [(1, [((1,), 0.1), ((3,), 0.03j)]), (2, [((1, 0), 0.05)]), (2, [((1, 1), 0.03), ((0, 2), 0.02)])],
)
def test_cameron_martin_normalization_in_low_dimensions(d, modes):
    z = trig_field(TorusSpec(d), modes)
    estimate = cameron_martin_normalization(z, 4, 100_000, _layout(100_000, seed=d, chunk_size=8192))
    assert abs(estimate.value - 1.0) < 4 * estimate.stderr


CONSISTENCY_SCENARIOS = {
    "gff-1d-sup": (lambda: GibbsModel.gff(TorusSpec(1), 2), BallSpec.plain(1.0, norm="sup"), [((1,), 0.05)]),
    "phi4-1d-besov": (lambda: GibbsModel.phi4_1(N=4), BallSpec.plain(1.0, alpha=0.25), [((1,), 0.05)]),
    "gff-2d-sup": (lambda: GibbsModel.gff(TorusSpec(2), 2), BallSpec.plain(1.0, norm="sup"), [((1, 0), 0.03)]),
    "phi4-2d-besov": (lambda: GibbsModel.phi4_2(N=4), BallSpec.plain(1.0, alpha=-0.3), [((1, 0), 0.03)]),
    "phi4-2d-enhanced": (lambda: GibbsModel.phi4_2(N=4), BallSpec.enhanced_2d(1.0, 0.3), [((0, 1), 0.03)]),
}


@pytest.mark.slow
@pytest.mark.parametrize("scenario", list(CONSISTENCY_SCENARIOS))
def test_direct_and_recentered_estimators_agree(scenario):
    build_model, unit_ball, modes = CONSISTENCY_SCENARIOS[scenario]
    model = build_model()
    z = trig_field(model.torus, modes)
    origin = FourierField.zeros(model.torus, 1)
    radius = gauge_quantile(unit_ball, model, 0.5, 2048, _layout(2048, seed=5, chunk_size=512))
    ball = unit_ball.with_radius(radius)
    count = 40_000
    direct = om_ratio_direct(model, ball.centered_at(z), ball, count, _layout(count, seed=6, chunk_size=2048))
    recentered = om_ratio_recentered(model, z, origin, ball, count, _layout(count, seed=7, chunk_size=2048))
    assert not direct.degenerate and not recentered.degenerate
    combined = math.hypot(direct.log_stderr, recentered.log_stderr)
    assert abs(direct.log_value - recentered.log_value) < 4 * combined


WICK_TEST_FIELDS = {
    1: [((1,), SQRT2_HALF), ((3,), 0.25)],
    2: [((1, 0), SQRT2_HALF), ((1, 1), 0.25)],
}


@pytest.mark.slow
@pytest.mark.parametrize("p", [1, 2, 3])
@pytest.mark.parametrize("N", [4, 8])
@pytest.mark.parametrize("d", [1, 2])
def test_wick_moment_estimate_matches_oracle(d, N, p):
    f = trig_field(TorusSpec(d), WICK_TEST_FIELDS[d])
    count = 100_000
    estimate = wick_moment_estimate(p, f, N, count, _layout(count, seed=10 * d + N, chunk_size=2048))
    assert abs(estimate.value - wick_pair_moment(p, f, f, N)) < 4 * estimate.stderr


@pytest.mark.slow
def test_recentered_ratio_error_bars_are_calibrated(t1):
    model = GibbsModel.gff(t1, 2)
    z = trig_field(t1, [((1,), 0.05)])
    origin = FourierField.zeros(t1, 2)
    ball = BallSpec.plain(0.3, norm="sup")
    estimates = [
        om_ratio_recentered(model, z, origin, ball, 4096, _layout(4096, seed=seed, chunk_size=1024))
        for seed in range(20)
    ]
    logs = np.array([e.log_value for e in estimates])
    reported = np.mean([e.log_stderr for e in estimates])
    assert 0.5 <= logs.std(ddof=1) / reported <= 2.0
