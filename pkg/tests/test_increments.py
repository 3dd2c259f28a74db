import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.stats import norm

from edgerace import increments as inc

LN_E_MINUS_1 = 0.541324854612918  # log of quad(exp, 0, 1); equals ln(e-1)


@pytest.fixture(scope="module")
def std_gaussian():
    return inc.gaussian(0.0, 1.0)


@pytest.fixture(scope="module")
def unit_uniform():
    return inc.uniform(0.0, 1.0)


@pytest.fixture(scope="module")
def table_model():
    # two-bump density tabulated on a uniform grid, normalized by quadrature
    grid = np.linspace(-8.0, 8.0, 3201)
    raw = np.exp(-0.5 * (grid + 1.0) ** 2) + 0.5 * np.exp(-0.5 * ((grid - 2.0) / 0.8) ** 2)
    w = inc._quad_weights(grid)
    return inc.tabulated(grid, raw / np.dot(w, raw))


def test_density_normalization(std_gaussian, unit_uniform, table_model):
    for model in (std_gaussian, unit_uniform, table_model):
        assert abs(inc._integrate(model.grid, model.density) - 1.0) < 1e-8


def test_cumulant_gaussian_closed_form(std_gaussian):
    c = inc.cumulant(std_gaussian, 2.0)
    assert c.value == pytest.approx(2.0, abs=1e-14)
    assert c.mean == pytest.approx(2.0, abs=1e-14)
    assert c.variance == pytest.approx(1.0, abs=1e-14)


def test_cumulant_at_zero_is_exact(std_gaussian, unit_uniform, table_model):
    for model in (std_gaussian, unit_uniform, table_model):
        c = inc.cumulant(model, 0.0)
        assert c.value == 0.0
        assert c.mean == model.mean
        assert c.variance == model.variance


def test_cumulant_uniform_quadrature_oracle(unit_uniform):
    oracle = math.log(quad(np.exp, 0.0, 1.0)[0])
    c = inc.cumulant(unit_uniform, 1.0)
    assert c.value == pytest.approx(oracle, abs=1e-12)
    assert c.value == pytest.approx(LN_E_MINUS_1, abs=1e-12)


def test_cumulant_rejects_out_of_range(std_gaussian):
    with pytest.raises(ValueError):
        inc.cumulant(std_gaussian, std_gaussian.lambda_hi * 1.5)


def test_legendre_gaussian(std_gaussian):
    eta, rate = inc.legendre(std_gaussian, 0.3)
    assert eta == pytest.approx(0.3, abs=1e-12)
    assert rate == pytest.approx(0.045, abs=1e-12)


def test_legendre_at_the_mean(std_gaussian, unit_uniform):
    for model in (std_gaussian, unit_uniform):
        eta, rate = inc.legendre(model, model.mean)
        assert eta == 0.0 and rate == 0.0


def test_legendre_uniform_against_closed_form_root(unit_uniform):
    # independent oracle: eta solves (e^eta (eta-1) + 1) / (eta (e^eta - 1)) = 0.7
    f = lambda e: (np.exp(e) * (e - 1) + 1) / (e * (np.exp(e) - 1)) - 0.7
    oracle = brentq(f, 1e-6, 20.0, xtol=1e-14)
    assert oracle == pytest.approx(2.672103855273385, abs=1e-12)
    eta, rate = inc.legendre(unit_uniform, 0.7)
    assert eta == pytest.approx(oracle, abs=1e-8)
    assert rate == pytest.approx(0.2528455630041859, abs=1e-8)


def test_legendre_rejects_unattainable(unit_uniform):
    with pytest.raises(ValueError):
        inc.legendre(unit_uniform, 0.4)  # below the mean
    with pytest.raises(ValueError):
        inc.legendre(unit_uniform, 1.5)  # above the attainable tilted mean


def test_front_velocity_values(std_gaussian, unit_uniform):
    assert inc.front_velocity(std_gaussian, 1.0) == pytest.approx(0.5, abs=1e-14)
    model = inc.gaussian(0.7, 2.0)
    for s in (0.5, 1.0, 2.0):
        assert inc.front_velocity(model, s) == pytest.approx(0.7 + 2.0 * s / 2.0, abs=1e-12)
    assert inc.front_velocity(unit_uniform, 1.0) == pytest.approx(LN_E_MINUS_1, abs=1e-12)


def test_front_velocity_dominates_mean(std_gaussian, unit_uniform, table_model):
    # Jensen: Lambda(s)/s >= mean, strictly for nondegenerate laws
    for model in (std_gaussian, unit_uniform, table_model):
        for s in (0.25, 1.0, 2.0):
            assert inc.front_velocity(model, s) > model.mean


def test_tilt_gaussian_closed_form():
    model = inc.gaussian(0.4, 2.5)
    tilted = inc.tilt(model, 1.2)
    assert tilted.kind == "gaussian"
    assert tilted.params[0] == pytest.approx(0.4 + 2.5 * 1.2, abs=1e-12)
    assert tilted.params[1] == pytest.approx(2.5, abs=1e-12)


def test_tilt_identity_at_zero(unit_uniform):
    assert inc.tilt(unit_uniform, 0.0) is unit_uniform


def test_tilt_uniform_direct_normalization(unit_uniform):
    tilted = inc.tilt(unit_uniform, 1.0)
    expected = np.exp(tilted.grid) / (math.e - 1.0)
    np.testing.assert_allclose(tilted.density, expected, atol=1e-8)


@pytest.mark.parametrize("s", [0.6, -0.9])
def test_tilt_round_trip(unit_uniform, table_model, s):
    for model in (unit_uniform, table_model):
        back = inc.tilt(inc.tilt(model, s), -s)
        np.testing.assert_allclose(back.density, model.density, atol=1e-8)


def test_sample_empty_and_deterministic(std_gaussian):
    assert inc.sample(std_gaussian, 0, (1, 2)).size == 0
    a = inc.sample(std_gaussian, 1000, (7, 3))
    b = inc.sample(std_gaussian, 1000, (7, 3))
    np.testing.assert_array_equal(a, b)


def test_sample_gaussian_clt_bound(std_gaussian):
    draws = inc.sample(std_gaussian, 10 ** 5, (11,))
    assert abs(draws.mean()) < 4.0 / math.sqrt(10 ** 5)


def test_sample_tabulated_moments(table_model):
    draws = inc.sample(table_model, 10 ** 5, (13,))
    assert abs(draws.mean() - table_model.mean) < 4.0 * math.sqrt(table_model.variance / 10 ** 5)
    assert abs(draws.var() - table_model.variance) < 0.05 * table_model.variance


def test_step_tail(std_gaussian, unit_uniform, table_model):
    assert inc.step_tail(std_gaussian, 0.0) == pytest.approx(0.5, abs=1e-15)
    assert inc.step_tail(unit_uniform, 0.25) == pytest.approx(0.75, abs=1e-12)
    assert inc.step_tail(unit_uniform, -3.0) == 1.0
    assert inc.step_tail(unit_uniform, 3.0) == 0.0
    ts = np.linspace(-6, 6, 25)
    vals = inc.step_tail(table_model, ts)
    assert np.all(np.diff(vals) <= 1e-12)


def test_sum_tail_gaussian_exact(std_gaussian):
    q = inc.tail_query(std_gaussian, 100, 30.0, "gaussian-exact")
    got = inc.sum_tail(std_gaussian, q)
    assert got.value == pytest.approx(0.0013498980316300933, rel=1e-12)
    assert got.se is None


def test_sum_tail_rejects_below_mean(std_gaussian, unit_uniform):
    for model, y in ((std_gaussian, -5.0), (unit_uniform, 10.0)):
        with pytest.raises(ValueError):
            inc.tail_query(model, 100, y, "br-approx")


def test_tail_query_psi_positive(std_gaussian):
    q = inc.tail_query(std_gaussian, 50, 10.0, "br-approx")
    assert q.eta > 0 and q.psi > 0


def test_sum_tail_br_matches_its_formula(std_gaussian):
    q = inc.tail_query(std_gaussian, 100, 30.0, "br-approx")
    expected = math.exp(-100 * 0.045) / (0.3 * math.sqrt(2 * math.pi * 100))
    assert inc.sum_tail(std_gaussian, q).value == pytest.approx(expected, rel=1e-12)


def test_sum_tail_mc_importance_matches_exact(std_gaussian):
    exact = inc.sum_tail(std_gaussian, inc.tail_query(std_gaussian, 100, 30.0, "gaussian-exact")).value
    q = inc.tail_query(std_gaussian, 100, 30.0, "mc-importance",
                       mc_samples=10 ** 6, mc_stream=(5, 1))
    got = inc.sum_tail(std_gaussian, q)
    assert got.se is not None and got.se > 0
    assert abs(got.value - exact) < 3.0 * got.se


def test_sum_tail_mc_grid_within_four_se(std_gaussian):
    for i, (tau, qq) in enumerate([(25, 0.35), (64, 0.3), (100, 0.25)]):
        exact = inc.sum_tail(std_gaussian, inc.tail_query(std_gaussian, tau, qq * tau, "gaussian-exact")).value
        got = inc.sum_tail(std_gaussian, inc.tail_query(
            std_gaussian, tau, qq * tau, "mc-importance", mc_samples=200_000, mc_stream=(21, i)))
        assert abs(got.value - exact) < 4.0 * got.se


def test_sum_tail_mc_nongaussian_batched(unit_uniform):
    # per-step batched sampling path; compare against a plain-MC oracle
    q = inc.tail_query(unit_uniform, 12, 8.0, "mc-importance",
                       mc_samples=100_000, mc_stream=(23,))
    got = inc.sum_tail(unit_uniform, q)
    rng = np.random.default_rng(99)
    oracle = (rng.uniform(0, 1, size=(400_000, 12)).sum(axis=1) >= 8.0).mean()
    assert abs(got.value - oracle) < 4.0 * (got.se + math.sqrt(oracle / 400_000))


def test_sum_tail_mc_se_cap(std_gaussian):
    q = inc.tail_query(std_gaussian, 100, 30.0, "mc-importance",
                       mc_samples=1000, mc_stream=(5, 2), se_cap=1e-12)
    with pytest.raises(ArithmeticError):
        inc.sum_tail(std_gaussian, q)


def test_tail_ratio_exact_values(std_gaussian):
    got = inc.tail_ratio(std_gaussian, 100, 0.3, 1.0, "gaussian-exact")
    assert got.ratio == pytest.approx(0.7167972621235027, rel=1e-12)
    assert got.prediction == pytest.approx(math.exp(-0.3), rel=1e-14)


def test_tail_ratio_at_zero_shift(std_gaussian):
    got = inc.tail_ratio(std_gaussian, 100, 0.3, 0.0, "gaussian-exact")
    assert got.ratio == 1.0 and got.prediction == 1.0


def test_tail_ratio_window(std_gaussian):
    with pytest.raises(ValueError):
        inc.tail_ratio(std_gaussian, 100, 0.3, 7.0, "gaussian-exact")  # 7 > 100**0.4


def test_tail_ratio_discrepancy_shrinks_with_tau(std_gaussian):
    diffs = []
    for tau in (25, 100, 400):
        got = inc.tail_ratio(std_gaussian, tau, 0.3, 1.0, "gaussian-exact")
        diffs.append(abs(got.ratio - got.prediction))
    assert diffs[0] > diffs[1] > diffs[2]


def test_cumulant_convexity_on_random_tilts(std_gaussian, unit_uniform, table_model):
    rng = np.random.default_rng(3)
    for model in (std_gaussian, unit_uniform, table_model):
        lams = rng.uniform(model.lambda_lo, model.lambda_hi, size=12)
        for lam in lams:
            assert inc.cumulant(model, lam).variance >= -1e-8


def test_legendre_round_trip(std_gaussian, unit_uniform, table_model):
    rng = np.random.default_rng(4)
    for model in (std_gaussian, unit_uniform, table_model):
        hi = min(model.lambda_hi, 5.0)
        for eta0 in rng.uniform(0.05, 0.8 * hi, size=6):
            q = inc.cumulant(model, eta0).mean
            eta, _ = inc.legendre(model, q)
            assert abs(eta - eta0) < 1e-8


def test_tabulated_density_validation():
    grid = np.linspace(0, 1, 101)
    with pytest.raises(ValueError):
        inc.tabulated(grid, np.full(101, 2.0))  # integrates to 2
    with pytest.raises(ValueError):
        inc.tabulated(grid, -np.ones(101))


def test_model_from_dict_round_trip():
    m = inc.model_from_dict({"kind": "gaussian", "mean": 1.0, "variance": 4.0})
    assert m.kind == "gaussian" and m.params == (1.0, 4.0)
    u = inc.model_from_dict({"kind": "uniform", "lo": -1.0, "hi": 1.0})
    assert u.params == (-1.0, 1.0)
    with pytest.raises(ValueError):
        inc.model_from_dict({"kind": "cauchy"})
