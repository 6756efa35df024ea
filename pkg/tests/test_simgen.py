import numpy as np
import pytest

from bnpdep.core_stats import RngStream
from bnpdep.errors import ContractViolation
from bnpdep.simgen import SCENARIOS, Scenario, generate, sample_raw


@pytest.mark.parametrize("name", SCENARIOS)
def test_output_is_standardized(name):
    v = generate(name, 200, RngStream(3)).values
    np.testing.assert_allclose(v.mean(axis=0), 0.0, atol=1e-8)
    np.testing.assert_allclose(v.var(axis=0, ddof=1), 1.0, atol=1e-8)


@pytest.mark.parametrize("name", SCENARIOS)
def test_deterministic_per_address(name):
    a = generate(name, 50, RngStream(11, (2, 5))).values
    b = generate(name, 50, RngStream(11).child(2, 5)).values
    np.testing.assert_array_equal(a, b)
    c = generate(name, 50, RngStream(12, (2, 5))).values
    assert not np.array_equal(a, c)


def test_null_uncorrelated():
    v = generate("Null", 100_000, RngStream(1)).values
    assert abs(np.corrcoef(v.T)[0, 1]) < 0.01


def test_bvn_correlation():
    raw = sample_raw("BVN", 100_000, RngStream(2))
    assert np.corrcoef(raw.T)[0, 1] == pytest.approx(0.2, abs=0.01)


def test_hs_slope_on_square():
    raw = sample_raw("HS", 100_000, RngStream(3))
    slope = np.polyfit(raw[:, 0] ** 2, raw[:, 1], 1)[0]
    assert slope == pytest.approx(0.2, abs=0.02)


def test_circle_mean_squared_radius():
    # E|(sin, cos) + e|^2 = 1 + var1 + var2
    raw = sample_raw("Circle", 10_000, RngStream(4))
    want = 1.0 + 1.0 / 9.0 + 1.0 / 64.0
    assert np.mean((raw ** 2).sum(axis=1)) == pytest.approx(want, rel=0.02)


def test_cone_conditional_spread():
    raw = sample_raw("Cone", 100_000, RngStream(5))
    x, y = raw.T
    near_one = x > 0.95
    # sd at x ~ 1 is 0.1 + 0.1 x^2 ~ 0.2
    assert y[near_one].std() == pytest.approx(0.1 * np.mean(x[near_one] ** 2) + 0.1,
                                              rel=0.05)
    assert np.all((x >= 0) & (x <= 1))


def test_w_within_printed_band():
    raw = sample_raw("W", 5000, RngStream(6))
    x, y = raw.T
    assert np.all(x >= -1.0) and np.all(x <= 1.0 - 2.0 / 5000 + 1.0 / 3.0)
    lo = 3.0 * (x ** 2 - 0.5) ** 2
    hi = 3.0 * (0.5 + x ** 2)
    assert np.all(y >= lo - 1e-12) and np.all(y <= hi + 1e-12)


def test_scenario_parameters_are_read_only():
    s = Scenario("BVN")
    assert s.parameters["rho"] == 0.2
    with pytest.raises(TypeError):
        s.parameters["rho"] = 0.5
    assert Scenario("Circle").parameters["var2"] == 1.0 / 64.0


def test_errors():
    with pytest.raises(ContractViolation):
        Scenario("Spiral")
    with pytest.raises(ContractViolation):
        generate("Null", 9, 0)
