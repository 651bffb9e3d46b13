import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tumorsmc import CoeffConfig
from tumorsmc import coeffs as C

CFG = CoeffConfig()

finite_floats = st.floats(min_value=-50.0, max_value=50.0, allow_nan=False)


@given(finite_floats)
def test_clamp_range_and_identity(x):
    q = C.clamp(x)
    assert -1.0 <= q <= 1.0
    if -1.0 <= x <= 1.0:
        assert q == x


@given(finite_floats)
def test_f_bounded_and_vanishes_in_bulk(x):
    v = C.f_prolif(x)
    assert 0.0 <= v <= 1.0
    if abs(x) >= 1.0:
        assert v == pytest.approx(0.0, abs=1e-15)


def test_f_peaks_on_interface():
    assert C.f_prolif(0.0) == pytest.approx(1.0)
    assert C.f_prolif(-1.0) == pytest.approx(0.0, abs=1e-15)
    assert C.f_prolif(1.0) == pytest.approx(0.0, abs=1e-15)


@given(finite_floats)
def test_h_bounded_monotone_side(x):
    v = C.h_consume(x)
    assert 0.0 <= v <= 1.0
    if x <= -1.0:
        assert v == pytest.approx(0.0, abs=1e-15)
    if x >= 1.0:
        assert v == pytest.approx(1.0)


def test_h_midpoint():
    assert C.h_consume(0.0) == pytest.approx(0.5)


@given(finite_floats)
def test_mobility_between_floors(x):
    m = C.mobility(x, CFG)
    assert CFG.m0 <= m <= CFG.m1 + 1e-18


def test_mobility_endpoints():
    assert C.mobility(1.0, CFG) == pytest.approx(CFG.m0)
    assert C.mobility(-1.0, CFG) == pytest.approx(CFG.m0)
    assert C.mobility(0.0, CFG) == pytest.approx(CFG.m1)


@given(st.floats(min_value=-5.0, max_value=25.0, allow_nan=False))
def test_g_bounded_and_piecewise_exact(x):
    g = C.g_nutrient(x, CFG)
    assert 0.0 <= g <= CFG.m_cap
    if x <= 0.0:
        assert g == 0.0
    elif CFG.theta <= x <= CFG.m_cap - CFG.theta:
        assert g == pytest.approx(x, rel=1e-14)
    elif x >= CFG.m_cap:
        assert g == CFG.m_cap


def test_g_is_c1_at_joins():
    # second-order one-sided differences across every blend join
    d = 1e-6
    for a in (0.0, CFG.theta, CFG.m_cap - CFG.theta, CFG.m_cap):
        left = (3 * C.g_nutrient(a, CFG) - 4 * C.g_nutrient(a - d, CFG)
                + C.g_nutrient(a - 2 * d, CFG)) / (2 * d)
        right = (-3 * C.g_nutrient(a, CFG) + 4 * C.g_nutrient(a + d, CFG)
                 - C.g_nutrient(a + 2 * d, CFG)) / (2 * d)
        # one-sided differences carry an O(d^2 / theta^2) truncation floor
        assert left == pytest.approx(right, abs=5e-8)


def test_g_monotone_nondecreasing():
    x = np.linspace(-1.0, CFG.m_cap + 1.0, 20001)
    g = C.g_nutrient(x, CFG)
    assert np.all(np.diff(g) >= -1e-15)


@given(st.floats(min_value=-0.01, max_value=0.01, allow_nan=False))
def test_smooth_maxmin_sum_identity(x):
    rho = 1e-3
    mx, mn = C.smooth_maxmin(x, rho)
    assert mx + mn == pytest.approx(x, abs=1e-18)
    assert mx >= -1e-18 and mn <= 1e-18
    if x >= rho:
        assert mx == x and mn == 0.0
    if x <= -rho:
        assert mx == 0.0 and mn == x


def test_smooth_max_joins_to_second_order():
    rho = 1e-3
    d = 1e-6
    for a, outer in ((rho, lambda t: t), (-rho, lambda t: 0.0 * t)):
        inner_val, _ = C.smooth_maxmin(a, rho)
        assert inner_val == pytest.approx(outer(a), abs=1e-15)
        fd_in = (C.smooth_maxmin(a, rho)[0] - C.smooth_maxmin(a - np.sign(a) * d, rho)[0])
        fd_out = (C.smooth_maxmin(a + np.sign(a) * d, rho)[0] - C.smooth_maxmin(a, rho)[0])
        slope_in = fd_in / (np.sign(a) * d)
        slope_out = fd_out / (np.sign(a) * d)
        assert slope_in == pytest.approx(slope_out, abs=1e-5)


def test_psi_normalization_and_symmetry():
    assert C.psi(0.0, CFG) == pytest.approx(0.5, rel=1e-14)
    phi = np.linspace(-1.3, 1.3, 401)
    assert np.allclose(C.psi(phi, CFG), C.psi(-phi, CFG), rtol=1e-12, atol=1e-12)


def test_psi_prime_is_gradient_of_psi():
    rng = np.random.default_rng(7)
    phi = np.concatenate([
        rng.uniform(-1.3, 1.3, 200),
        # probe the relaxation zones around the obstacle corners
        1.0 + rng.uniform(-3e-3, 3e-3, 200),
        -1.0 + rng.uniform(-3e-3, 3e-3, 200),
    ])
    d = 1e-6
    fd = (C.psi(phi + d, CFG) - C.psi(phi - d, CFG)) / (2 * d)
    scale = np.maximum(1.0, np.abs(C.psi_prime(phi, CFG)))
    # third derivative is O(s / rho), so central differences carry an
    # O(d^2 s / rho) floor
    assert np.all(np.abs(C.psi_prime(phi, CFG) - fd) / scale < 5e-5)


def test_psi_second_is_gradient_of_psi_prime():
    rng = np.random.default_rng(8)
    phi = np.concatenate([
        rng.uniform(-1.3, 1.3, 200),
        1.0 + rng.uniform(-3e-3, 3e-3, 200),
        -1.0 + rng.uniform(-3e-3, 3e-3, 200),
    ])
    d = 1e-7
    fd = (C.psi_prime(phi + d, CFG) - C.psi_prime(phi - d, CFG)) / (2 * d)
    scale = np.maximum(1.0, np.abs(C.psi_second(phi, CFG)))
    assert np.all(np.abs(C.psi_second(phi, CFG) - fd) / scale < 2e-3)


def test_psi_prime_outside_relaxation_zone():
    # beyond the rho-neighbourhood of +-1 the obstacle term is exact
    s, rho = CFG.s, CFG.rho
    phi = 1.0 + 5 * rho
    assert C.psi_prime(phi, CFG) == pytest.approx(-phi + s * (phi - 1.0) / 2, rel=1e-12)
    phi = -1.0 - 5 * rho
    assert C.psi_prime(phi, CFG) == pytest.approx(-phi + s * (phi + 1.0) / 2, rel=1e-12)
    assert C.psi_prime(0.0, CFG) == pytest.approx(0.0, abs=1e-15)


def test_profile_odd_and_continuous():
    z = np.linspace(-6.0, 6.0, 1201)
    v = C.phi0_profile(z, CFG)
    assert np.array_equal(C.phi0_profile(-z, CFG), -v)
    assert C.phi0_profile(0.0, CFG) == 0.0
    z0 = np.arctan(np.sqrt(CFG.s - 1.0))
    d = 1e-9
    assert C.phi0_profile(z0 - d, CFG) == pytest.approx(C.phi0_profile(z0 + d, CFG), abs=1e-6)
    assert C.phi0_profile(z0, CFG) == pytest.approx(1.0, rel=1e-10)


def test_profile_monotone_and_bulk_limit():
    z = np.linspace(0.0, 40.0, 4001)
    v = C.phi0_profile(z, CFG)
    assert np.all(np.diff(v) >= -1e-15)
    bulk = CFG.s / (CFG.s - 1.0)
    assert v[-1] == pytest.approx(bulk, rel=1e-12)
    assert np.all(np.abs(v) <= bulk + 1e-15)


def test_initial_phi_sign_structure():
    cfg = CoeffConfig(eps=0.1)
    assert C.initial_phi(np.array([0.0, 0.0]), cfg) > 0.999
    assert C.initial_phi(np.array([4.0, 4.0]), cfg) < -0.999
    pts = np.array([[0.0, 0.0], [0.5, 0.0], [2.0, 2.0]])
    vals = C.initial_phi(pts, cfg)
    assert vals.shape == (3,)
    assert vals[0] > 0 and vals[2] < 0


def test_initial_phi_l8_level_set():
    # the boundary curve |x|_l8 = 1 maps to profile argument 0
    cfg = CoeffConfig(eps=0.2)
    x = 0.7
    y = (1.0 - x**8) ** 0.125
    assert C.initial_phi(np.array([x, y]), cfg) == pytest.approx(0.0, abs=1e-12)


def test_initial_sigma_is_one():
    assert C.initial_sigma(np.array([1.0, 2.0])) == 1.0
    assert np.array_equal(C.initial_sigma(np.zeros((5, 2))), np.ones(5))


def test_config_validation_rejects_bad_values():
    with pytest.raises(ValueError):
        CoeffConfig(s=0.5).validate()
    with pytest.raises(ValueError):
        CoeffConfig(rho=0.0).validate()
    with pytest.raises(ValueError):
        CoeffConfig(m0=0.1, m1=0.05).validate()
    with pytest.raises(ValueError):
        CoeffConfig(eps=-1.0).validate()
    CoeffConfig().validate()
