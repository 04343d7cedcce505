from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st
from scipy import integrate

from swarm_hierarchy import coeffs
from swarm_hierarchy.coeffs import ModelParams, derive
from swarm_hierarchy.errors import ParameterError, RegimeError


@pytest.mark.parametrize("dim,expected", [(1, 1 / 3), (2, 1 / 4), (3, 1 / 5)])
def test_temp_crit(dim, expected):
    c = derive(ModelParams(a=1.0, dim=dim, diff=0.01))
    assert c.temp_crit == pytest.approx(expected, abs=1e-15)


def test_d_diff_arithmetic():
    # T = 0.5 with a = 1: d = 1 gives Tc = 1/3 and D_diff = 1, d = 2 gives Tc = 1/4 and D_diff = 0.5
    assert derive(ModelParams(a=1.0, sigma=1.0, diff=0.5, dim=1)).d_diff == pytest.approx(1.0, rel=1e-14)
    assert derive(ModelParams(a=1.0, sigma=1.0, diff=0.5, dim=2)).d_diff == pytest.approx(0.5, rel=1e-14)


def test_eps_zero_collapse():
    p = ModelParams(a=1.3, tau=0.7, sigma=2.0, diff=0.05, dim=3)
    c = derive(p)
    assert c.lambda_eps == 1.0
    assert c.tau_eps == p.tau
    assert c.chi_eps == 1 - (p.dim + 2) * p.temp / p.a ** 2


def test_alpha_zero_speeds():
    c = derive(ModelParams(a=1.0, dim=2, diff=0.2), alpha=0.0)
    assert c.c1_alpha == pytest.approx(math.sqrt(0.2), rel=1e-15)
    assert c.c2_alpha == c.c1_alpha
    assert c.temp_alpha == c.temp


def test_regime_fields_absent_not_nan():
    cold = derive(ModelParams(diff=0.1))
    hot = derive(ModelParams(diff=0.5))
    assert cold.s_sq is None and cold.d_diff is None and cold.comfort_speed is not None
    assert hot.comfort_speed is None and hot.c1_alpha is None and hot.d_diff is not None
    table = dict((n, ok) for n, _, ok in coeffs.coefficient_table(hot))
    assert table["comfort_speed"] is False and table["d_diff"] is True


def test_kernel_moments():
    assert coeffs.kernel_moment(2) == pytest.approx(math.pi / 8, rel=1e-15)
    assert coeffs.kernel_moment(3) == pytest.approx(2 * math.pi / 15, rel=1e-15)
    oracle, _ = integrate.quad(lambda x: 0.5 * x * x, -1.0, 1.0)
    assert coeffs.kernel_moment(1) == pytest.approx(oracle, rel=1e-13)
    assert coeffs.kernel_moment(1) == pytest.approx(1 / 3, rel=1e-15)


def test_kernel_moment_2d_quadrature_oracle():
    # 1/2 int_{|x|<1} x_1^2 dx in polar coordinates
    val, _ = integrate.dblquad(lambda r, th: 0.5 * (r * math.cos(th)) ** 2 * r, 0, 2 * math.pi, 0, 1)
    assert coeffs.kernel_moment(2) == pytest.approx(val, rel=1e-10)


def test_bad_dimension_rejected():
    with pytest.raises(ParameterError):
        ModelParams(dim=4)
    with pytest.raises(ParameterError):
        coeffs.kernel_moment(0)


@pytest.mark.parametrize("field,value", [("a", 0.0), ("tau", -1.0), ("sigma", 0.0), ("radius", 0.0),
                                         ("diff", -0.1), ("eps", -1e-3)])
def test_params_validation(field, value):
    with pytest.raises(ParameterError):
        ModelParams(**{field: value})


def test_alpha_out_of_range_and_boundary():
    p = ModelParams(dim=2, diff=0.2)
    with pytest.raises(ParameterError):
        derive(p, alpha=-0.01)
    with pytest.raises(ParameterError):
        derive(p, alpha=0.21)
    with pytest.raises(ParameterError, match="boundary"):
        derive(p, alpha=0.2)


def test_alpha_and_regime_reported_separately():
    # alpha = 0.19 is admissible but T = 0.9 is above Tc(alpha) <= 0.5
    p = ModelParams(dim=2, diff=0.9)
    c = derive(p, alpha=0.19)
    assert c.c1_alpha is None
    with pytest.raises(RegimeError, match="Tc"):
        coeffs.c1_alpha(0.19, p.temp, p.a, p.dim)


def test_c1_increasing_examples():
    p = ModelParams(a=1.0, dim=2, diff=0.2)
    assert coeffs.c1_increasing_check(p, np.linspace(0, 0.2, 50)[:-1])
    assert coeffs.c1_increasing_check(p, [0.1])
    c0 = coeffs.c1_alpha(0.0, 0.2, 1.0, 2)
    c1 = coeffs.c1_alpha(0.1, 0.2, 1.0, 2)
    assert c1 > c0


def test_c1_increasing_check_regime_error():
    with pytest.raises(RegimeError):
        coeffs.c1_increasing_check(ModelParams(dim=2, diff=0.4), [0.0, 0.1])


def test_c1_sq_definition_frozen():
    # chi at alpha = 0.1, d = 2, a = 1, T = 0.2 evaluated by hand: (1 - 0.2 - 0.8 * 0.7) / 0.5 = 0.48
    assert coeffs.chi(0.1, 0.2, 1.0, 2) == pytest.approx(0.48, rel=1e-14)
    assert coeffs.c1_alpha(0.1, 0.2, 1.0, 2) == pytest.approx(math.sqrt(0.48), rel=1e-14)


def test_with_alpha_couples_eps():
    p = ModelParams(a=1.0, tau=1e-2, sigma=1.0, diff=0.2, dim=2).with_alpha(0.1)
    c = derive(p)
    assert c.alpha == pytest.approx(0.1, rel=1e-12)
    assert c.eps == pytest.approx(c.kappa_alpha * p.tau, rel=1e-12)


def test_relaxation_speed_closed_form_vs_ode():
    c_sq, rate, y0 = 0.2, 3.0, 0.5
    t = np.linspace(0, 2, 9)
    sol = integrate.solve_ivp(lambda _, y: -2 * rate * y * (y - c_sq), (0, 2), [y0], t_eval=t,
                              method="DOP853", rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(coeffs.relaxation_speed_sq(y0, t, c_sq, rate), sol.y[0], rtol=1e-9)
    # negative target: decays to zero
    assert coeffs.relaxation_speed_sq(0.5, 50.0, -0.3, 1.0) < 1e-12
    assert coeffs.relaxation_speed_sq(0.0, 1.0, 0.2, 1.0) == 0.0


# ---------------------------------------------------------------------------
# properties

dims = st.sampled_from([1, 2, 3])


@st.composite
def cold_params(draw):
    d = draw(dims)
    a = draw(st.floats(0.3, 3.0))
    frac = draw(st.floats(0.05, 0.95))
    sigma = draw(st.floats(0.2, 5.0))
    tau = draw(st.floats(0.1, 10.0))
    temp = frac * a * a / (d + 2)
    return ModelParams(a=a, tau=tau, sigma=sigma, diff=temp / sigma, dim=d)


@settings(max_examples=60, deadline=None)
@given(cold_params())
def test_prop_temp_identities(p):
    c = derive(p)
    assert c.temp == p.sigma * p.diff
    assert c.temp_crit == p.a ** 2 / (p.dim + 2)
    assert c.comfort_speed == pytest.approx(math.sqrt(p.a ** 2 - (p.dim + 2) * c.temp), rel=1e-14)


@settings(max_examples=60, deadline=None)
@given(cold_params(), st.floats(1e-4, 0.1))
@example(ModelParams(a=1.0, diff=0.95 / 3, dim=1), 0.05)
def test_prop_chi_eps_gap(p, target_alpha):
    eps = target_alpha / derive(p).lam
    c = derive(p.replace(eps=eps))
    gap = abs(c.chi_eps * p.a ** 2 - c.comfort_speed ** 2) / c.comfort_speed ** 2
    assert gap <= 10 * eps * c.lam


@settings(max_examples=60, deadline=None)
@given(dims, st.floats(0.3, 3.0))
def test_prop_temp_crit_alpha_range(d, a):
    al = np.linspace(0, coeffs.alpha_max(d), 101)
    tca = coeffs.temp_crit_alpha(al, a, d)
    tc = coeffs.temp_crit(a, d)
    assert np.all(np.diff(tca) > 0)
    assert tca[0] == pytest.approx(tc, rel=1e-14)
    assert tca[-1] == pytest.approx(1.5 * tc, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(cold_params(), st.floats(0.0, 1.0))
def test_prop_c2_over_c1(p, frac):
    top = coeffs.alpha_max(p.dim)
    al = frac * top * 0.999
    c = derive(p, alpha=al)
    assert c.c2_alpha == (1 - 1.5 * al) * c.c1_alpha


@settings(max_examples=40, deadline=None)
@given(cold_params(), st.floats(0.1, 10.0), st.floats(0.0, 0.05))
def test_prop_dimensionless_scaling(p, s, eps):
    # velocities scale by s and times by 1/s: a -> s a, D -> s^3 D, sigma -> sigma / s, tau -> tau / s
    base = derive(p.replace(eps=eps))
    q = p.replace(a=s * p.a, diff=s ** 3 * p.diff, sigma=p.sigma / s, tau=p.tau / s, eps=eps)
    scaled = derive(q)
    for name in ("lam", "chi_eps", "xi_alpha", "alpha"):
        assert getattr(scaled, name) == pytest.approx(getattr(base, name), rel=1e-10, abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(cold_params(), st.floats(1e-4, 0.1))
def test_prop_chi_eps_gap_exact(p, target_alpha):
    # chi^eps - chi^0 = alpha (3 - 2 theta) / xi_alpha with theta = (d+2) T / a^2
    c = derive(p.replace(eps=target_alpha / derive(p).lam))
    theta = (p.dim + 2) * p.temp / p.a ** 2
    expected = c.alpha * (3 - 2 * theta) / c.xi_alpha
    assert c.chi_eps - (1 - theta) == pytest.approx(expected, rel=1e-9, abs=1e-14)
