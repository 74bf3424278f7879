import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import eval_genlaguerre

from qlaw.numerics import (DomainError, Grid1D, NonFiniteError, ODEControls, QuadratureError,
                           QuadratureSpec, expint_ei, fd_derivative, integrate, laguerre, ode_solve)

from oracles import EI_TABLE, laguerre_series


# --- laguerre ---------------------------------------------------------------

def test_laguerre_low_orders():
    x = np.linspace(0, 5, 11)
    assert np.all(laguerre(0, 3, x) == 1.0)
    np.testing.assert_allclose(laguerre(1, 2, x), 3 - x, rtol=0, atol=1e-15)
    np.testing.assert_allclose(laguerre(2, 0, x), 1 - 2 * x + x * x / 2, rtol=1e-14, atol=1e-14)


def test_laguerre_scalar_returns_float():
    assert isinstance(laguerre(3, 1, 0.7), float)


def test_laguerre_rejects_negative_indices():
    with pytest.raises(ValueError):
        laguerre(-1, 0, 1.0)
    with pytest.raises(ValueError):
        laguerre(2, -1, 1.0)


@settings(max_examples=200, deadline=None)
@given(s=st.integers(0, 10), k=st.integers(0, 6), x=st.floats(0.0, 30.0))
def test_laguerre_matches_exact_series_in_absolute_scale(s, k, x):
    ref = laguerre_series(s, k, x)
    # scale by the largest term of the series, which bounds rounding
    scale = max(math.comb(s + k, s - j) * x**j / math.factorial(j) for j in range(s + 1))
    assert abs(laguerre(s, k, x) - ref) <= 1e-13 * scale


@settings(max_examples=100, deadline=None)
@given(s=st.integers(1, 10), k=st.integers(0, 6), x=st.floats(0.0, 20.0))
def test_laguerre_derivative_identity(s, k, x):
    # d/dx L_s^k = -L_{s-1}^{k+1}
    d = fd_derivative(lambda t: laguerre(s, k, t), x, 1, 1e-3)
    scale = max(1.0, abs(laguerre(s - 1, k + 1, x)), abs(laguerre(s, k, x)))
    assert d == pytest.approx(-laguerre(s - 1, k + 1, x), abs=1e-8 * scale)


def test_laguerre_agrees_with_scipy():
    x = np.linspace(0, 20, 41)
    for s in range(8):
        for k in range(5):
            np.testing.assert_allclose(laguerre(s, k, x), eval_genlaguerre(s, k, x),
                                       rtol=1e-10, atol=1e-10)


# --- Ei ---------------------------------------------------------------------

@pytest.mark.parametrize("x", sorted(EI_TABLE))
def test_ei_frozen_values(x):
    assert expint_ei(x) == pytest.approx(EI_TABLE[x], rel=1e-13)


def test_ei_continuous_across_series_switch():
    from qlaw.numerics import EI_SERIES_CROSSOVER, _ei_asymptotic, _ei_series
    x = EI_SERIES_CROSSOVER
    assert _ei_series(x) == pytest.approx(_ei_asymptotic(x), rel=1e-14)


@pytest.mark.parametrize("bad", [0.0, -1.0, float("nan"), float("inf"), 1e-320])
def test_ei_domain(bad):
    with pytest.raises(DomainError):
        expint_ei(bad)


@settings(max_examples=100, deadline=None)
@given(x=st.floats(0.1, 60.0))
def test_ei_derivative_is_exp_over_x(x):
    d = fd_derivative(expint_ei, x, 1, 1e-3 * min(x, 1.0))
    assert d == pytest.approx(math.exp(x) / x, rel=1e-9)


# --- quadrature -------------------------------------------------------------

def test_integrate_against_quadpack():
    f = lambda t: np.exp(-t) * np.cos(3 * t) / (1 + t * t)
    ref, _ = quad(f, 0.0, 7.0, epsabs=1e-14, epsrel=1e-14)
    assert integrate(f, 0.0, 7.0) == pytest.approx(ref, rel=1e-10)


def test_integrate_scalar_only_function():
    def f(t):
        return math.sin(t)  # raises TypeError on arrays
    assert integrate(f, 0.0, math.pi) == pytest.approx(2.0, rel=1e-12)


def test_integrate_reversed_and_empty():
    f = lambda t: t**2
    assert integrate(f, 2.0, 0.0) == pytest.approx(-8 / 3, rel=1e-13)
    assert integrate(f, 1.0, 1.0) == 0.0


def test_fixed_panel_matches_adaptive():
    f = lambda t: np.exp(np.sin(t))
    spec = QuadratureSpec(method="fixed-panel", max_subdivisions=20)
    assert integrate(f, 0, 10, spec) == pytest.approx(integrate(f, 0, 10), rel=1e-12)


def test_integrate_reports_failure():
    spec = QuadratureSpec(atol=1e-14, rtol=1e-14, max_subdivisions=3)
    with pytest.raises(QuadratureError):
        integrate(lambda t: np.sqrt(np.abs(t - 0.3137)), 0.0, 1.0, spec)


def test_integrate_rejects_non_finite_samples():
    with pytest.raises(NonFiniteError):
        integrate(lambda t: 1.0 / (t - 0.5) if t != 0.5 else math.inf, 0.0, 1.0,
                  QuadratureSpec(method="fixed-panel", max_subdivisions=1))


def test_integrate_rejects_infinite_limits():
    with pytest.raises(DomainError):
        integrate(np.exp, -math.inf, 0.0)


def test_quadrature_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(method="simpson")
    with pytest.raises(ValueError):
        QuadratureSpec(atol=0.0)


# --- finite differences -----------------------------------------------------

@pytest.mark.parametrize("order,expected", [(1, math.cos(1.0)), (2, -math.sin(1.0)),
                                            (3, -math.cos(1.0))])
def test_fd_derivative_orders(order, expected):
    assert fd_derivative(np.sin, 1.0, order) == pytest.approx(expected, abs=1e-6)


def test_fd_derivative_vectorized():
    x = np.linspace(0, 3, 7)
    np.testing.assert_allclose(fd_derivative(np.exp, x), np.exp(x), rtol=1e-9)


def test_fd_derivative_validation():
    with pytest.raises(ValueError):
        fd_derivative(np.sin, 0.0, 4)
    with pytest.raises(ValueError):
        fd_derivative(np.sin, 0.0, 1, -1e-3)
    with pytest.raises(NonFiniteError):
        with np.errstate(invalid="ignore"):
            fd_derivative(lambda t: np.log(t), 0.0, 1, 1e-3)


# --- grid -------------------------------------------------------------------

def test_grid_validation():
    g = Grid1D.uniform(0, 1, 11)
    assert len(g) == 11
    np.testing.assert_allclose(g.spacing, 0.1)
    assert np.asarray(g).shape == (11,)
    with pytest.raises(ValueError):
        Grid1D(np.array([0, 1, 2]))
    with pytest.raises(ValueError):
        Grid1D(np.array([0, 1, 1, 2, 3]))


# --- ODE --------------------------------------------------------------------

def test_ode_harmonic_oscillator():
    res = ode_solve(lambda t, y: [y[1], -y[0]], [0.0, 1.0], (0.0, 10.0),
                    ODEControls(rtol=1e-11, atol=1e-12))
    assert res.termination == "span-complete"
    assert res.t[-1] == pytest.approx(10.0)
    np.testing.assert_allclose(res.y[:, 0], np.sin(res.t), atol=1e-9)


def test_ode_t_eval_samples_included():
    res = ode_solve(lambda t, y: [-y[0]], [1.0], (0.0, 2.0), ODEControls(t_eval=[0.5, 1.0, 1.5]))
    for te in (0.5, 1.0, 1.5):
        i = np.argmin(np.abs(res.t - te))
        assert res.t[i] == pytest.approx(te)
        assert res.y[i, 0] == pytest.approx(math.exp(-te), rel=1e-7)


@pytest.mark.parametrize("method", ["DOP853", "RK45", "Radau", "LSODA"])
def test_ode_methods(method):
    res = ode_solve(lambda t, y: [-2 * y[0]], [1.0], (0.0, 1.0),
                    ODEControls(method=method, rtol=1e-10, atol=1e-12))
    assert res.y[-1, 0] == pytest.approx(math.exp(-2), rel=1e-7)


def test_ode_unknown_method():
    with pytest.raises(ValueError):
        ode_solve(lambda t, y: [y[0]], [1.0], (0, 1), ODEControls(method="Euler"))


def test_ode_stall_detection():
    # y' = -(y - 1)^3 creeps toward 1 and never reaches it
    res = ode_solve(lambda t, y: [-(y[0] - 1) ** 3], [2.0], (0.0, 1e9),
                    ODEControls(stall_speed=1e-6, stall_time=10.0, method="Radau"))
    assert res.termination == "stalled"
    assert res.location[0] == pytest.approx(1.0, abs=0.02)


def test_ode_guard_and_domain_exit():
    res = ode_solve(lambda t, y: [1.0], [0.0], (0, 10), ODEControls(guard=lambda t, y: y[0] < 3))
    assert res.termination == "singular-step"

    def rhs(t, y):
        if y[0] > 2:
            raise DomainError("left")
        return [1.0]
    res = ode_solve(rhs, [0.0], (0, 10))
    assert res.termination == "domain-exit"


def test_ode_blowup_is_singular_step():
    res = ode_solve(lambda t, y: [y[0] ** 2], [1.0], (0.0, 2.0))
    assert res.termination == "singular-step"
    assert res.t[-1] < 1.0 + 1e-6


def test_ode_non_finite_initial_rhs():
    with pytest.raises(NonFiniteError):
        ode_solve(lambda t, y: [math.nan], [1.0], (0, 1))
