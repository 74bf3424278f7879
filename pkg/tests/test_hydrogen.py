import json
import math
from fractions import Fraction

import numpy as np
import pytest

from qlaw.hydrogen import (ATOMIC_UNITS, DegenerateConstantsError, RadialPair, ReducedAction2D,
                           alternative_ground_bracket, bohm_form_2d, energy_law_2d_radial,
                           energy_law_2d_residual, grad_s0_2d, ground_state_ds0_dr,
                           ground_state_r2_ei, integrate_bohm_2d, level, radial_dr1, radial_r1,
                           radial_residual, refit_constants, s0_2d, turning_radius)
from qlaw.numerics import DomainError, ODEControls, fd_derivative, integrate

from oracles import R2_TABLE

RHO = np.linspace(0.2, 8.0, 40)


@pytest.fixture(scope="module")
def pairs():
    return {key: RadialPair(level(*key)) for key in [(0, 0), (1, 0), (1, 1), (2, 0), (2, 1)]}


# --- spectrum and R1 ---------------------------------------------------------

def test_spectrum_is_exact():
    for n in range(6):
        lv = level(n)
        assert lv.alpha_exact == Fraction(2, 2 * n + 1)
        assert lv.energy_exact == Fraction(-2, (2 * n + 1) ** 2)
    assert level(0).energy == -4 * level(0).e_i


def test_level_validation():
    with pytest.raises(ValueError):
        level(1, 2)
    with pytest.raises(ValueError):
        level(-1)


def test_r1_known_value():
    # n = 1, l = 1: R1 = rho e^{-2 rho / 3}
    assert float(radial_r1(level(1, 1), 1.0)) == pytest.approx(0.51341711903259202687, rel=1e-15)
    assert float(radial_r1(level(1, -1), 1.0)) == float(radial_r1(level(1, 1), 1.0))


@pytest.mark.parametrize("key", [(0, 0), (1, 0), (1, 1), (2, 0), (2, 1), (3, 2)])
def test_r1_solves_radial_equation(key):
    lv = level(*key)
    res = radial_residual(lv, lambda p: radial_r1(lv, p), lambda p: radial_dr1(lv, p), RHO)
    assert np.max(np.abs(res)) <= 1e-8


def test_dr1_matches_finite_difference():
    lv = level(2, 1)
    np.testing.assert_allclose(radial_dr1(lv, RHO), fd_derivative(lambda p: radial_r1(lv, p), RHO),
                               atol=1e-9)


# --- R2 ----------------------------------------------------------------------

@pytest.mark.parametrize("key", sorted(R2_TABLE))
def test_r2_matches_frozen_oracle(pairs, key):
    n, l, rho = key
    assert pairs[(n, l)].r2(rho) == pytest.approx(R2_TABLE[key], rel=1e-9)


def test_ground_state_closed_form_matches_quadrature(pairs):
    quad_pair = RadialPair(level(0), closed_form=False)
    for rho in (0.05, 0.3, 1.0, 4.0):
        assert quad_pair.r2(rho) == pytest.approx(pairs[(0, 0)].r2(rho), rel=1e-12)
        assert ground_state_r2_ei(rho) == pytest.approx(pairs[(0, 0)].r2(rho), rel=1e-14)


@pytest.mark.parametrize("key", [(1, 0), (2, 0), (2, 1)])
def test_r2_at_laguerre_roots(pairs, key):
    # where R1 = 0 the Wronskian 1/rho gives R2 = -1 / (c R1'(c))
    p = pairs[key]
    lv = p.level
    assert len(p.roots) == lv.degree
    for c in p.roots:
        assert p.r2(c) == pytest.approx(-1.0 / (c * float(radial_dr1(lv, c))), rel=1e-8)


@pytest.mark.parametrize("key", [(0, 0), (1, 0), (1, 1), (2, 0), (2, 1)])
def test_r2_solves_radial_equation(pairs, key):
    p = pairs[key]
    res = radial_residual(p.level, p.r2, p.dr2, RHO)
    assert np.max(np.abs(res)) <= 1e-6


def test_wronskian_is_one_over_rho(pairs):
    for p in pairs.values():
        np.testing.assert_allclose(p.wronskian(RHO) * RHO, 1.0, atol=1e-9)


def test_pair_domain():
    p = RadialPair(level(0))
    with pytest.raises(DomainError):
        p.r2(0.0)
    with pytest.raises(DomainError):
        RadialPair(level(0), rho0=-1.0)


# --- reduced action ----------------------------------------------------------

def _random_action(rng, key, rho0=0.1):
    c = rng.uniform(-1.5, 1.5, 6)
    return ReducedAction2D(RadialPair(level(*key), rho0), *c)


@pytest.mark.parametrize("key", [(0, 0), (1, 1), (2, 1)])
def test_gradient_matches_finite_differences(key):
    act = _random_action(np.random.default_rng(3), key)
    r = np.linspace(0.4, 5.0, 9)
    for th in (0.0, 0.7, 2.1):
        gr, gt = grad_s0_2d(act, r, th)
        # difference the branch-free path form along r
        fr = [fd_derivative(lambda z: np.tan(s0_2d(act, z, th) - act.lam), x, 1, 1e-5) for x in r]
        sec2 = 1.0 + np.tan(s0_2d(act, r, th) - act.lam) ** 2
        np.testing.assert_allclose(gr, np.array(fr) / sec2, rtol=1e-6, atol=1e-8)
        ft = fd_derivative(lambda z: np.tan(s0_2d(act, r, z) - act.lam), th, 1, 1e-5)
        np.testing.assert_allclose(gt, ft / sec2, rtol=1e-6, atol=1e-8)


def test_ground_gradient_closed_form():
    act = ReducedAction2D(RadialPair(level(0)), nu3=0.7, mu1=1.2, mu3=-0.4)
    gr, gt = grad_s0_2d(act, RHO, 0.3)
    np.testing.assert_allclose(gr, ground_state_ds0_dr(act, RHO), rtol=1e-10)
    assert np.all(gt == 0)


def test_alternative_bracket_is_not_the_wronskian():
    r = np.array([0.3, 1.0, 2.0])
    alt = np.array([alternative_ground_bracket(x) for x in r])
    assert np.all(np.abs(alt * r - 1.0) > 0.1)


@pytest.mark.parametrize("key", [(0, 0), (1, 0), (1, 1), (2, 1)])
def test_refit_preserves_s0(key):
    act = _random_action(np.random.default_rng(11), key)
    new = refit_constants(act, 0.37)
    assert new.pair.rho0 == 0.37
    r = np.linspace(0.3, 4.0, 17)
    for th in (0.0, 0.9):
        d = s0_2d(new, r, th) - s0_2d(act, r, th)
        # equal up to the branch of the arctan
        wrapped = (d + math.pi / 2) % math.pi - math.pi / 2
        assert np.max(np.abs(wrapped)) <= 1e-8


def test_degenerate_constants():
    with pytest.raises(DegenerateConstantsError):
        ReducedAction2D(RadialPair(level(0)), mu1=0.0, mu3=0.0)
    act = ReducedAction2D(RadialPair(level(0)), nu3=1.0, mu1=1.0, mu3=1.0)
    assert act.kappa == 0
    with pytest.raises(DegenerateConstantsError):
        energy_law_2d_radial(act, 1.0, (0, 1))
    with pytest.raises(ValueError):
        ReducedAction2D(RadialPair(level(0)), nu3=math.nan)


# --- trajectories ------------------------------------------------------------

def test_turning_radius():
    assert turning_radius(level(0)) == 0.5
    assert turning_radius(level(1)) == pytest.approx(4.5)


@pytest.mark.parametrize("r_init", [0.2, 1.5])
def test_energy_law_stalls_at_turning_radius(r_init):
    act = ReducedAction2D(RadialPair(level(0)), nu3=1.0, mu1=1.0, mu3=0.0)
    assert act.kappa > 0
    traj = energy_law_2d_radial(act, r_init, (0.0, 1e5))
    assert traj.termination == "stalled"
    assert traj.stall_location == pytest.approx(0.5, abs=1e-6)
    assert not traj.theta_determined and np.all(np.isnan(traj.theta))
    res = energy_law_2d_residual(act, traj)
    assert np.max(np.abs(res)) <= 1e-6 * abs(level(0).energy)


def test_energy_law_repelling_constants_escape():
    act = ReducedAction2D(RadialPair(level(0)), nu3=-1.0, mu1=1.0, mu3=0.0)
    assert act.kappa < 0
    traj = energy_law_2d_radial(act, 0.6, (0.0, 50.0))
    assert traj.termination == "singular-step"
    assert traj.r[-1] > 0.6


def test_energy_law_start_on_turning_radius():
    act = ReducedAction2D(RadialPair(level(0)), nu3=1.0, mu1=1.0)
    traj = energy_law_2d_radial(act, 0.5, (0.0, 1.0))
    assert traj.termination == "stalled" and traj.t.size == 1


def test_energy_law_excited_state_not_provided():
    act = ReducedAction2D(RadialPair(level(1)), nu3=1.0, mu1=1.0)
    with pytest.raises(NotImplementedError):
        energy_law_2d_radial(act, 1.0, (0, 1))


def test_bohm_form_ground_state_has_no_angular_motion():
    act = ReducedAction2D(RadialPair(level(0)), nu3=0.8, mu1=1.1, mu3=0.2)
    rd, td = bohm_form_2d(act, 1.2, 0.4)
    assert td == 0.0 and rd != 0.0
    traj = integrate_bohm_2d(act, 1.2, 0.4, (0.0, 2.0), ODEControls(rtol=1e-10, atol=1e-12))
    assert np.all(traj.theta == 0.4)
    assert traj.theta_determined


def test_trajectory2d_csv(tmp_path):
    act = ReducedAction2D(RadialPair(level(0)), nu3=1.0, mu1=1.0)
    traj = energy_law_2d_radial(act, 1.5, (0.0, 1.0), ODEControls(method="Radau", atol=1e-12,
                                                                 t_eval=[0.5]))
    path = traj.write_csv(tmp_path / "h.csv", "scenario=x seed=1", {"seed": 1})
    lines = path.read_text().splitlines()
    assert lines[0] == "# scenario=x seed=1"
    assert lines[1] == "t,r,theta,r_dot,theta_dot,law"
    assert lines[2].split(",")[2] == "nan"
    meta = json.loads((tmp_path / "h.csv.json").read_text())
    assert meta["theta_determined"] is False and meta["seed"] == 1


def test_atomic_units():
    au = ATOMIC_UNITS
    assert au.length == pytest.approx(5.29177210903e-11, rel=1e-9)
    assert au.energy == pytest.approx(4.3597447222071e-18, rel=1e-9)
    assert au.velocity == pytest.approx(2.18769126364e6, rel=1e-9)
    assert au.action == pytest.approx(au.energy * au.time, rel=1e-9)


def test_integral_matches_direct_quadrature():
    p = RadialPair(level(1, 1))
    lv = p.level
    f = lambda t: 1.0 / (t * radial_r1(lv, t) ** 2)
    assert p.integral(2.0) == pytest.approx(integrate(f, 0.1, 2.0), rel=1e-10)
