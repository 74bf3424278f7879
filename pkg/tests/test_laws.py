import json
import math

import numpy as np
import pytest

from qlaw import (Law, LawOfMotion, ODEControls, PotentialSpec, ReducedAction1D, build_family,
                  detect_nodes, dt_dx_floyd, integrate_trajectory, pair_free, pair_numeric,
                  velocity_bohm_form, velocity_energy_law)
from qlaw.laws import (TrajectoryFamily, UnsupportedFamilyError, characteristic_scales,
                       energy_law_residual, floyd_time, node_events, node_report,
                       write_trajectory_csv)


@pytest.fixture(scope="module")
def linear_action():
    pot = PotentialSpec.linear(1.0, 0.0, domain=(-10.0, 4.0))
    return ReducedAction1D(pair_numeric(pot, 1.0, h=3e-3), 1.0, 0.0)


def test_characteristic_scales():
    act = ReducedAction1D(pair_free(2.0, m=0.5, hbar=1.5), 1.0)
    length, speed, tchar = characteristic_scales(act)
    assert speed == pytest.approx(math.sqrt(8.0))
    assert length == pytest.approx(1.5 / math.sqrt(2.0))
    assert tchar == pytest.approx(1.5 / 4.0)


def test_free_energy_law_is_uniform_motion():
    act = ReducedAction1D(pair_free(0.5), 1.0, 0.0)
    traj = integrate_trajectory(LawOfMotion(Law.ENERGY, act), 0.3, (0.0, 10.0))
    assert traj.termination == "span-complete"
    np.testing.assert_allclose(traj.x, 0.3 + traj.t, atol=1e-10)
    assert np.max(np.abs(energy_law_residual(traj, act))) <= 1e-12


def test_energy_law_and_bohm_form_relation():
    # the two laws agree only where Q = 0; for a != 1 they differ
    act = ReducedAction1D(pair_free(0.5), 2.0, 0.3)
    x = np.linspace(-3, 3, 61)
    ve, vb = velocity_energy_law(act, x), velocity_bohm_form(act, x)
    np.testing.assert_allclose(ve * vb, 2 * 0.5 / act.mass, rtol=1e-13)
    assert np.max(np.abs(ve - vb)) > 0.1


def test_stall_metadata(linear_action):
    _, _, tchar = characteristic_scales(linear_action)
    traj = integrate_trajectory(LawOfMotion(Law.ENERGY, linear_action), -2.0, (0.0, 1e4 * tchar))
    assert traj.stalled
    meta = traj.metadata()
    assert meta["termination"] == "stalled"
    assert meta["stall_location"] == pytest.approx(1.0, abs=1e-9)
    assert meta["law"] == "EnergyLaw"


def test_start_on_turning_point_is_immediate_stall(linear_action):
    traj = integrate_trajectory(LawOfMotion(Law.ENERGY, linear_action), 1.0, (0.0, 10.0))
    assert traj.stalled and traj.t.size == 1
    assert traj.stall_location == 1.0


def test_bohm_form_not_stalled(linear_action):
    traj = integrate_trajectory(LawOfMotion(Law.BOHM, linear_action), -2.0, (0.0, 20.0))
    assert not traj.stalled
    assert traj.x.max() > 1.5


def test_floyd_time_matches_uniform_motion():
    act = ReducedAction1D(pair_free(0.5), 1.0, 0.0)
    xs = np.array([-2.0, 0.5, 1.5, 3.0])
    np.testing.assert_allclose(floyd_time(act, 0.0, xs), xs, rtol=1e-6)


def test_floyd_law_velocity_tag():
    act = ReducedAction1D(pair_free(0.5), 1.0, 0.0)
    law = LawOfMotion("FloydJacobi", act)
    assert law.tag is Law.FLOYD
    assert law.velocity(0.7) == pytest.approx(1.0, rel=1e-6)


def test_floyd_for_general_constants_uses_fixed_ab():
    # with (a, b) held fixed in E, dt/dx = dP/dE differs from 1/v for a != 1
    act = ReducedAction1D(pair_free(0.5), 2.0, 0.3)
    x = 0.4
    dtdx = dt_dx_floyd(act, x)
    assert np.isfinite(dtdx)
    assert abs(dtdx - 1.0 / velocity_energy_law(act, x)) > 1e-3


def test_floyd_needs_energy_family(linear_action):
    with pytest.raises(UnsupportedFamilyError):
        dt_dx_floyd(linear_action, 0.0)


# --- families and nodes ------------------------------------------------------

@pytest.fixture(scope="module")
def a_family():
    pair = pair_free(0.5)
    return build_family(lambda a, b: ReducedAction1D(pair, a, b), [(4, 0), (1, 0), (2, 0)],
                        0.0, (0.0, 20.0))


def test_family_members_sorted(a_family):
    assert a_family.constants == [(1.0, 0.0), (2.0, 0.0), (4.0, 0.0)]
    assert [m.a for m in a_family.members] == [1.0, 2.0, 4.0]


def test_a_family_nodes_at_quarter_wavelength(a_family):
    # S0 = hbar arctan(a tan kx) passes n pi hbar / 2 at kx = n pi / 2 for every a,
    # and t = (S0(x) - S0(0)) / 2E, so all members meet there at t = n pi hbar / 4E
    k, E = 1.0, 0.5
    events = node_events(a_family)
    assert len(events) >= 12
    for n, ev in enumerate(events):
        assert ev.x == pytest.approx(n * math.pi / (2 * k), abs=1e-5)
        assert ev.t == pytest.approx(n * math.pi / (4 * E), abs=1e-5)
    rep = node_report(a_family)
    assert rep["spacing_over_wavelength"] == pytest.approx(0.25, rel=1e-5)
    assert rep["de_broglie_wavelength"] == pytest.approx(2 * math.pi)


def test_b_family_nodes_at_half_wavelength():
    # with a = 1, S0(n pi / k) - S0(0) = n pi hbar whatever b is
    pair = pair_free(0.5)
    fam = build_family(lambda a, b: ReducedAction1D(pair, a, b),
                       [(1, -0.5), (1, 0.0), (1, 0.5)], 0.0, (0.0, 20.0))
    xs = detect_nodes(fam)
    assert len(xs) >= 6
    np.testing.assert_allclose(xs, np.arange(len(xs)) * math.pi, atol=1e-5)


def test_degenerate_family_every_point_is_a_node():
    pair = pair_free(0.5)
    act = ReducedAction1D(pair, 1.0, 0.0)
    traj = integrate_trajectory(LawOfMotion(Law.ENERGY, act), 0.0, (0.0, 5.0),
                                ODEControls(rtol=1e-11, atol=1e-12), detect_stall=False)
    fam = TrajectoryFamily([traj, traj, traj], [(1, 0)] * 3, 0.0, 0.5, 1.0, 1.0)
    events = node_events(fam, samples=200)
    assert len(events) == 200
    assert all(ev.spread == 0.0 for ev in events)


def test_family_that_never_crosses_x0(linear_action):
    fam = build_family(lambda a, b: ReducedAction1D(linear_action.pair, a, b),
                       [(1, 0), (2, 0), (3, 0)], 3.0, (0.0, 1.0))
    assert detect_nodes(fam) == []


def test_node_detection_needs_three_members(a_family):
    fam = TrajectoryFamily(a_family.members[:2], a_family.constants[:2], 0.0, 0.5, 1.0, 1.0)
    with pytest.raises(ValueError):
        node_events(fam)


def test_family_rejects_mixed_energies():
    t1 = integrate_trajectory(LawOfMotion(Law.ENERGY, ReducedAction1D(pair_free(0.5), 1.0)),
                              0.0, (0, 1))
    t2 = integrate_trajectory(LawOfMotion(Law.ENERGY, ReducedAction1D(pair_free(0.6), 1.0)),
                              0.0, (0, 1))
    with pytest.raises(ValueError):
        TrajectoryFamily([t1, t2, t1], [(1, 0)] * 3, 0.0, 0.5, 1.0, 1.0)


# --- CSV ---------------------------------------------------------------------

def test_trajectory_csv_and_sidecar(tmp_path, linear_action):
    traj = integrate_trajectory(LawOfMotion(Law.ENERGY, linear_action), -2.0, (0.0, 5.0),
                                ODEControls(t_eval=np.linspace(0, 5, 11)))
    path = write_trajectory_csv(traj, tmp_path / "traj.csv", "scenario=abc seed=3", {"seed": 3})
    raw = path.read_bytes()
    assert b"\r\n" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "# scenario=abc seed=3"
    assert lines[1] == "t,x,v,law,a,b,E"
    assert len(lines) == 2 + traj.t.size
    first = lines[2].split(",")
    assert float(first[1]) == -2.0 and first[3] == "EnergyLaw"
    meta = json.loads((tmp_path / "traj.csv.json").read_text())
    assert meta["seed"] == 3 and meta["termination"] == traj.termination
