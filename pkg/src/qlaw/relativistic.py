"""Relativistic (spinless) extension in one dimension.

Stationary Klein-Gordon equation, written as phi'' = f phi with

    f(x) = (m^2 c^4 - [E - V]^2) / (hbar^2 c^2),     E includes the rest energy.

With A(x) = [E - V]^2 - m^2 c^4 (positive where motion is allowed):

    proper-time law   S0' dx/dtau = A / (m c^2)
    lab-time law      S0' dx/dt   = A / (E - V)
    canceling factor  (dxhat/dx)^2 = c^2 S0'^2 / A
    time dilation     (dtau/dt)^2 = (A - xdot^2 S0'^2) / A
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .action import ReducedAction1D, _denominator_terms, continuity_residual_1d, ds0_dx
from .laws import Trajectory, velocity_energy_law
from .numerics import DomainError, ODEControls, ode_solve
from .report import ResidualReport
from .schrodinger import PotentialSpec, SolutionPair, _trig_pair, numerov_pair, pair_free

THRESHOLD_GUARD = 1e-9


class ThresholdError(DomainError):
    """[E - V]^2 - m^2 c^4 is too close to zero (or negative) for the laws of motion."""


def kg_curvature(V: PotentialSpec, E: float, m: float, c: float, hbar: float):
    def f(x):
        ev = E - np.asarray(V(x), dtype=float)
        return (m * m * c**4 - ev * ev) / (hbar * hbar * c * c)
    return f


def kg_pair_free(E: float, m: float = 1.0, c: float = 1.0, hbar: float = 1.0) -> SolutionPair:
    """sin kx, cos kx with hbar^2 k^2 = (E^2 - m^2 c^4)/c^2; W = k."""
    gap = E * E - (m * c * c) ** 2
    if not gap > 0:
        raise ValueError("kg_pair_free needs E^2 > m^2 c^4")
    k = math.sqrt(gap) / (hbar * c)
    return _trig_pair(k, E, m, hbar, PotentialSpec.free(),
                      family=lambda e: kg_pair_free(e, m, c, hbar), equation="klein-gordon")


def kg_pair_numeric(V: PotentialSpec, E: float, x0: float, x_end: float, h: float = 2e-3,
                    m: float = 1.0, c: float = 1.0, hbar: float = 1.0) -> SolutionPair:
    """Numerov pair of the stationary Klein-Gordon equation seeded at ``x0``."""
    return numerov_pair(kg_curvature(V, E, m, c, hbar), x0, x_end, h, energy=E, mass=m,
                        hbar=hbar, potential=V, equation="klein-gordon")


@dataclass(frozen=True)
class RelSetup:
    """Klein-Gordon reduced action: S0 = hbar arctan(a phi1/phi2 + b) + hbar lam.

    ``amplitude`` is the constant k of R = k sqrt(D); it drops out of every
    identity but must be positive.
    """
    action: ReducedAction1D
    c: float = 1.0
    amplitude: float = 1.0

    def __post_init__(self):
        if self.action.pair.equation != "klein-gordon":
            raise ValueError("RelSetup needs a Klein-Gordon pair")
        if not (self.c > 0 and self.amplitude > 0):
            raise ValueError("c and the amplitude constant must be positive")

    @classmethod
    def free(cls, E, m=1.0, c=1.0, hbar=1.0, a=1.0, b=0.0, lam=0.0, amplitude=1.0):
        return cls(ReducedAction1D(kg_pair_free(E, m, c, hbar), a, b, lam), c, amplitude)

    @property
    def energy(self) -> float:
        return self.action.energy

    @property
    def mass(self) -> float:
        return self.action.mass

    @property
    def hbar(self) -> float:
        return self.action.hbar

    @property
    def rest_energy(self) -> float:
        return self.mass * self.c**2

    def kinetic_gap(self, x):
        """A(x) = [E - V]^2 - m^2 c^4."""
        ev = self.energy - np.asarray(self.action.potential(x), dtype=float)
        return ev * ev - self.rest_energy**2

    def _allowed_gap(self, x):
        A = self.kinetic_gap(x)
        floor = THRESHOLD_GUARD * self.rest_energy**2
        if np.any(A < floor):
            bad = np.atleast_1d(np.asarray(x, float))[np.argmax(np.atleast_1d(A) < floor)]
            raise ThresholdError(f"[E-V]^2 - m^2c^4 below {floor:.1e} at x={bad:.6g}")
        return A


def _r_ratio(setup: RelSetup, x):
    """R''/R for R = k sqrt(D): D''/(2D) - D'^2/(4D^2)."""
    D, dD, ddD, _ = _denominator_terms(setup.action, x)
    return ddD / (2 * D) - dD * dD / (4 * D * D)


def rel_qhje_residual(setup: RelSetup, grid, tolerance: Optional[float] = None) -> ResidualReport:
    """S0'^2/2m - (hbar^2/2m) R''/R + (m^2 c^4 - [E - V]^2)/(2 m c^2) per point."""
    x = np.asarray(grid, dtype=float)
    m, hbar = setup.mass, setup.hbar
    s1 = ds0_dx(setup.action, x)
    res = s1 * s1 / (2 * m) - hbar**2 / (2 * m) * _r_ratio(setup, x) \
        - setup.kinetic_gap(x) / (2 * m * setup.c**2)
    tol = 1e-8 * setup.rest_energy if tolerance is None else tolerance
    return ResidualReport("rel-qhje", x, res, tol,
                          {"a": setup.action.a, "b": setup.action.b, "E": setup.energy, "c": setup.c})


def rel_continuity_residual(setup: RelSetup, grid, tolerance: float = 1e-8) -> ResidualReport:
    """Relative variation of R^2 S0' (the amplitude constant squared cancels)."""
    rep = continuity_residual_1d(setup.action, grid, tolerance)
    return ResidualReport("rel-continuity", rep.grid, rep.residuals, tolerance, rep.meta)


def rel_law_proper(setup: RelSetup, x):
    """dx/dtau = ([E - V]^2 - m^2 c^4) / (m c^2 S0')."""
    A = setup._allowed_gap(x)
    return A / (setup.mass * setup.c**2 * ds0_dx(setup.action, x))


def rel_law_lab(setup: RelSetup, x):
    """dx/dt = ([E - V]^2 - m^2 c^4) / ((E - V) S0')."""
    A = setup._allowed_gap(x)
    ev = setup.energy - np.asarray(setup.action.potential(x), dtype=float)
    return A / (ev * ds0_dx(setup.action, x))


def xhat_factor_rel(setup: RelSetup, x):
    """(dxhat/dx)^2 = c^2 S0'^2 / ([E - V]^2 - m^2 c^4)."""
    A = setup._allowed_gap(x)
    return setup.c**2 * ds0_dx(setup.action, x) ** 2 / A


def dtau_dt(setup: RelSetup, x, xdot):
    """sqrt((A - xdot^2 S0'^2) / A), the proper-time rate at lab velocity ``xdot``."""
    A = setup._allowed_gap(x)
    s1 = ds0_dx(setup.action, x)
    ratio = (A - np.asarray(xdot) ** 2 * s1 * s1) / A
    if np.any(ratio < 0):
        raise DomainError("superluminal lab velocity in the canceling frame")
    return np.sqrt(ratio)


def chain_lab_velocity(setup: RelSetup, x):
    """dx/dt from the proper-time law and the canceling-frame line element.

    dt/dtau = sqrt(1 + F (dx/dtau)^2 / c^2) with F the canceling factor, so the
    lab velocity follows without using the lab-time law itself.
    """
    u = rel_law_proper(setup, x)
    F = xhat_factor_rel(setup, x)
    return u / np.sqrt(1.0 + F * u * u / setup.c**2)


def chain_consistency(setup: RelSetup, x):
    """(lab law, proper law times dtau/dt at that velocity, chain velocity)."""
    v_lab = rel_law_lab(setup, x)
    chained = rel_law_proper(setup, x) * dtau_dt(setup, x, v_lab)
    return v_lab, chained, chain_lab_velocity(setup, x)


def proper_law_residual_nd(grad_s0: Sequence, dx_dtau: Sequence, energy: float, potential: float,
                           m: float, c: float) -> float:
    """sum_k dS0/dx^k dx^k/dtau + (m^2 c^4 - [E - V]^2)/(m c^2) for a D-dimensional point."""
    contraction = float(np.dot(np.asarray(grad_s0, float), np.asarray(dx_dtau, float)))
    return contraction + ((m * c * c) ** 2 - (energy - potential) ** 2) / (m * c * c)


def rel_trajectory(setup: RelSetup, x0: float, t_span, controls: Optional[ODEControls] = None
                   ) -> Trajectory:
    """Lab-time trajectory with the proper time tau carried alongside x."""
    c = controls or ODEControls()
    c = replace(c, stall_speed=None, stall_components=[0])

    def rhs(t, y):
        v = float(rel_law_lab(setup, y[0]))
        return [v, float(dtau_dt(setup, y[0], v))]

    res = ode_solve(rhs, [x0, 0.0], t_span, c)
    xs, taus = res.y[:, 0], res.y[:, 1]
    vs = np.array([_safe_lab(setup, x) for x in xs])
    act = setup.action
    return Trajectory(res.t, xs, vs, res.termination, law="RelativisticLab", a=act.a, b=act.b,
                      energy=act.energy, message=res.message, nfev=res.nfev, n_steps=res.n_steps,
                      tau=taus, extra={"c": setup.c})


def _safe_lab(setup, x):
    try:
        return float(rel_law_lab(setup, x))
    except DomainError:
        return float("nan")


def proper_time_residual(setup: RelSetup, traj: Trajectory):
    """S0' dx/dtau + (m^2 c^4 - [E - V]^2)/(m c^2) along a lab trajectory.

    dx/dtau is rebuilt from the recorded samples as v / (dtau/dt).
    """
    x, v = traj.x, traj.v
    u = v / dtau_dt(setup, x, v)
    return ds0_dx(setup.action, x) * u - setup.kinetic_gap(x) / (setup.mass * setup.c**2)


@dataclass(frozen=True)
class LimitScan:
    c_values: np.ndarray
    deviations: np.ndarray
    slope: float


def nonrelativistic_limit_scan(e_nr: float, x: float, c_values: Sequence[float], m: float = 1.0,
                               hbar: float = 1.0, a: float = 1.0, b: float = 0.0,
                               workers: int = 4) -> LimitScan:
    """Free-particle gap |lab law - energy law| at E = m c^2 + e_nr for each c.

    The fitted log-log slope of the gap against c is the convergence order.
    """
    nr = ReducedAction1D(pair_free(e_nr, m, hbar), a, b)
    v_nr = float(velocity_energy_law(nr, x))

    def one(cv):
        setup = RelSetup.free(m * cv * cv + e_nr, m, cv, hbar, a, b)
        return abs(float(rel_law_lab(setup, x)) - v_nr)

    cs = np.asarray(c_values, dtype=float)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        devs = np.array(list(pool.map(one, cs)))
    slope = float(np.polyfit(np.log(cs), np.log(devs), 1)[0])
    return LimitScan(cs, devs, slope)


__all__ = [
    "RelSetup", "ThresholdError", "THRESHOLD_GUARD", "LimitScan",
    "kg_curvature", "kg_pair_free", "kg_pair_numeric",
    "rel_qhje_residual", "rel_continuity_residual", "rel_law_proper", "rel_law_lab",
    "xhat_factor_rel", "dtau_dt", "chain_lab_velocity", "chain_consistency",
    "proper_law_residual_nd", "rel_trajectory", "proper_time_residual",
    "nonrelativistic_limit_scan",
]
