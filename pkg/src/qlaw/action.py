"""Reduced action S0 = hbar*arctan(a phi1/phi2 + b) + hbar*lambda in one dimension.

Derivatives of S0 are closed forms in the pair's own (phi, phi', phi'').
Writing t1 = a phi1 + b phi2, t2 = phi2 and D = t1^2 + t2^2:

    S0'   = hbar (t1' t2 - t1 t2') / D          (= hbar a W / D)
    S0''  = -S0' D' / D
    S0''' = S0' (2 D'^2 / D^2 - D'' / D)

The last two use W' = 0, which holds for any solution pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .numerics import DomainError, QuadratureSpec, fd_derivative, integrate
from .report import ResidualReport
from .schrodinger import SolutionPair

#: minimum E - V, relative to |E|, accepted by the quantum-canceling map
TURNING_POINT_GUARD = 1e-9

_UNWIND_QUAD = QuadratureSpec(atol=1e-3, rtol=1e-3, max_subdivisions=2000)


class TurningPointError(DomainError):
    """Coordinate map requested on a segment touching E = V."""


@dataclass(frozen=True)
class ReducedAction1D:
    pair: SolutionPair
    a: float
    b: float = 0.0
    lam: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.a) or self.a == 0:
            raise ValueError("reduced action needs a finite a != 0")
        if not (math.isfinite(self.b) and math.isfinite(self.lam)):
            raise ValueError("b and lambda must be finite")

    @property
    def energy(self) -> float:
        return self.pair.energy

    @property
    def mass(self) -> float:
        return self.pair.mass

    @property
    def hbar(self) -> float:
        return self.pair.hbar

    def potential(self, x):
        return self.pair.potential(x)

    def with_pair(self, pair: SolutionPair) -> "ReducedAction1D":
        return ReducedAction1D(pair, self.a, self.b, self.lam)


@dataclass(frozen=True)
class WaveFormConstants:
    """alpha, beta of phi = R[alpha e^{iS0/hbar} + beta e^{-iS0/hbar}]; R = amplitude*sqrt(D)."""
    alpha: complex
    beta: complex
    amplitude: float = 1.0

    def __post_init__(self):
        if self.alpha == 0 and self.beta == 0:
            raise ValueError("alpha and beta cannot both vanish")


@dataclass(frozen=True)
class CoordinateMap:
    """x -> x-hat with dx-hat/dx = S0' / sqrt(2m(E - V))."""
    action: ReducedAction1D
    x_ref: float
    domain: tuple
    xhat: Callable
    dxhat_dx: Callable


def _recombined(action: ReducedAction1D, x):
    p1, p2, d1, d2, dd1, dd2 = action.pair.values(x)
    a, b = action.a, action.b
    return (a * p1 + b * p2, p2, a * d1 + b * d2, d2, a * dd1 + b * dd2, dd2)


def _denominator_terms(action, x):
    t1, t2, dt1, dt2, ddt1, ddt2 = _recombined(action, x)
    D = t1 * t1 + t2 * t2
    dD = 2 * (t1 * dt1 + t2 * dt2)
    ddD = 2 * (dt1 * dt1 + dt2 * dt2 + t1 * ddt1 + t2 * ddt2)
    wr = dt1 * t2 - t1 * dt2
    return D, dD, ddD, wr


def _principal_angle(action, x):
    t1, t2, *_ = _recombined(action, x)
    with np.errstate(divide="ignore", invalid="ignore"):
        ang = np.arctan(t1 / t2)
    return np.where(t2 == 0, np.sign(t1) * (np.pi / 2), ang)


def amplitude_squared(action: ReducedAction1D, x):
    """R^2 = (a phi1 + b phi2)^2 + phi2^2 (unit amplitude constant)."""
    return _denominator_terms(action, x)[0]


def ds0_dx(action: ReducedAction1D, x):
    D, _, _, wr = _denominator_terms(action, x)
    return action.hbar * wr / D


def d2s0_dx2(action: ReducedAction1D, x):
    D, dD, _, wr = _denominator_terms(action, x)
    return -action.hbar * wr * dD / (D * D)


def d3s0_dx3(action: ReducedAction1D, x):
    D, dD, ddD, wr = _denominator_terms(action, x)
    s1 = action.hbar * wr / D
    return s1 * (2 * dD * dD / (D * D) - ddD / D)


def s0(action: ReducedAction1D, x):
    """Continuous reduced action.

    The arctan is principal at ``pair.anchor``; elsewhere whole multiples of
    pi*hbar are added so that S0 is continuous.  The multiple is fixed by the
    integral of S0' from the anchor, which only needs to be accurate to well
    under pi/2.
    """
    xs = action.pair.check_domain(x)
    flat = np.atleast_1d(xs).ravel()
    anchor = action.pair.anchor
    pts = np.unique(np.concatenate([[anchor], flat]))
    theta = _principal_angle(action, pts)
    i0 = int(np.searchsorted(pts, anchor))
    phase = np.empty_like(pts)
    phase[i0] = theta[i0]

    def rate(t):
        return ds0_dx(action, t) / action.hbar

    for i in range(i0 + 1, pts.size):
        est = integrate(rate, pts[i - 1], pts[i], _UNWIND_QUAD)
        step = theta[i] - theta[i - 1]
        phase[i] = phase[i - 1] + step + np.pi * np.round((est - step) / np.pi)
    for i in range(i0 - 1, -1, -1):
        est = integrate(rate, pts[i + 1], pts[i], _UNWIND_QUAD)
        step = theta[i] - theta[i + 1]
        phase[i] = phase[i + 1] + step + np.pi * np.round((est - step) / np.pi)

    out = action.hbar * (phase[np.searchsorted(pts, flat)] + action.lam)
    return out.reshape(np.shape(xs)) if np.ndim(xs) else float(out[0])


def quantum_potential(action: ReducedAction1D, x):
    """Q = (hbar^2/4m)[(3/2)(S0''/S0')^2 - S0'''/S0']."""
    s1 = ds0_dx(action, x)
    s2 = d2s0_dx2(action, x)
    s3 = d3s0_dx3(action, x)
    return action.hbar**2 / (4 * action.mass) * (1.5 * (s2 / s1) ** 2 - s3 / s1)


def _require_schrodinger(action):
    if action.pair.equation != "schrodinger":
        raise ValueError("this identity needs a Schrodinger pair")


def qhje_residual(action: ReducedAction1D, grid, tolerance: Optional[float] = None
                  ) -> ResidualReport:
    """Per-point (S0')^2/2m + V - E - Q; default tolerance 1e-6 |E|."""
    _require_schrodinger(action)
    x = np.asarray(grid, dtype=float)
    E, m = action.energy, action.mass
    res = ds0_dx(action, x) ** 2 / (2 * m) + action.potential(x) - E - quantum_potential(action, x)
    tol = 1e-6 * abs(E) if tolerance is None else tolerance
    return ResidualReport("qhje", x, res, tol, {"a": action.a, "b": action.b, "E": E})


def continuity_residual_1d(action: ReducedAction1D, grid, tolerance: float = 1e-8
                           ) -> ResidualReport:
    """Relative deviation of R^2 S0' from hbar a W along the grid.

    In one dimension the continuity equation d/dx(R^2 S0') = 0 says this
    flux is constant; R^2 S0' is evaluated with the pointwise Wronskian.
    """
    x = np.asarray(grid, dtype=float)
    flux = amplitude_squared(action, x) * ds0_dx(action, x)
    ref = action.hbar * action.a * action.pair.wronskian
    return ResidualReport("continuity", x, flux / ref - 1.0, tolerance,
                          {"a": action.a, "b": action.b, "flux": ref})


def _check_allowed(action, lo, hi, n=2001):
    xs = np.linspace(lo, hi, n)
    margin = action.energy - np.asarray(action.potential(xs))
    floor = TURNING_POINT_GUARD * abs(action.energy)
    if np.any(margin < floor):
        bad = xs[np.argmax(margin < floor)]
        raise TurningPointError(
            f"E - V below {floor:.1e} at x={bad:.6g}; segment touches a turning point")


def xhat_map(action: ReducedAction1D, x_ref: float, domain: Optional[tuple] = None
             ) -> CoordinateMap:
    """Quantum-canceling coordinate x-hat(x) = int_{x_ref}^x S0'/sqrt(2m(E-V))."""
    _require_schrodinger(action)
    if domain is None:
        domain = action.pair.domain
    lo, hi = (float(v) for v in domain)
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError("xhat_map needs a finite segment")
    if not lo <= x_ref <= hi:
        raise DomainError("x_ref outside the segment")
    _check_allowed(action, lo, hi)
    m, E = action.mass, action.energy

    def dxhat_dx(x):
        x = np.asarray(x, dtype=float)
        if np.any(x < lo) or np.any(x > hi):
            raise DomainError("x outside the x-hat segment")
        return ds0_dx(action, x) / np.sqrt(2 * m * (E - np.asarray(action.potential(x))))

    def xhat(x):
        xs = np.asarray(x, dtype=float)
        vals = np.array([integrate(dxhat_dx, x_ref, xi) for xi in np.atleast_1d(xs).ravel()])
        return vals.reshape(np.shape(xs)) if np.ndim(xs) else float(vals[0])

    return CoordinateMap(action, float(x_ref), (lo, hi), xhat, dxhat_dx)


def classical_form_residual(cmap: CoordinateMap, grid, tolerance: Optional[float] = None
                            ) -> ResidualReport:
    """(1/2m)(dS0/dx-hat)^2 + V - E, with both derivatives by finite differences.

    dS0/dx-hat is the ratio of d(s0)/dx and d(x-hat)/dx, each taken from the
    continuous s0 and the quadrature-defined x-hat.
    """
    act = cmap.action
    x = np.asarray(grid, dtype=float)
    lo, hi = cmap.domain
    h = 1e-3 * (hi - lo)
    if np.any(x - 2 * h < lo) or np.any(x + 2 * h > hi):
        raise DomainError("grid too close to the segment ends for central stencils")
    ds = fd_derivative(lambda t: s0(act, t), x, 1, h)
    dxh = fd_derivative(cmap.xhat, x, 1, h)
    res = (ds / dxh) ** 2 / (2 * act.mass) + act.potential(x) - act.energy
    tol = 1e-6 * abs(act.energy) if tolerance is None else tolerance
    return ResidualReport("classical-form-xhat", x, res, tol,
                          {"a": act.a, "b": act.b, "x_ref": cmap.x_ref})


def reconstruct_wavefunction(action: ReducedAction1D, constants: WaveFormConstants, x):
    """phi = R [alpha exp(i S0/hbar) + beta exp(-i S0/hbar)]."""
    phase = s0(action, x) / action.hbar
    R = constants.amplitude * np.sqrt(amplitude_squared(action, x))
    return R * (constants.alpha * np.exp(1j * phase) + constants.beta * np.exp(-1j * phase))
