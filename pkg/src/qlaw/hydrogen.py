"""Two-dimensional hydrogen atom in polar coordinates (atomic units).

Units: hbar = m = e^2 = 1, so a0 = 1, E_I = 1/2, and rho = r.

Radial equation:  R'' + R'/rho + [2/rho - l^2/rho^2 - alpha^2] R = 0
Levels:           alpha = 1/(n + 1/2),  E_n = -E_I/(n + 1/2)^2
First solution:   R1 = rho^|l| exp(-alpha rho) L_{n-|l|}^{2|l|}(2 alpha rho)
Second solution:  R2 = R1 * I,  I(rho) = integral_{rho0}^{rho} dt / (t R1(t)^2)

When the integration path crosses a zero c of R1 the integral is taken as a
Hadamard finite part.  Writing h(t) = (t - c)^2 / (t R1^2), one has
h'(c) = 0 (from R1''(c) = -R1'(c)/c), so no logarithm appears and R2 is
the smooth continuation with R1 R2' - R1' R2 = 1/rho throughout.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import constants as sc
from scipy.special import roots_genlaguerre

from .numerics import (DomainError, ODEControls, QuadratureSpec, expint_ei, fd_derivative,
                       integrate, laguerre, ode_solve)

HBAR = 1.0
MASS = 1.0
E2 = 1.0
BOHR_RADIUS = 1.0
IONIZATION_ENERGY = 0.5
R_MIN = 1e-3 * BOHR_RADIUS
DEFAULT_RHO0 = 0.1
TABLE_MAX = 40.0
#: energy-law runs stop once |rdot| exceeds this many characteristic speeds
ESCAPE_SPEED_FACTOR = 1e10

_QUAD = QuadratureSpec(atol=1e-300, rtol=1e-12, max_subdivisions=500)


def _panel_integral(f, a: float, b: float, width: float) -> float:
    """Fixed-panel Gauss-Kronrod; smooth in the limits, unlike adaptive splitting."""
    n = int(min(4000, max(4, math.ceil(abs(b - a) / width))))
    spec = QuadratureSpec(method="fixed-panel", atol=1e-300, rtol=1e-10, max_subdivisions=n)
    return integrate(f, a, b, spec)


class DegenerateConstantsError(ValueError):
    """mu1*nu3 - mu3 = 0: the ground-state action is constant in r."""


@dataclass(frozen=True)
class Hydrogen2DLevel:
    n: int
    l: int

    def __post_init__(self):
        if self.n < 0 or int(self.n) != self.n or int(self.l) != self.l:
            raise ValueError("n must be a non-negative integer and l an integer")
        if abs(self.l) > self.n:
            raise ValueError(f"|l| <= n violated: n={self.n}, l={self.l}")

    @property
    def alpha_exact(self) -> Fraction:
        return Fraction(2, 2 * self.n + 1)

    @property
    def energy_exact(self) -> Fraction:
        return -Fraction(IONIZATION_ENERGY) * Fraction(4, (2 * self.n + 1) ** 2)

    @cached_property
    def alpha(self) -> float:
        return float(self.alpha_exact)

    @cached_property
    def energy(self) -> float:
        return float(self.energy_exact)

    @property
    def a0(self) -> float:
        return BOHR_RADIUS

    @property
    def e_i(self) -> float:
        return IONIZATION_ENERGY

    @property
    def degree(self) -> int:
        return self.n - abs(self.l)


def level(n: int, l: int = 0) -> Hydrogen2DLevel:
    return Hydrogen2DLevel(int(n), int(l))


def coulomb_potential(r):
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise DomainError("Coulomb potential needs r > 0")
    return -E2 / r


def radial_r1(lv: Hydrogen2DLevel, rho):
    """R1 = rho^|l| e^{-alpha rho} L_{n-|l|}^{2|l|}(2 alpha rho)."""
    rho = np.asarray(rho, dtype=float)
    k = abs(lv.l)
    return rho**k * np.exp(-lv.alpha * rho) * laguerre(lv.degree, 2 * k, 2 * lv.alpha * rho)


def radial_dr1(lv: Hydrogen2DLevel, rho):
    rho = np.asarray(rho, dtype=float)
    k, al = abs(lv.l), lv.alpha
    pref = rho**k * np.exp(-al * rho)
    x = 2 * al * rho
    L = laguerre(lv.degree, 2 * k, x)
    dL = -laguerre(lv.degree - 1, 2 * k + 1, x) if lv.degree > 0 else 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        dpref = np.where(rho == 0, 0.0, pref * (k / rho - al)) if k else -al * pref
    return dpref * L + pref * 2 * al * dL


def _laguerre_roots(lv: Hydrogen2DLevel) -> np.ndarray:
    """Zeros of L_s^k in x, polished by Newton on the recurrence."""
    s, k = lv.degree, 2 * abs(lv.l)
    if s == 0:
        return np.empty(0)
    x = roots_genlaguerre(s, k)[0]
    for _ in range(3):
        x = x + laguerre(s, k, x) / laguerre(s - 1, k + 1, x)
    return np.sort(x)


def radial_residual(lv: Hydrogen2DLevel, R, dR, rho):
    """Radial equation residual; R'' is a central difference of the supplied R'.

    Returned relative to the largest term magnitude at each point.  The
    difference step is wide (1e-3, Richardson-corrected) so that quadrature
    noise in R' is not amplified.
    """
    rho = np.asarray(rho, dtype=float)
    d2 = fd_derivative(dR, rho, 1, 1e-3 * min(1.0, float(np.min(rho))))
    r, d1 = np.asarray(R(rho)), np.asarray(dR(rho))
    coef = 2 / rho - lv.l**2 / rho**2 - lv.alpha**2
    terms = np.abs([d2, d1 / rho, coef * r])
    scale = np.maximum(terms.max(axis=0), np.finfo(float).tiny)
    return (d2 + d1 / rho + coef * r) / scale


@dataclass(frozen=True)
class _Window:
    c: float
    w: float
    index: int


class RadialPair:
    """(R1, R2) for a level, with R2 anchored so that R2(rho0) = 0.

    For the ground state I = Ei(4 rho) - Ei(4 rho0); ``closed_form=False``
    forces the quadrature route instead.
    """

    def __init__(self, lv: Hydrogen2DLevel, rho0: float = DEFAULT_RHO0, closed_form: bool = True):
        if not (math.isfinite(rho0) and rho0 > 0):
            raise DomainError("rho0 must be positive")
        self.level = lv
        self.rho0 = float(rho0)
        self.closed_form = bool(closed_form) and lv.n == 0
        self._ei0 = expint_ei(4 * self.rho0) if self.closed_form else None
        self.roots = _laguerre_roots(lv) / (2 * lv.alpha)
        if self.roots.size and np.min(np.abs(self.roots - self.rho0)) < 1e-6 * max(1.0, self.rho0):
            raise DomainError("rho0 sits on a zero of R1")
        self.windows = self._make_windows()
        self._table = self._breakpoint_table()

    # --- stable pieces -----------------------------------------------------

    def _make_windows(self):
        out = []
        for i, c in enumerate(self.roots):
            gaps = [abs(c - self.rho0), c]
            if i > 0:
                gaps.append(c - self.roots[i - 1])
            if i + 1 < self.roots.size:
                gaps.append(self.roots[i + 1] - c)
            out.append(_Window(float(c), 0.5 * min(gaps), i))
        return out

    def _q(self, win: _Window, t):
        """R1/(t - c), evaluated without cancellation."""
        t = np.asarray(t, dtype=float)
        lv, al, k = self.level, self.level.alpha, abs(self.level.l)
        xs = self.roots * 2 * al
        prod = np.ones_like(t)
        for j, xj in enumerate(xs):
            if j != win.index:
                prod = prod * (2 * al * t - xj)
        lead = (-1) ** lv.degree / math.factorial(lv.degree)
        return t**k * np.exp(-al * t) * lead * 2 * al * prod

    def _dlogq(self, win: _Window, t):
        t = np.asarray(t, dtype=float)
        al, k = self.level.alpha, abs(self.level.l)
        out = k / t - al
        for j, c in enumerate(self.roots):
            if j != win.index:
                out = out + 1.0 / (t - c)
        return out

    def _h(self, win, t):
        return 1.0 / (np.asarray(t, dtype=float) * self._q(win, t) ** 2)

    @cached_property
    def _h_taylor(self):
        return [(float(self._h(w, w.c)), float(fd_derivative(lambda t: self._h(w, t), w.c, 2)),
                 float(fd_derivative(lambda t: self._h(w, t), w.c, 3))) for w in self.windows]

    def _reg(self, win: _Window, t):
        """(h(t) - h(c)) / (t - c)^2, Taylor-expanded right next to c."""
        t = np.asarray(t, dtype=float)
        h0, h2, h3 = self._h_taylor[win.index]
        u = t - win.c
        near = np.abs(u) < 1e-3 * win.w
        safe = np.where(near, 1.0, u)
        val = (self._h(win, t) - h0) / safe**2
        return np.where(near, 0.5 * h2 + h3 * u / 6, val)

    def _integrand(self, t):
        t = np.asarray(t, dtype=float)
        return 1.0 / (t * radial_r1(self.level, t) ** 2)

    # --- integral bookkeeping --------------------------------------------------

    def _breakpoint_table(self):
        """I at rho0 and at every window edge, walking outward from rho0."""
        pts = {self.rho0: 0.0}
        edges = sorted([(w.c - w.w, w.c + w.w, w) for w in self.windows])
        up = [e for e in edges if e[0] > self.rho0]
        down = [e for e in edges if e[1] < self.rho0][::-1]
        cur_x, cur_i = self.rho0, 0.0
        for lo, hi, w in up:
            cur_i += integrate(self._integrand, cur_x, lo, _QUAD)
            pts[lo] = cur_i
            cur_i += self._window_jump(w)
            pts[hi] = cur_i
            cur_x = hi
        cur_x, cur_i = self.rho0, 0.0
        for lo, hi, w in down:
            cur_i += integrate(self._integrand, cur_x, hi, _QUAD)
            pts[hi] = cur_i
            cur_i -= self._window_jump(w)
            pts[lo] = cur_i
            cur_x = lo
        return dict(sorted(pts.items()))

    def _window_jump(self, w: _Window) -> float:
        h0 = self._h_taylor[w.index][0]
        return integrate(lambda t: self._reg(w, t), w.c - w.w, w.c + w.w, _QUAD) - 2 * h0 / w.w

    def _locate(self, rho: float):
        for w in self.windows:
            if abs(rho - w.c) <= w.w:
                return w
        return None

    def _panel_width(self, x: float) -> float:
        return min(0.25, 0.25 * x) / max(1.0, 2 * self.level.alpha)

    @cached_property
    def _anchors(self):
        """Dense (x, I) table so every lookup integrates over a few panels only."""
        table = dict(self._table)
        keys = sorted(table)
        spans = [(keys[0], -1.0, R_MIN)] if keys[0] > R_MIN else []
        for p, q in zip(keys[:-1], keys[1:]):
            if self._locate(0.5 * (p + q)) is None:
                spans.append((p, 1.0, q))
        spans.append((keys[-1], 1.0, max(TABLE_MAX, keys[-1] + 10.0)))
        for start, sign, stop in spans:
            x, acc = start, table[start]
            while True:
                nxt = x + sign * 8 * self._panel_width(x if sign > 0 else 0.5 * x)
                if sign * (stop - nxt) <= 0:
                    break
                acc += _panel_integral(self._integrand, x, nxt, self._panel_width(min(x, nxt)))
                x = nxt
                table[x] = acc
        xs = np.array(sorted(table))
        return xs, np.array([table[x] for x in xs])

    def _same_interval(self, a: float, b: float) -> bool:
        lo, hi = sorted((a, b))
        return not any(lo < c < hi for c in self.roots)

    def _regular_I(self, rho: float) -> float:
        xs, vals = self._anchors
        i = int(np.searchsorted(xs, rho))
        cands = [j for j in (i - 1, i) if 0 <= j < xs.size and self._same_interval(xs[j], rho)]
        if not cands:  # pragma: no cover
            raise AssertionError("no anchor in the regular interval")
        j = min(cands, key=lambda k: abs(xs[k] - rho))
        a = float(xs[j])
        return float(vals[j]) + _panel_integral(self._integrand, a, rho, self._panel_width(min(a, rho)))

    def _window_parts(self, w: _Window, rho: float):
        """(K + J(rho), reg(rho)) with G(rho) = (rho - c)(K + J) - h(c)."""
        h0 = self._h_taylor[w.index][0]
        base = self._table[w.c - w.w] - h0 / w.w
        J = integrate(lambda t: self._reg(w, t), w.c - w.w, rho, _QUAD)
        return base + J, float(self._reg(w, rho)), h0

    # --- public evaluation -------------------------------------------------------

    def _check(self, rho):
        rho = np.asarray(rho, dtype=float)
        if np.any(~np.isfinite(rho)) or np.any(rho <= 0):
            raise DomainError("radial functions need rho > 0")
        return rho

    def r1(self, rho):
        return radial_r1(self.level, self._check(rho))

    def dr1(self, rho):
        return radial_dr1(self.level, self._check(rho))

    def _r2_scalar(self, rho: float):
        if self.closed_form:
            # R1 = e^{-2 rho}: R2 = R1 I and R2' = -2 R2 + 1/(rho R1)
            R1 = math.exp(-2 * rho)
            r2 = R1 * (expint_ei(4 * rho) - self._ei0)
            return r2, -2 * r2 + 1.0 / (rho * R1)
        w = self._locate(rho)
        if w is None:
            I = self._regular_I(rho)
            R1 = float(radial_r1(self.level, rho))
            dR1 = float(radial_dr1(self.level, rho))
            return R1 * I, dR1 * I + 1.0 / (rho * R1)
        KJ, reg, h0 = self._window_parts(w, rho)
        u = rho - w.c
        G = u * KJ - h0
        dG = KJ + u * reg
        q = float(self._q(w, rho))
        dq = q * float(self._dlogq(w, rho))
        return q * G, dq * G + q * dG

    def _eval_r2(self, rho):
        rho = self._check(rho)
        flat = np.atleast_1d(rho).ravel()
        out = np.array([self._r2_scalar(float(p)) for p in flat]).reshape(-1, 2)
        shape = np.shape(rho)
        if not shape:
            return float(out[0, 0]), float(out[0, 1])
        return out[:, 0].reshape(shape), out[:, 1].reshape(shape)

    def r2(self, rho):
        return self._eval_r2(rho)[0]

    def dr2(self, rho):
        return self._eval_r2(rho)[1]

    def wronskian(self, rho):
        """R1 R2' - R1' R2 (equals 1/rho)."""
        r2, d2 = self._eval_r2(rho)
        return self.r1(rho) * d2 - self.dr1(rho) * r2

    def integral(self, rho: float) -> float:
        """I(rho) = integral from rho0 (finite part across zeros of R1)."""
        return self.r2(rho) / float(self.r1(rho))

    def with_rho0(self, rho0: float) -> "RadialPair":
        return RadialPair(self.level, rho0, self.closed_form)


def radial_r2(lv: Hydrogen2DLevel, rho, rho0: float = DEFAULT_RHO0):
    return RadialPair(lv, rho0).r2(rho)


def ground_state_r2_ei(rho, rho0: float = DEFAULT_RHO0):
    """Ground state R2 = e^{-2 rho} (Ei(4 rho) - Ei(4 rho0))."""
    return math.exp(-2 * rho) * (expint_ei(4 * rho) - expint_ei(4 * rho0))


# ---------------------------------------------------------------------------
# reduced action


@dataclass(frozen=True)
class ReducedAction2D:
    """S0 = hbar arctan(N/D) + hbar lambda with

    N = R1 T1 + nu2 R1 T2 + nu3 R2 T1 + nu4 R2 T2
    D = mu1 R1 T1 + mu2 R1 T2 + mu3 R2 T1 + R2 T2,   T1 = cos l theta, T2 = sin l theta.
    """
    pair: RadialPair
    nu2: float = 0.0
    nu3: float = 0.0
    nu4: float = 0.0
    mu1: float = 1.0
    mu2: float = 0.0
    mu3: float = 0.0
    lam: float = 0.0

    def __post_init__(self):
        vals = (self.nu2, self.nu3, self.nu4, self.mu1, self.mu2, self.mu3, self.lam)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("integration constants must be finite")
        # with l = 0 the angular factor T2 vanishes and D = mu1 R1 + mu3 R2
        if self.pair.level.l == 0 and self.mu1 == 0 and self.mu3 == 0:
            raise DegenerateConstantsError("denominator of S0 vanishes identically")

    @property
    def level(self) -> Hydrogen2DLevel:
        return self.pair.level

    @property
    def kappa(self) -> float:
        """mu1 nu3 - mu3, the ground-state motion coefficient."""
        return self.mu1 * self.nu3 - self.mu3

    def constants(self) -> dict:
        return {"nu2": self.nu2, "nu3": self.nu3, "nu4": self.nu4, "mu1": self.mu1,
                "mu2": self.mu2, "mu3": self.mu3, "lambda": self.lam}

    def _terms(self, r, theta):
        r = np.asarray(r, dtype=float)
        if np.any(r < R_MIN):
            raise DomainError(f"r below the guard {R_MIN}")
        theta = np.asarray(theta, dtype=float)
        l = self.level.l
        T1, T2 = np.cos(l * theta), np.sin(l * theta)
        dT1, dT2 = -l * T2, l * T1
        R1, dR1 = self.pair.r1(r), self.pair.dr1(r)
        R2, dR2 = self.pair._eval_r2(r)
        a1, a2 = T1 + self.nu2 * T2, self.nu3 * T1 + self.nu4 * T2
        b1, b2 = self.mu1 * T1 + self.mu2 * T2, self.mu3 * T1 + T2
        N, D = R1 * a1 + R2 * a2, R1 * b1 + R2 * b2
        Nr, Dr = dR1 * a1 + dR2 * a2, dR1 * b1 + dR2 * b2
        Nt = R1 * (dT1 + self.nu2 * dT2) + R2 * (self.nu3 * dT1 + self.nu4 * dT2)
        Dt = R1 * (self.mu1 * dT1 + self.mu2 * dT2) + R2 * (self.mu3 * dT1 + dT2)
        return N, D, Nr, Dr, Nt, Dt


def s0_2d(actn: ReducedAction2D, r, theta):
    """Principal-branch S0 at independent points."""
    N, D, *_ = actn._terms(r, theta)
    with np.errstate(divide="ignore", invalid="ignore"):
        ang = np.where(D == 0, np.sign(N) * np.pi / 2, np.arctan(N / D))
    out = HBAR * (ang + actn.lam)
    return float(out) if np.ndim(out) == 0 else out


def s0_2d_path(actn: ReducedAction2D, r, theta):
    """S0 along a sampled path, continued across branch jumps of the arctan."""
    N, D, *_ = actn._terms(r, theta)
    ang = np.arctan2(N, D)
    ang = np.unwrap(np.where(ang > np.pi / 2, ang - np.pi, np.where(ang < -np.pi / 2, ang + np.pi, ang)),
                    period=np.pi)
    # align with the principal value at the first sample
    N0, D0 = np.atleast_1d(N)[0], np.atleast_1d(D)[0]
    first = math.atan(N0 / D0) if D0 != 0 else math.copysign(math.pi / 2, N0)
    ang = ang - ang[0] + first
    return HBAR * (ang + actn.lam)


def grad_s0_2d(actn: ReducedAction2D, r, theta):
    """(dS0/dr, dS0/dtheta) in closed form.

    Nr D - N Dr collapses to (a2 b1 - a1 b2) W with W = R1 R2' - R1' R2 = 1/rho,
    which avoids cancelling products of the fast-growing R2 at large r.
    """
    N, D, _, _, Nt, Dt = actn._terms(r, theta)
    r = np.asarray(r, dtype=float)
    l = actn.level.l
    theta = np.asarray(theta, dtype=float)
    T1, T2 = np.cos(l * theta), np.sin(l * theta)
    a1, a2 = T1 + actn.nu2 * T2, actn.nu3 * T1 + actn.nu4 * T2
    b1, b2 = actn.mu1 * T1 + actn.mu2 * T2, actn.mu3 * T1 + T2
    den = N * N + D * D
    rho = r / BOHR_RADIUS
    return HBAR * (a2 * b1 - a1 * b2) / (rho * den * BOHR_RADIUS), HBAR * (Nt * D - N * Dt) / den


def h_function(actn: ReducedAction2D, r):
    """H(r) = (R1 + nu3 R2)^2 + (mu1 R1 + mu3 R2)^2."""
    R1, R2 = actn.pair.r1(r), actn.pair.r2(r)
    return (R1 + actn.nu3 * R2) ** 2 + (actn.mu1 * R1 + actn.mu3 * R2) ** 2


def ground_state_ds0_dr(actn: ReducedAction2D, r):
    """hbar (mu1 nu3 - mu3) W / H with the exact radial Wronskian W = 1/r."""
    _require_ground(actn)
    r = np.asarray(r, dtype=float)
    return HBAR * actn.kappa / (r * h_function(actn, r))


def alternative_ground_bracket(r, rho0: float = DEFAULT_RHO0):
    """2 e^{-4r} int_{r0}^{r} e^{4t}/t dt + e^{2r}/r for the ground state.

    Comparison only: the true radial cross term R1 R2' - R1' R2 is 1/r
    (see RadialPair.wronskian) and this expression does not reduce to it.
    """
    r = float(r)
    I = integrate(lambda t: np.exp(4 * t) / t, rho0, r, _QUAD)
    return 2 * math.exp(-4 * r) * I + math.exp(2 * r) / r


def bohm_form_2d(actn: ReducedAction2D, r, theta):
    """m rdot = dS0/dr,  m r^2 thetadot = dS0/dtheta."""
    gr, gt = grad_s0_2d(actn, r, theta)
    r = np.asarray(r, dtype=float)
    return gr / MASS, gt / (MASS * r * r)


def refit_constants(actn: ReducedAction2D, rho0_new: float) -> ReducedAction2D:
    """Constants for a new lower bound rho0' giving the same S0.

    R2' = R2 - C R1 with C = I(rho0').  The vector (D, N) is rescaled by s and
    rotated by delta so the fixed coefficients (1 on R1 T1 in N, 1 on R2 T2
    in D) are restored; lambda absorbs delta.
    """
    C = actn.pair.integral(rho0_new)
    A = 1.0 + C * actn.nu3                 # R1 T1 in N
    B = actn.mu1 + C * actn.mu3            # R1 T1 in D
    n12 = actn.nu2 + C * actn.nu4          # R1 T2 in N
    d12 = actn.mu2 + C                     # R1 T2 in D
    if actn.level.l == 0:
        # T2 = 0: only the R1 coefficient of N is pinned, so a plain rescale suffices
        if A == 0:
            raise DegenerateConstantsError("constants cannot be re-fitted for this rho0")
        return ReducedAction2D(actn.pair.with_rho0(rho0_new), nu3=actn.nu3 / A,
                               mu1=B / A, mu3=actn.mu3 / A, lam=actn.lam)
    delta = math.atan2(A - 1.0, B + actn.nu4)
    denom = math.cos(delta) + actn.nu4 * math.sin(delta)
    if abs(denom) < 1e-14:
        delta += math.pi / 2 if delta <= 0 else -math.pi / 2
        denom = math.cos(delta) + actn.nu4 * math.sin(delta)
    if abs(denom) < 1e-14:
        raise DegenerateConstantsError("constants cannot be re-fitted for this rho0")
    s = 1.0 / denom
    cd, sd = math.cos(delta), math.sin(delta)
    # check: s (A cd - B sd) must equal 1
    if abs(s * (A * cd - B * sd) - 1.0) > 1e-9 * max(1.0, abs(s * A), abs(s * B)):
        raise DegenerateConstantsError("re-fit lost the normalization")  # pragma: no cover
    return ReducedAction2D(
        actn.pair.with_rho0(rho0_new),
        nu2=s * (n12 * cd - d12 * sd),
        nu3=s * (actn.nu3 * cd - actn.mu3 * sd),
        nu4=s * (actn.nu4 * cd - sd),
        mu1=s * (B * cd + A * sd),
        mu2=s * (d12 * cd + n12 * sd),
        mu3=s * (actn.mu3 * cd + actn.nu3 * sd),
        lam=actn.lam + delta,
    )


# ---------------------------------------------------------------------------
# trajectories


def _require_ground(actn):
    if actn.level.n != 0:
        raise NotImplementedError("trajectory laws are provided for the ground state only")


@dataclass
class Trajectory2D:
    t: np.ndarray
    r: np.ndarray
    theta: np.ndarray
    r_dot: np.ndarray
    theta_dot: np.ndarray
    law: str
    termination: str
    theta_determined: bool = True
    stall_location: Optional[float] = None
    message: str = ""
    meta: dict = field(default_factory=dict)

    def write_csv(self, path, header_comment: Optional[str] = None,
                  extra_meta: Optional[dict] = None) -> Path:
        path = Path(path)
        lines = [f"# {header_comment}"] if header_comment else []
        lines.append("t,r,theta,r_dot,theta_dot,law")
        for row in zip(self.t, self.r, self.theta, self.r_dot, self.theta_dot):
            lines.append(",".join(repr(float(v)) for v in row) + f",{self.law}")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
        meta = {"termination": self.termination, "theta_determined": self.theta_determined,
                "stall_location": self.stall_location, "message": self.message, **self.meta,
                **(extra_meta or {})}
        path.with_suffix(path.suffix + ".json").write_text(
            json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8")
        return path


def _guard(t, y):
    return y[0] >= R_MIN


def energy_law_rate(actn: ReducedAction2D, r):
    """rdot = 2 (E0 - V) r H / (hbar kappa), the energy law with dS0/dtheta = 0."""
    r = np.asarray(r, dtype=float)
    return 2 * (actn.level.energy - coulomb_potential(r)) * r * h_function(actn, r) / (HBAR * actn.kappa)


def turning_radius(lv: Hydrogen2DLevel) -> float:
    """Radius where E_n = V(r)."""
    return -E2 / lv.energy


def energy_law_2d_radial(actn: ReducedAction2D, r_init: float, t_span,
                         controls: Optional[ODEControls] = None) -> Trajectory2D:
    """Radial motion under the energy law; theta is left undetermined (NaN)."""
    _require_ground(actn)
    if actn.kappa == 0:
        raise DegenerateConstantsError("mu1*nu3 - mu3 = 0: S0 does not depend on r")
    E = actn.level.energy
    speed = math.sqrt(2 * abs(E) / MASS)
    c = controls or ODEControls(method="Radau", atol=1e-12)
    if c.stall_speed is None:
        c = replace(c, stall_speed=1e-8 * speed, stall_time=1e3 * HBAR / (2 * abs(E)))
    if c.guard is None:
        # repelling constants drive r to infinity in finite time
        ceiling = ESCAPE_SPEED_FACTOR * speed
        c = replace(c, guard=lambda t, y: _guard(t, y)
                    and abs(float(energy_law_rate(actn, y[0]))) <= ceiling)
    t0 = float(t_span[0])
    if r_init < R_MIN:
        raise DomainError(f"r_init below the guard {R_MIN}")
    base = dict(law="energy", theta_determined=False)
    meta = {"constants": actn.constants(), "rho0": actn.pair.rho0, "E": E}
    if float(energy_law_rate(actn, r_init)) == 0.0:
        return Trajectory2D(np.array([t0]), np.array([r_init]), np.array([np.nan]),
                            np.array([0.0]), np.array([np.nan]), termination="stalled",
                            stall_location=float(r_init), message="started on the turning radius",
                            meta=meta, **base)
    res = ode_solve(lambda t, y: [float(energy_law_rate(actn, y[0]))], [r_init], t_span, c)
    r = res.y[:, 0]
    rdot = np.array([float(energy_law_rate(actn, x)) if x >= R_MIN else np.nan for x in r])
    nan = np.full_like(r, np.nan)
    return Trajectory2D(res.t, r, nan, rdot, nan.copy(), termination=res.termination,
                        stall_location=float(res.location[0]) if res.stalled else None,
                        message=res.message, meta=meta, **base)


def energy_law_2d_residual(actn: ReducedAction2D, traj: Trajectory2D):
    """rdot dS0/dr - 2 (E0 - V) along the samples."""
    gr, _ = grad_s0_2d(actn, traj.r, np.zeros_like(traj.r))
    return traj.r_dot * gr - 2 * (actn.level.energy - coulomb_potential(traj.r))


def integrate_bohm_2d(actn: ReducedAction2D, r_init: float, theta_init: float, t_span,
                      controls: Optional[ODEControls] = None) -> Trajectory2D:
    c = controls or ODEControls()
    if c.guard is None:
        c = replace(c, guard=_guard)

    def rhs(t, y):
        rd, td = bohm_form_2d(actn, y[0], y[1])
        return [float(rd), float(td)]

    res = ode_solve(rhs, [r_init, theta_init], t_span, c)
    r, th = res.y[:, 0], res.y[:, 1]
    rates = np.array([rhs(0, y) if y[0] >= R_MIN else [np.nan, np.nan] for y in res.y])
    return Trajectory2D(res.t, r, th, rates[:, 0], rates[:, 1], law="bohm",
                        termination=res.termination, message=res.message,
                        meta={"constants": actn.constants(), "rho0": actn.pair.rho0,
                              "E": actn.level.energy})


# ---------------------------------------------------------------------------
# unit conversion


@dataclass(frozen=True)
class AtomicUnits:
    """Atomic-unit scales in SI (CODATA values from scipy.constants)."""
    length: float = sc.physical_constants["Bohr radius"][0]
    energy: float = sc.physical_constants["Hartree energy"][0]
    time: float = sc.physical_constants["atomic unit of time"][0]

    @property
    def velocity(self) -> float:
        return self.length / self.time

    @property
    def action(self) -> float:
        return sc.hbar


ATOMIC_UNITS = AtomicUnits()
