"""Pairs of real independent solutions of 1-D stationary wave equations.

Every equation handled here has the form ``phi'' = f(x) phi``; for the
Schrodinger equation ``f = 2m(V - E)/hbar**2``.  A :class:`SolutionPair`
carries ``f`` as ``curvature`` so the same downstream code serves the
Klein-Gordon case.
"""

from __future__ import annotations

import functools
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator, PPoly

from .numerics import DomainError, ODEControls, ode_solve

_KINDS = ("free", "linear", "harmonic", "coulomb-2d-radial", "tabulated")


class IntegrationQualityError(RuntimeError):
    """Numerical pair failed its Wronskian-constancy check."""


@dataclass(frozen=True)
class PotentialSpec:
    """Potential energy V(x).

    kind / params:
      free               V = 0 (optional params [v0] for a constant offset)
      linear             V = g x + v0, params [g] or [g, v0]
      harmonic           V = K (x - xc)^2 / 2, params [K] or [K, xc]; K = m omega^2
      coulomb-2d-radial  V = -e2 / r, params [e2]; domain must exclude r = 0
      tabulated          shape-preserving cubic through ``table = (x, V)``
    """
    kind: str
    params: tuple = ()
    domain: tuple = (-math.inf, math.inf)
    table: Optional[tuple] = None
    units: tuple = ("", "")
    _interp: Optional[PchipInterpolator] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        params = tuple(float(p) for p in self.params)
        if not all(math.isfinite(p) for p in params):
            raise ValueError("potential parameters must be finite")
        object.__setattr__(self, "params", params)
        lo, hi = (float(v) for v in self.domain)
        if self.kind == "tabulated":
            if self.table is None:
                raise ValueError("tabulated potential needs a table")
            xs, vs = (np.asarray(a, dtype=float) for a in self.table)
            order = np.argsort(xs)
            xs, vs = xs[order], vs[order]
            if xs.size < 2 or np.any(np.diff(xs) <= 0) or not np.all(np.isfinite(vs)):
                raise ValueError("tabulated potential needs >= 2 distinct finite rows")
            object.__setattr__(self, "table", (xs, vs))
            object.__setattr__(self, "_interp", PchipInterpolator(xs, vs, extrapolate=False))
            if not math.isfinite(lo) or lo < xs[0]:
                lo = float(xs[0])
            if not math.isfinite(hi) or hi > xs[-1]:
                hi = float(xs[-1])
        if not lo < hi:
            raise ValueError(f"empty potential domain ({lo}, {hi})")
        if self.kind == "coulomb-2d-radial":
            if not params:
                raise ValueError("coulomb potential needs [e2]")
            if lo <= 0:
                raise ValueError("coulomb domain must exclude r = 0")
        if self.kind in ("linear", "harmonic") and not params:
            raise ValueError(f"{self.kind} potential needs parameters")
        object.__setattr__(self, "domain", (lo, hi))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.kind == "free":
            v = np.full_like(x, p[0] if p else 0.0)
        elif self.kind == "linear":
            v = p[0] * x + (p[1] if len(p) > 1 else 0.0)
        elif self.kind == "harmonic":
            v = 0.5 * p[0] * (x - (p[1] if len(p) > 1 else 0.0)) ** 2
        elif self.kind == "coulomb-2d-radial":
            if np.any(x <= 0):
                raise DomainError("coulomb potential evaluated at r <= 0")
            v = -p[0] / x
        else:
            v = self._interp(x)
            if np.any(np.isnan(v)):
                raise DomainError("tabulated potential evaluated outside its table")
        return v if v.ndim else float(v)

    @classmethod
    def free(cls, domain=(-math.inf, math.inf)):
        return cls("free", (), domain)

    @classmethod
    def linear(cls, slope: float, offset: float = 0.0, domain=(-math.inf, math.inf)):
        return cls("linear", (slope, offset), domain)

    @classmethod
    def harmonic(cls, stiffness: float, center: float = 0.0, domain=(-math.inf, math.inf)):
        return cls("harmonic", (stiffness, center), domain)

    @classmethod
    def coulomb(cls, e2: float = 1.0, domain=(1e-3, math.inf)):
        return cls("coulomb-2d-radial", (e2,), domain)

    @classmethod
    def tabulated(cls, x, v, units=("", "")):
        return cls("tabulated", (), table=(x, v), units=tuple(units))


_UNITS_RE = re.compile(r"^#\s*units:\s*(\S+)\s+(\S+)\s*$")


def read_tabulated_potential(path) -> PotentialSpec:
    """Read a two-column (position, value) table with ``#`` comments.

    A header line ``# units: <length> <energy>`` is recorded on the returned PotentialSpec.
    """
    units = ("", "")
    rows = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _UNITS_RE.match(line)
            if m:
                units = (m.group(1), m.group(2))
            continue
        parts = line.split("#", 1)[0].split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected two columns, got {len(parts)}")
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    xs, vs = zip(*rows)
    return PotentialSpec.tabulated(xs, vs, units)


def write_tabulated_potential(path, x, v, units=("", "")):
    lines = []
    if any(units):
        lines.append(f"# units: {units[0]} {units[1]}")
    lines += [f"{float(a)!r} {float(b)!r}" for a, b in zip(np.asarray(x, float), np.asarray(v, float))]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class SolutionPair:
    """Two real independent solutions of ``phi'' = curvature(x) * phi``.

    ``wronskian`` is the constant W = phi1' phi2 - phi1 phi2'.  ``anchor`` is
    where branch tracking of the reduced action starts.  ``family`` maps an
    energy to the matching pair (analytic pairs only).
    """
    phi1: Callable
    phi2: Callable
    dphi1: Callable
    dphi2: Callable
    d2phi1: Callable
    d2phi2: Callable
    energy: float
    mass: float
    hbar: float
    potential: PotentialSpec
    wronskian: float
    curvature: Callable
    domain: tuple
    anchor: float = 0.0
    family: Optional[Callable[[float], "SolutionPair"]] = None
    equation: str = "schrodinger"
    nodes: Optional[np.ndarray] = field(default=None, repr=False)

    def values(self, x):
        """(phi1, phi2, phi1', phi2', phi1'', phi2'') at ``x``."""
        x = self.check_domain(x)
        return (self.phi1(x), self.phi2(x), self.dphi1(x), self.dphi2(x),
                self.d2phi1(x), self.d2phi2(x))

    def check_domain(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.domain
        if np.any(x < lo) or np.any(x > hi):
            raise DomainError(f"position outside pair domain [{lo}, {hi}]")
        return x

    def wronskian_at(self, x):
        x = self.check_domain(x)
        return self.dphi1(x) * self.phi2(x) - self.phi1(x) * self.dphi2(x)

    def equation_residual(self, x):
        """(hbar^2/2m)(phi'' - f phi) for both members; energy units."""
        p1, p2, _, _, dd1, dd2 = self.values(x)
        f = self.curvature(x)
        scale = self.hbar**2 / (2 * self.mass)
        return scale * (dd1 - f * p1), scale * (dd2 - f * p2)


def _schrodinger_curvature(V: PotentialSpec, E: float, m: float, hbar: float):
    c = 2 * m / hbar**2

    def f(x):
        return c * (np.asarray(V(x)) - E)
    return f


def pair_free(E: float, m: float = 1.0, hbar: float = 1.0) -> SolutionPair:
    """phi1 = sin kx, phi2 = cos kx with k = sqrt(2mE)/hbar; W = k."""
    if not E > 0:
        raise ValueError("pair_free needs E > 0; use pair_numeric for bound problems")
    k = math.sqrt(2 * m * E) / hbar
    return _trig_pair(k, E, m, hbar, PotentialSpec.free(),
                      family=lambda e: pair_free(e, m, hbar))


def _trig_pair(k, E, m, hbar, V, family=None, equation="schrodinger"):
    return SolutionPair(
        phi1=lambda x: np.sin(k * np.asarray(x, float)),
        phi2=lambda x: np.cos(k * np.asarray(x, float)),
        dphi1=lambda x: k * np.cos(k * np.asarray(x, float)),
        dphi2=lambda x: -k * np.sin(k * np.asarray(x, float)),
        d2phi1=lambda x: -k * k * np.sin(k * np.asarray(x, float)),
        d2phi2=lambda x: -k * k * np.cos(k * np.asarray(x, float)),
        energy=E, mass=m, hbar=hbar, potential=V, wronskian=k,
        curvature=lambda x: np.full_like(np.asarray(x, float), -k * k),
        domain=V.domain, anchor=0.0, family=family, equation=equation,
    )


@functools.lru_cache(maxsize=None)
def _birkhoff_weights(offsets: tuple) -> tuple:
    """Weights (w, v) with y'(0) ~ sum w_j y(j) + sum v_j y''(j) for unit spacing.

    Exact for polynomials of degree < 2 len(offsets) - 1; one more condition
    makes the system inconsistent.
    """
    o = np.asarray(offsets, dtype=float)
    n = 2 * o.size - 1
    rows = []
    rhs = np.zeros(n)
    for p in range(n):
        vals = o**p
        curv = p * (p - 1) * o ** (p - 2) if p >= 2 else np.zeros_like(o)
        rows.append(np.concatenate([vals, curv]))
        rhs[p] = 1.0 if p == 1 else 0.0
    # underdetermined by one; take the minimum-norm weights
    sol = np.linalg.lstsq(np.array(rows), rhs, rcond=None)[0]
    return tuple(sol[: o.size]), tuple(sol[o.size:])


def _node_derivative(y: np.ndarray, g: np.ndarray, h: float) -> np.ndarray:
    """First derivative at the nodes from values ``y`` and known ``g = y''``."""
    n = y.size
    d = np.empty_like(y)
    w, v = _birkhoff_weights((-2, -1, 0, 1, 2))
    d[2:-2] = sum(w[j] * y[j:n - 4 + j] for j in range(5)) / h \
        + h * sum(v[j] * g[j:n - 4 + j] for j in range(5))
    for i, offs in ((0, (0, 1, 2, 3, 4)), (1, (-1, 0, 1, 2, 3)),
                    (n - 2, (-3, -2, -1, 0, 1)), (n - 1, (-4, -3, -2, -1, 0))):
        w, v = _birkhoff_weights(offs)
        idx = [i + o for o in offs]
        d[i] = np.dot(w, y[idx]) / h + h * np.dot(v, g[idx])
    return d


def _wronskian_scale(p1, p2, f, span):
    # attainable precision of W in floating point: (phi1^2 + phi2^2) times the
    # local wavenumber; never below 1 (the seeded value)
    k = np.sqrt(np.abs(f) + 1.0 / span**2)
    return np.maximum(1.0, (p1 * p1 + p2 * p2) * k)


def _quintic_hermite(xs, y, dy, d2y) -> PPoly:
    """Piecewise quintic matching value, slope and curvature at every node."""
    h = np.diff(xs)
    c0, c1, c2 = y[:-1], h * dy[:-1], 0.5 * h * h * d2y[:-1]
    a = y[1:] - (c0 + c1 + c2)
    b = h * dy[1:] - (c1 + 2 * c2)
    c = h * h * d2y[1:] - 2 * c2
    c3 = 10 * a - 4 * b + 0.5 * c
    c4 = -15 * a + 7 * b - c
    c5 = 6 * a - 3 * b + 0.5 * c
    coeffs = np.array([c5 / h**5, c4 / h**4, c3 / h**3, c2 / h**2, c1 / h, c0])
    return PPoly(coeffs, xs, extrapolate=False)


def numerov_pair(curvature: Callable, x0: float, x_end: float, h: float, *,
                 energy: float, mass: float, hbar: float, potential: PotentialSpec,
                 equation: str = "schrodinger", drift_tol: float = 1e-6) -> SolutionPair:
    """Propagate the (0,1) and (1,0) seeds from ``x0`` with Numerov's scheme.

    Values between nodes come from quintic Hermite interpolation of
    (phi, phi', phi'') where phi'' = f phi at the nodes.
    """
    if not x_end > x0:
        raise ValueError("numerov_pair needs x_end > x0")
    n = max(int(math.ceil((x_end - x0) / h)), 8)
    xs = np.linspace(x0, x_end, n + 1)
    h = xs[1] - xs[0]
    f = np.asarray(curvature(xs), dtype=float)
    if not np.all(np.isfinite(f)):
        raise DomainError("wave-equation coefficient not finite on the grid")

    # first step from a tight Runge-Kutta solve of the 2x2 first-order system
    def rhs(_t, y):
        fx = float(curvature(_t))
        return [y[1], fx * y[0], y[3], fx * y[2]]
    start = ode_solve(rhs, [0.0, 1.0, 1.0, 0.0], (xs[0], xs[1]),
                      ODEControls(rtol=1e-13, atol=1e-15))
    y = np.empty((2, n + 1))
    y[:, 0] = (0.0, 1.0)
    y[:, 1] = (start.y[-1, 0], start.y[-1, 2])

    w = 1.0 - h * h * f / 12.0
    for i in range(1, n):
        y[:, i + 1] = (2.0 * y[:, i] * (1.0 + 5.0 * h * h * f[i] / 12.0)
                       - y[:, i - 1] * w[i - 1]) / w[i + 1]

    d1 = _node_derivative(y[0], f * y[0], h)
    d2 = _node_derivative(y[1], f * y[1], h)
    d1[0], d2[0] = 1.0, 0.0
    drift = float(np.max(np.abs(d1 * y[1] - y[0] * d2 - 1.0)
                         / _wronskian_scale(y[0], y[1], f, xs[-1] - xs[0])))
    if drift > drift_tol:
        raise IntegrationQualityError(
            f"Wronskian drift {drift:.3e} exceeds {drift_tol:.1e}; reduce the step")

    bp1 = _quintic_hermite(xs, y[0], d1, f * y[0])
    bp2 = _quintic_hermite(xs, y[1], d2, f * y[1])
    db1, db2 = bp1.derivative(), bp2.derivative()
    dd1, dd2 = bp1.derivative(2), bp2.derivative(2)

    return SolutionPair(
        phi1=bp1, phi2=bp2, dphi1=db1, dphi2=db2, d2phi1=dd1, d2phi2=dd2,
        energy=energy, mass=mass, hbar=hbar, potential=potential, wronskian=1.0,
        curvature=curvature, domain=(float(xs[0]), float(xs[-1])), anchor=float(xs[0]),
        family=None, equation=equation, nodes=xs,
    )


def pair_numeric(V: PotentialSpec, E: float, x0: Optional[float] = None, h: float = 2e-3,
                 m: float = 1.0, hbar: float = 1.0, x_end: Optional[float] = None
                 ) -> SolutionPair:
    """Numerical pair for potential ``V`` at energy ``E`` seeded at ``x0``.

    ``x0``/``x_end`` default to the potential's domain edges, which must then
    be finite.  The seeds give W = +1.
    """
    lo, hi = V.domain
    x0 = lo if x0 is None else float(x0)
    x_end = hi if x_end is None else float(x_end)
    if not (math.isfinite(x0) and math.isfinite(x_end)):
        raise ValueError("pair_numeric needs a finite interval")
    if x0 < lo or x_end > hi:
        raise DomainError("requested interval leaves the potential domain")
    return numerov_pair(_schrodinger_curvature(V, E, m, hbar), x0, x_end, h,
                        energy=E, mass=m, hbar=hbar, potential=V)


def corrupt_pair(pair: SolutionPair, eps: float) -> SolutionPair:
    """Negative control: phi1 -> phi1 + eps x^2 (no longer a solution)."""
    return SolutionPair(
        phi1=lambda x: pair.phi1(x) + eps * np.asarray(x, float) ** 2,
        phi2=pair.phi2,
        dphi1=lambda x: pair.dphi1(x) + 2 * eps * np.asarray(x, float),
        dphi2=pair.dphi2,
        d2phi1=lambda x: pair.d2phi1(x) + 2 * eps,
        d2phi2=pair.d2phi2,
        energy=pair.energy, mass=pair.mass, hbar=pair.hbar, potential=pair.potential,
        wronskian=pair.wronskian, curvature=pair.curvature, domain=pair.domain,
        anchor=pair.anchor, family=None, equation=pair.equation, nodes=pair.nodes,
    )


def recombine_check(pair: SolutionPair, other: SolutionPair, xs: Sequence[float]):
    """Cross-Wronskians W(p_i, q_j) on ``xs``; constant iff both span one space."""
    xs = np.asarray(xs, dtype=float)
    a = [(pair.phi1(xs), pair.dphi1(xs)), (pair.phi2(xs), pair.dphi2(xs))]
    b = [(other.phi1(xs), other.dphi1(xs)), (other.phi2(xs), other.dphi2(xs))]
    return np.array([[pa[1] * qb[0] - pa[0] * qb[1] for qb in b] for pa in a])
