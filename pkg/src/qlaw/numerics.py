"""Shared numerical kernels: special functions, quadrature, stencils, ODEs.

Everything here is a pure function of its inputs.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import DOP853, LSODA, RK45, Radau

log = logging.getLogger(__name__)

EULER_GAMMA = 0.57721566490153286060651209008240243

#: Below this argument Ei(x) is rejected (log singularity at the origin).
EI_MIN_ARGUMENT = np.finfo(float).tiny
#: Series branch for x < crossover, asymptotic branch above.  At 40 the
#: optimally truncated asymptotic series is accurate to ~4e-16.
EI_SERIES_CROSSOVER = 40.0

DEFAULT_QUAD_ATOL = 1e-10
DEFAULT_QUAD_RTOL = 1e-10
DEFAULT_ODE_ATOL = 1e-9
DEFAULT_ODE_RTOL = 1e-9

_EPS = np.finfo(float).eps
_ODE_METHODS = {"DOP853": DOP853, "RK45": RK45, "Radau": Radau, "LSODA": LSODA}
_FD_STEP_BASE = {1: _EPS ** (1 / 3), 2: _EPS ** (1 / 6), 3: _EPS ** (1 / 7)}


class QuadratureError(RuntimeError):
    """Requested quadrature tolerance could not be met."""


class NonFiniteError(ValueError):
    """A function sample was NaN or infinite."""


class DomainError(ValueError):
    """Argument outside the domain of an operation."""


@dataclass(frozen=True)
class Grid1D:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 5:
            raise ValueError("Grid1D needs at least 5 points")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("Grid1D points must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, lower: float, upper: float, n: int) -> "Grid1D":
        return cls(np.linspace(lower, upper, n))

    @property
    def spacing(self) -> np.ndarray:
        return np.diff(self.points)

    def __len__(self):
        return self.points.size

    def __array__(self, dtype=None, copy=None):
        return self.points if dtype is None else self.points.astype(dtype)


@dataclass(frozen=True)
class QuadratureSpec:
    method: str = "adaptive-subdivision"
    atol: float = DEFAULT_QUAD_ATOL
    rtol: float = DEFAULT_QUAD_RTOL
    max_subdivisions: int = 200

    def __post_init__(self):
        if self.method not in ("adaptive-subdivision", "fixed-panel"):
            raise ValueError(f"unknown quadrature method {self.method!r}")
        if self.atol <= 0 or self.rtol <= 0:
            raise ValueError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")


# ---------------------------------------------------------------------------
# special functions


def laguerre(s: int, k: int, x):
    """Generalized Laguerre polynomial L_s^k(x) by upward recurrence in s.

    (j+1) L_{j+1} = (2j+1+k-x) L_j - (j+k) L_{j-1}, with L_0 = 1 and
    L_1 = 1+k-x.  Vectorized over ``x``.
    """
    if s < 0 or k < 0:
        raise ValueError("laguerre needs s, k >= 0")
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if s == 0:
        return prev if prev.ndim else float(prev)
    cur = 1.0 + k - x
    for j in range(1, s):
        prev, cur = cur, ((2 * j + 1 + k - x) * cur - (j + k) * prev) / (j + 1)
    return cur if cur.ndim else float(cur)


def _ei_series(x: float) -> float:
    # gamma + ln x + sum_{j>=1} x^j / (j j!)
    total = 0.0
    term = 1.0
    j = 0
    while True:
        j += 1
        term *= x / j
        contrib = term / j
        total += contrib
        if contrib < 1e-17 * total:
            break
    return EULER_GAMMA + math.log(x) + total


def _ei_asymptotic(x: float) -> float:
    # e^x/x * sum_j j!/x^j, truncated at the smallest term
    total = 0.0
    term = 1.0
    j = 0
    while True:
        total += term
        j += 1
        nxt = term * j / x
        if nxt >= term or nxt < 1e-17 * total:
            break
        term = nxt
    return math.exp(x) / x * total


def expint_ei(x: float) -> float:
    """Exponential integral Ei(x) for x > 0 (Cauchy principal value).

    Power series below ``EI_SERIES_CROSSOVER``, asymptotic series above it.
    """
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"Ei argument must be finite, got {x}")
    if x <= 0:
        raise DomainError(f"Ei is only provided for x > 0, got {x}")
    if x < EI_MIN_ARGUMENT:
        raise DomainError(f"Ei({x}) underflows toward -inf")
    if x < EI_SERIES_CROSSOVER:
        return _ei_series(x)
    return _ei_asymptotic(x)


# ---------------------------------------------------------------------------
# quadrature

# Gauss-Kronrod 7/15 abscissae and weights (QUADPACK qk15)
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KWEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
_GWEIGHTS = np.zeros(15)
_GWEIGHTS[[1, 3, 5]] = _WG[:3]
_GWEIGHTS[[9, 11, 13]] = _WG[2::-1]
_GWEIGHTS[7] = _WG[3]


def _sample(f, xs: np.ndarray) -> np.ndarray:
    try:
        ys = np.asarray(f(xs), dtype=float)
    except (TypeError, ValueError):
        ys = None
    if ys is None or ys.shape != xs.shape:
        ys = np.array([float(f(x)) for x in xs])
    if not np.all(np.isfinite(ys)):
        bad = xs[~np.isfinite(ys)][0]
        raise NonFiniteError(f"non-finite integrand sample at x={bad!r}")
    return ys


def _gk15(f, a: float, b: float):
    center = 0.5 * (a + b)
    half = 0.5 * (b - a)
    ys = _sample(f, center + half * _NODES)
    kron = half * np.dot(_KWEIGHTS, ys)
    gauss = half * np.dot(_GWEIGHTS, ys)
    return kron, abs(kron - gauss)


def integrate(f: Callable, lower: float, upper: float,
              spec: Optional[QuadratureSpec] = None) -> float:
    """Integrate ``f`` over [lower, upper] with Gauss-Kronrod 7/15 panels.

    ``f`` may be vectorized (called with an array of nodes) or scalar.
    Raises QuadratureError if the error estimate stays above
    ``max(atol, rtol*|result|)`` and NonFiniteError on NaN/inf samples.
    Reversed limits flip the sign.
    """
    spec = spec or QuadratureSpec()
    lower, upper = float(lower), float(upper)
    if not (math.isfinite(lower) and math.isfinite(upper)):
        raise DomainError("integration limits must be finite")
    if lower == upper:
        return 0.0
    if lower > upper:
        return -integrate(f, upper, lower, spec)

    if spec.method == "fixed-panel":
        edges = np.linspace(lower, upper, spec.max_subdivisions + 1)
        parts = [_gk15(f, a, b) for a, b in zip(edges[:-1], edges[1:])]
        total = math.fsum(p[0] for p in parts)
        err = sum(p[1] for p in parts)
        if err > max(spec.atol, spec.rtol * abs(total)):
            raise QuadratureError(
                f"fixed-panel quadrature error {err:.3e} above tolerance")
        return total

    val, err = _gk15(f, lower, upper)
    heap = [(-err, lower, upper, val)]
    total, total_err = val, err
    for _ in range(spec.max_subdivisions):
        if total_err <= max(spec.atol, spec.rtol * abs(total)):
            return float(total)
        neg_err, a, b, v = heapq.heappop(heap)
        mid = 0.5 * (a + b)
        v1, e1 = _gk15(f, a, mid)
        v2, e2 = _gk15(f, mid, b)
        heapq.heappush(heap, (-e1, a, mid, v1))
        heapq.heappush(heap, (-e2, mid, b, v2))
        total = math.fsum(item[3] for item in heap)
        total_err = sum(-item[0] for item in heap)
    if total_err <= max(spec.atol, spec.rtol * abs(total)):
        return float(total)
    raise QuadratureError(
        f"tolerance not met on [{lower}, {upper}] after "
        f"{spec.max_subdivisions} subdivisions (error estimate {total_err:.3e})")


# ---------------------------------------------------------------------------
# finite differences


def _stencil(f, x, order, h):
    if order == 1:
        pts = (x + h, x - h)
        fp, fm = (np.asarray(f(p), dtype=float) for p in pts)
        vals = (fp, fm)
        est = (fp - fm) / (2 * h)
    elif order == 2:
        fp, f0, fm = (np.asarray(f(p), dtype=float) for p in (x + h, x, x - h))
        vals = (fp, f0, fm)
        est = (fp - 2 * f0 + fm) / h**2
    else:
        f2p, fp, fm, f2m = (np.asarray(f(p), dtype=float)
                            for p in (x + 2 * h, x + h, x - h, x - 2 * h))
        vals = (f2p, fp, fm, f2m)
        est = (f2p - 2 * fp + 2 * fm - f2m) / (2 * h**3)
    for v in vals:
        if not np.all(np.isfinite(v)):
            raise NonFiniteError(f"non-finite stencil sample near x={x!r}")
    return est


def fd_derivative(f: Callable, x, order: int = 1, h: Optional[float] = None):
    """Central finite-difference derivative with one Richardson pass.

    The default step is ``eps**p * (|x| + 1)`` with p = 1/3, 1/6, 1/7 for
    orders 1, 2, 3.  ``x`` may be an array if ``f`` is vectorized.
    """
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    x = np.asarray(x, dtype=float)
    if h is None:
        h = _FD_STEP_BASE[order] * (np.abs(x) + 1.0)
    elif np.any(np.asarray(h) <= 0):
        raise ValueError("finite-difference step must be positive")
    coarse = _stencil(f, x, order, h)
    fine = _stencil(f, x, order, h / 2)
    out = (4.0 * fine - coarse) / 3.0
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# ODE integration


@dataclass
class ODEControls:
    """Tolerances and termination detectors for :func:`ode_solve`.

    ``stall_speed``/``stall_time``: terminate with ``stalled`` once the norm of
    the derivative (restricted to ``stall_components``) stays below
    ``stall_speed`` for longer than ``stall_time``.  ``guard(t, y)`` returning
    False terminates with ``singular-step``.  ``method`` picks the stepper
    (DOP853 by default; Radau or LSODA for stiff problems).
    """
    rtol: float = DEFAULT_ODE_RTOL
    atol: float = DEFAULT_ODE_ATOL
    max_step: float = np.inf
    first_step: Optional[float] = None
    t_eval: Optional[Sequence[float]] = None
    stall_speed: Optional[float] = None
    stall_time: float = 0.0
    stall_components: Optional[Sequence[int]] = None
    guard: Optional[Callable[[float, np.ndarray], bool]] = None
    max_steps: int = 1_000_000
    method: Optional[str] = None


@dataclass
class ODEResult:
    t: np.ndarray
    y: np.ndarray
    termination: str
    location: Optional[np.ndarray] = None
    message: str = ""
    nfev: int = 0
    n_steps: int = 0
    step_sizes: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def stalled(self) -> bool:
        return self.termination == "stalled"


def ode_solve(rhs: Callable, initial, t_span, controls: Optional[ODEControls] = None
              ) -> ODEResult:
    """Integrate ``y' = rhs(t, y)`` with an adaptive embedded Runge-Kutta method.

    Samples are every accepted step plus ``controls.t_eval``.  Termination
    tags: ``span-complete``, ``stalled``, ``singular-step``, ``domain-exit``
    (rhs raised DomainError).  Step-size underflow is reported as
    ``singular-step`` with its location, and logged.
    """
    c = controls or ODEControls()
    t0, t1 = map(float, t_span)
    y0 = np.atleast_1d(np.asarray(initial, dtype=float))
    f0 = np.atleast_1d(np.asarray(rhs(t0, y0), dtype=float))
    if not np.all(np.isfinite(f0)):
        raise NonFiniteError("rhs is not finite at the initial state")

    def fun(t, y):
        out = np.atleast_1d(np.asarray(rhs(t, y), dtype=float))
        if not np.all(np.isfinite(out)):
            raise NonFiniteError(f"rhs not finite at t={t}, y={y}")
        return out

    kwargs = dict(rtol=c.rtol, atol=c.atol, max_step=c.max_step)
    if c.first_step is not None:
        kwargs["first_step"] = c.first_step
    method = _ODE_METHODS.get(c.method or "DOP853")
    if method is None:
        raise ValueError(f"unknown ODE method {c.method!r}; choose from {sorted(_ODE_METHODS)}")
    solver = method(fun, t0, y0, t1, **kwargs)

    comps = slice(None) if c.stall_components is None else list(c.stall_components)
    t_eval = np.sort(np.asarray(c.t_eval, dtype=float)) if c.t_eval is not None else np.empty(0)
    eval_idx = 0
    ts, ys = [t0], [y0.copy()]
    steps = []
    termination, message, location = "span-complete", "", None
    slow_since = None
    if c.stall_speed is not None and np.linalg.norm(f0[comps]) < c.stall_speed:
        slow_since = t0

    n_steps = 0
    while solver.status == "running":
        if n_steps >= c.max_steps:
            termination = "singular-step"
            message = f"max_steps={c.max_steps} exhausted at t={solver.t}"
            location = solver.y.copy()
            break
        t_prev = solver.t
        try:
            msg = solver.step()
        except DomainError as exc:
            termination, message, location = "domain-exit", str(exc), solver.y.copy()
            break
        except NonFiniteError as exc:
            termination, message, location = "singular-step", str(exc), solver.y.copy()
            break
        if solver.status == "failed":
            termination = "singular-step"
            location = solver.y.copy()
            message = f"{msg} (t={solver.t}, y={location})"
            log.warning("ode_solve step underflow: %s", message)
            break
        n_steps += 1
        steps.append(solver.t - t_prev)
        if eval_idx < t_eval.size and t_eval[eval_idx] <= solver.t:
            dense = solver.dense_output()
            while eval_idx < t_eval.size and t_eval[eval_idx] <= solver.t:
                te = t_eval[eval_idx]
                if t_prev < te < solver.t:
                    ts.append(te)
                    ys.append(dense(te))
                eval_idx += 1
        ts.append(solver.t)
        ys.append(solver.y.copy())

        if c.guard is not None and not c.guard(solver.t, solver.y):
            termination = "singular-step"
            location = solver.y.copy()
            message = f"singularity guard tripped at t={solver.t}, y={location}"
            break
        if c.stall_speed is not None:
            speed = np.linalg.norm(fun(solver.t, solver.y)[comps])
            if speed < c.stall_speed:
                if slow_since is None:
                    slow_since = solver.t
                elif solver.t - slow_since > c.stall_time:
                    termination = "stalled"
                    location = solver.y.copy()
                    message = f"speed below {c.stall_speed:.3e} since t={slow_since}"
                    break
            else:
                slow_since = None

    return ODEResult(
        t=np.asarray(ts), y=np.asarray(ys), termination=termination,
        location=location, message=message, nfev=solver.nfev, n_steps=n_steps,
        step_sizes=np.asarray(steps),
    )
