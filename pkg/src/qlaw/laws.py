"""One-dimensional quantum laws of motion and trajectory families.

Three velocity rules built on a ReducedAction1D:

* EnergyLaw:    (1/2) S0' xdot + V = E      ->  xdot = 2(E - V)/S0'
* BohmForm:     m xdot = S0'
* FloydJacobi:  dt/dx = dP/dE with P(x; E) = S0'(x; E), (a, b) held fixed
"""

from __future__ import annotations

import enum
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import minimize_scalar

from .action import ReducedAction1D, ds0_dx
from .numerics import ODEControls, fd_derivative, integrate, ode_solve

log = logging.getLogger(__name__)

STALL_SPEED_FACTOR = 1e-8
STALL_TIME_FACTOR = 1e3
NODE_TOL_FACTOR = 1e-3
# family members are sampled this many times per characteristic time so the
# cubic Hermite interpolant used for node search stays well below node tolerance
FAMILY_SAMPLES_PER_TIME = 20


class Law(str, enum.Enum):
    ENERGY = "EnergyLaw"
    BOHM = "BohmForm"
    FLOYD = "FloydJacobi"


class UnsupportedFamilyError(ValueError):
    """Floyd's law needs an analytic energy family of solution pairs."""


@dataclass(frozen=True)
class LawOfMotion:
    tag: Law
    action: ReducedAction1D
    dE: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "tag", Law(self.tag))

    def velocity(self, x):
        if self.tag is Law.ENERGY:
            return velocity_energy_law(self.action, x)
        if self.tag is Law.BOHM:
            return velocity_bohm_form(self.action, x)
        return 1.0 / dt_dx_floyd(self.action, x, self.dE)


def characteristic_scales(action: ReducedAction1D):
    """(length, velocity, time): hbar/sqrt(2m|E|), sqrt(2|E|/m), hbar/2|E|."""
    E, m, hbar = abs(action.energy), action.mass, action.hbar
    length = hbar / math.sqrt(2 * m * E)
    speed = math.sqrt(2 * E / m)
    return length, speed, length / speed


def velocity_energy_law(action: ReducedAction1D, x):
    return 2.0 * (action.energy - np.asarray(action.potential(x))) / ds0_dx(action, x)


def velocity_bohm_form(action: ReducedAction1D, x):
    return ds0_dx(action, x) / action.mass


def dt_dx_floyd(action: ReducedAction1D, x, dE: Optional[float] = None):
    """dP/dE by central differences in E (one Richardson pass)."""
    family = action.pair.family
    if family is None:
        raise UnsupportedFamilyError(
            "Floyd's law needs an analytic E-family; tabulated/numeric pairs are unsupported")
    E = action.energy
    if dE is None:
        dE = 1e-3 * abs(E)

    def momentum(e):
        shifted = ReducedAction1D(family(float(e)), action.a, action.b, action.lam)
        return ds0_dx(shifted, x)
    return fd_derivative(momentum, E, 1, dE)


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    termination: str
    law: str
    a: float
    b: float
    energy: float
    stall_location: Optional[float] = None
    message: str = ""
    nfev: int = 0
    n_steps: int = 0
    step_min: float = float("nan")
    step_max: float = float("nan")
    tau: Optional[np.ndarray] = None
    extra: dict = field(default_factory=dict)

    @property
    def stalled(self) -> bool:
        return self.termination == "stalled"

    def metadata(self) -> dict:
        return {
            "termination": self.termination,
            "stall_location": self.stall_location,
            "law": self.law, "a": self.a, "b": self.b, "E": self.energy,
            "message": self.message, "nfev": self.nfev, "n_steps": self.n_steps,
            "step_min": self.step_min, "step_max": self.step_max, **self.extra,
        }


def integrate_trajectory(law: LawOfMotion, x0: float, t_span, controls: Optional[ODEControls] = None,
                         *, detect_stall: bool = True) -> Trajectory:
    """Integrate xdot = v(x) from ``x0``.

    Unless ``controls`` already sets them, the stall detector uses
    v_stall = 1e-8 * sqrt(2|E|/m) held for 1e3 characteristic times.
    """
    act = law.action
    _, speed, tchar = characteristic_scales(act)
    c = controls or ODEControls()
    if c.method is None and law.tag is Law.ENERGY:
        # the energy law is stiff next to turning points: rate 2V'/S0' there
        c = replace(c, method="Radau", atol=min(c.atol, 1e-12))
    if detect_stall and c.stall_speed is None:
        c = replace(c, stall_speed=STALL_SPEED_FACTOR * speed, stall_time=STALL_TIME_FACTOR * tchar)
    elif not detect_stall:
        c = replace(c, stall_speed=None)
    t0 = float(t_span[0])
    base = dict(law=law.tag.value, a=act.a, b=act.b, energy=act.energy)

    v0 = float(law.velocity(x0))
    if law.tag is Law.ENERGY and v0 == 0.0:
        return Trajectory(np.array([t0]), np.array([float(x0)]), np.array([0.0]),
                          "stalled", stall_location=float(x0),
                          message="started on a turning point", **base)

    res = ode_solve(lambda t, y: [law.velocity(y[0])], [x0], t_span, c)
    xs = res.y[:, 0]
    vs = np.array([float(law.velocity(x)) for x in xs])
    steps = res.step_sizes
    return Trajectory(
        res.t, xs, vs, res.termination,
        stall_location=float(res.location[0]) if res.stalled else None,
        message=res.message, nfev=res.nfev, n_steps=res.n_steps,
        step_min=float(steps.min()) if steps.size else float("nan"),
        step_max=float(steps.max()) if steps.size else float("nan"),
        **base,
    )


def floyd_time(action: ReducedAction1D, x0: float, xs: Sequence[float], dE: Optional[float] = None):
    """t(x) - t(x0) = integral of dt/dx from Floyd's rule at each of ``xs``."""
    def rate(x):
        return np.array([dt_dx_floyd(action, xi, dE) for xi in np.atleast_1d(x)])
    pts = np.asarray(xs, dtype=float)
    order = np.argsort(pts)
    out = np.empty_like(pts)
    prev_x, acc = float(x0), 0.0
    # accumulate over sorted points so each quadrature covers a short span
    for i in order[np.searchsorted(pts[order], x0):]:
        acc += integrate(rate, prev_x, pts[i])
        out[i], prev_x = acc, pts[i]
    prev_x, acc = float(x0), 0.0
    for i in order[:np.searchsorted(pts[order], x0)][::-1]:
        acc += integrate(rate, prev_x, pts[i])
        out[i], prev_x = acc, pts[i]
    return out


def energy_law_residual(traj: Trajectory, action: ReducedAction1D):
    """(1/2) S0' xdot + V - E re-evaluated at every sample, xdot from the samples' law."""
    x = traj.x
    return 0.5 * ds0_dx(action, x) * traj.v + action.potential(x) - action.energy


# ---------------------------------------------------------------------------
# trajectory families and nodes


@dataclass
class TrajectoryFamily:
    members: list
    constants: list
    x0: float
    energy: float
    mass: float
    hbar: float

    def __post_init__(self):
        energies = {m.energy for m in self.members}
        if len(energies) > 1:
            raise ValueError("family members must share E")


def build_family(make_action: Callable[[float, float], ReducedAction1D], constants: Sequence,
                 x0: float, t_span, law: Law = Law.ENERGY, controls: Optional[ODEControls] = None,
                 workers: int = 4) -> TrajectoryFamily:
    """Integrate one member per (a, b); results ordered by sorted (a, b)."""
    consts = sorted((float(a), float(b)) for a, b in constants)
    if controls is None:
        _, _, tchar = characteristic_scales(make_action(*consts[0]))
        t0, t1 = map(float, t_span)
        n = min(200_000, max(2, math.ceil(FAMILY_SAMPLES_PER_TIME * abs(t1 - t0) / tchar) + 1))
        controls = ODEControls(method="DOP853", rtol=1e-11, atol=1e-12,
                               t_eval=np.linspace(t0, t1, n))

    def run(ab):
        act = make_action(*ab)
        return integrate_trajectory(LawOfMotion(law, act), x0, t_span, controls, detect_stall=False)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        members = list(pool.map(run, consts))
    first = make_action(*consts[0])
    return TrajectoryFamily(members, consts, float(x0), first.energy, first.mass, first.hbar)


def _aligned_spline(traj: Trajectory, x0: float):
    """Cubic Hermite x(t) with t = 0 at the first upward crossing of x0, or None."""
    x, t, v = traj.x, traj.t, traj.v
    if x[0] == x0 and v[0] > 0:
        tc = t[0]
    else:
        up = np.nonzero((x[:-1] < x0) & (x[1:] >= x0))[0]
        if up.size == 0:
            return None
        i = up[0]
        tc = t[i] + (x0 - x[i]) * (t[i + 1] - t[i]) / (x[i + 1] - x[i])
    keep = np.concatenate([[True], np.diff(t) > 0])
    return CubicHermiteSpline(t[keep] - tc, x[keep], v[keep]), t[keep][-1] - tc


@dataclass(frozen=True)
class Node:
    t: float
    x: float
    spread: float


def node_events(family: TrajectoryFamily, tol: Optional[float] = None, samples: int = 20000):
    """Common-time points where all members lie within ``tol`` of each other."""
    if len(family.members) < 3:
        raise ValueError("node detection needs at least 3 family members")
    debroglie = 2 * math.pi * family.hbar / math.sqrt(2 * family.mass * abs(family.energy))
    tol = NODE_TOL_FACTOR * debroglie if tol is None else tol
    splines = [_aligned_spline(m, family.x0) for m in family.members]
    if any(s is None for s in splines):
        return []
    t_end = min(s[1] for s in splines)
    if t_end <= 0:
        return []
    ts = np.linspace(0.0, t_end, samples)
    xs = np.array([s[0](ts) for s in splines])
    spread = xs.max(axis=0) - xs.min(axis=0)
    if np.all(spread <= 1e-12 * debroglie):
        return [Node(float(t), float(x), 0.0) for t, x in zip(ts, xs[0])]

    def spread_at(t):
        vals = [s[0](t) for s in splines]
        return max(vals) - min(vals)

    nodes = []
    mask = spread <= tol
    edges = np.flatnonzero(np.diff(np.concatenate([[0], mask.astype(int), [0]])))
    for start, stop in zip(edges[::2], edges[1::2]):
        i = start + int(np.argmin(spread[start:stop]))
        lo, hi = ts[max(i - 1, 0)], ts[min(i + 1, ts.size - 1)]
        if hi > lo:
            opt = minimize_scalar(spread_at, bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-12 * max(1.0, hi)})
            tn = float(opt.x)
        else:
            tn = float(ts[i])
        sp = float(spread_at(tn))
        nodes.append(Node(tn, float(np.mean([s[0](tn) for s in splines])), sp))
    return nodes


def detect_nodes(family: TrajectoryFamily, tol: Optional[float] = None) -> list:
    """Positions through which every member passes at a common time (within ``tol``).

    Empirical definition: time origins aligned at each member's first upward
    crossing of ``family.x0``; no theorem is asserted.
    """
    return [n.x for n in node_events(family, tol)]


def node_report(family: TrajectoryFamily, tol: Optional[float] = None) -> dict:
    """Node list plus the spacing / de Broglie wavelength comparison (exploratory)."""
    nodes = node_events(family, tol)
    debroglie = 2 * math.pi * family.hbar / math.sqrt(2 * family.mass * abs(family.energy))
    xs = [n.x for n in nodes]
    spacing = float(np.mean(np.diff(xs))) if len(xs) > 1 else None
    report = {
        "x0": family.x0, "E": family.energy,
        "constants": [list(c) for c in family.constants],
        "nodes": [{"t": n.t, "x": n.x, "spread": n.spread} for n in nodes],
        "de_broglie_wavelength": debroglie,
        "mean_node_spacing": spacing,
        "spacing_over_wavelength": spacing / debroglie if spacing else None,
    }
    log.info("node spacing %s vs de Broglie wavelength %.6g", spacing, debroglie)
    return report


# ---------------------------------------------------------------------------
# output


def write_trajectory_csv(traj: Trajectory, path, header_comment: Optional[str] = None,
                         extra_meta: Optional[dict] = None) -> Path:
    """CSV with columns t, x, v, law, a, b, E (plus tau when present).

    Termination and stall data go to a JSON sidecar named ``<path>.json``.
    """
    path = Path(path)
    cols = ["t", "x", "v"] + (["tau"] if traj.tau is not None else []) + ["law", "a", "b", "E"]
    lines = [f"# {header_comment}"] if header_comment else []
    lines.append(",".join(cols))
    tail = ",".join([traj.law, repr(float(traj.a)), repr(float(traj.b)), repr(float(traj.energy))])
    for i in range(traj.t.size):
        nums = [traj.t[i], traj.x[i], traj.v[i]] + ([traj.tau[i]] if traj.tau is not None else [])
        lines.append(",".join(repr(float(n)) for n in nums) + "," + tail)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    meta = {**traj.metadata(), **(extra_meta or {})}
    sidecar = path.with_suffix(path.suffix + ".json")
    sidecar.write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path
