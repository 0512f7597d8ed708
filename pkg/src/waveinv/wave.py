"""Leapfrog solver for the space-discrete wave equation with potential.

    y_tt − Δ_h y + q y = g    on interior nodes,
    y_0 = g0(t),  y_{N+1} = g1(t),
    y(0) = y0,  y_t(0) = y1.

Trajectories store every time level, boundary slots included, as an array of
shape ``(steps+1, N+2)``.  Diagnostics (energies, boundary trace, multiplier
identity) and the two-component observation are computed from that array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import calculus as dc
from . import timeops
from .calculus import FaceFn, Grid1D, NodeFn
from .errors import ConfigurationError, DimensionError, DivergenceError, ParameterError, PreconditionError

__all__ = [
    "CFL_MAX",
    "TimeGrid",
    "WaveProblem",
    "ContinuousData",
    "Trajectory",
    "ObservationPair",
    "sample_data",
    "solve",
    "energy",
    "energy_series",
    "leapfrog_energy_series",
    "hidden_reg_trace",
    "multiplier_residual",
    "multiplier_terms",
    "observe",
    "observe_array",
    "reference_observation",
    "flux_l2",
    "tych_l2",
]

CFL_MAX = 0.5
COMPAT_TOL = 1e-10


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time levels ``t_n = t0 + n dt``, ``n = 0..steps``.

    ``cfl`` is the ratio dt/h for the spatial grid the time grid was built for
    (``nan`` when built without reference to a grid).
    """

    dt: float
    steps: int
    cfl: float = float("nan")
    t0: float = 0.0

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ConfigurationError(f"steps must be a positive integer, got {self.steps}")

    @classmethod
    def for_grid(cls, grid: Grid1D, T: float, cfl: float = CFL_MAX, t0: float = 0.0) -> "TimeGrid":
        """Smallest number of steps covering a window of length T with dt ≤ cfl·h."""
        if T <= 0:
            raise ConfigurationError(f"T must be positive, got {T}")
        steps = max(2, math.ceil(T / (cfl * grid.h) - 1e-9))
        dt = T / steps
        return cls(dt=dt, steps=steps, cfl=dt / grid.h, t0=t0)

    @classmethod
    def symmetric(cls, grid: Grid1D, T: float, cfl: float = CFL_MAX) -> "TimeGrid":
        """Grid over [−T, T]."""
        return cls.for_grid(grid, 2.0 * T, cfl=cfl, t0=-T)

    @property
    def T(self) -> float:
        return self.t0 + self.steps * self.dt

    @property
    def length(self) -> float:
        return self.steps * self.dt

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.steps + 1)


@dataclass(frozen=True, eq=False)
class WaveProblem:
    """Discrete data of one wave problem on a given space and time grid.

    ``g`` has shape (steps+1, N+2) (boundary columns ignored); ``g0`` and ``g1``
    have steps+1 entries.
    """

    grid: Grid1D
    q: NodeFn
    g: np.ndarray
    g0: np.ndarray
    g1: np.ndarray
    y0: NodeFn
    y1: NodeFn
    T: float

    def __post_init__(self):
        N = self.grid.N
        for name in ("q", "y0", "y1"):
            if getattr(self, name).grid != self.grid:
                raise DimensionError(f"{name} lives on a different grid")
        g = np.asarray(self.g, dtype=float)
        g0 = np.asarray(self.g0, dtype=float).ravel()
        g1 = np.asarray(self.g1, dtype=float).ravel()
        if g.ndim != 2 or g.shape[1] != N + 2:
            raise DimensionError(f"g must have shape (steps+1, {N + 2}), got {g.shape}")
        if g0.shape != (g.shape[0],) or g1.shape != (g.shape[0],):
            raise DimensionError("g0, g1 must have one entry per time level of g")
        scale = 1.0 + max(abs(g0[0]), abs(g1[0]))
        if abs(self.y0.values[0] - g0[0]) > COMPAT_TOL * scale or abs(self.y0.values[-1] - g1[0]) > COMPAT_TOL * scale:
            raise PreconditionError("y0 boundary values must equal g0(0), g1(0)")
        for name, arr in (("g", g), ("g0", g0), ("g1", g1)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def bounded(cls, m: float, **kwargs) -> "WaveProblem":
        """Constructor enforcing ‖q‖_∞ ≤ m on the interior nodes."""
        prob = cls(**kwargs)
        qmax = float(np.max(np.abs(prob.q.interior)))
        if qmax > m:
            raise ParameterError(f"‖q‖_∞ = {qmax:.6g} exceeds the bound m = {m}")
        return prob

    @property
    def n_levels(self) -> int:
        return self.g.shape[0]

    def with_q(self, q) -> "WaveProblem":
        qv = q if isinstance(q, NodeFn) else NodeFn(self.grid, q)
        return WaveProblem(self.grid, qv, self.g, self.g0, self.g1, self.y0, self.y1, self.T)


def _call_t(func, t):
    return np.broadcast_to(np.asarray(func(t), dtype=float), t.shape).copy()


@dataclass(frozen=True)
class ContinuousData:
    """Continuous initial, source and boundary data.

    ``g`` is called as ``g(t, x)`` with broadcastable arrays.  Unset members
    default to zero.
    """

    y0: Optional[Callable] = None
    y1: Optional[Callable] = None
    g: Optional[Callable] = None
    g0: Optional[Callable] = None
    g1: Optional[Callable] = None

    def sample(self, grid: Grid1D, tg: TimeGrid, q=None) -> WaveProblem:
        return sample_data(self.y0, self.y1, self.g, self.g0, self.g1, grid, tg, q=q)


def _zero(*args):
    return 0.0


def sample_data(y0, y1, g, g0, g1, grid: Grid1D, tg: TimeGrid, q=None) -> WaveProblem:
    """Sample continuous data at the nodes and time levels.

    ``y0``'s boundary slots are overwritten with g0(0), g1(0) after checking
    that they agree within 1e-10.  ``q`` may be a NodeFn, an array of length
    N+2 or a function of x (default zero).
    """
    y0, y1, g, g0, g1 = (f if f is not None else _zero for f in (y0, y1, g, g0, g1))
    x, t = grid.x, tg.t
    y0v = np.broadcast_to(np.asarray(y0(x), dtype=float), x.shape).copy()
    y1v = np.broadcast_to(np.asarray(y1(x), dtype=float), x.shape).copy()
    g0v, g1v = _call_t(g0, t), _call_t(g1, t)
    gv = np.broadcast_to(np.asarray(g(t[:, None], x[None, :]), dtype=float), (t.size, x.size)).copy()
    for slot, target in ((0, g0v[0]), (-1, g1v[0])):
        if abs(y0v[slot] - target) > COMPAT_TOL * (1.0 + abs(target)):
            raise PreconditionError(
                f"initial datum {y0v[slot]:.6g} at x={x[slot]:g} incompatible with boundary datum {target:.6g}"
            )
        y0v[slot] = target
    if q is None:
        qv = np.zeros_like(x)
    elif isinstance(q, NodeFn):
        qv = q.values
    elif callable(q):
        qv = np.broadcast_to(np.asarray(q(x), dtype=float), x.shape)
    else:
        qv = np.asarray(q, dtype=float)
    return WaveProblem(
        grid=grid,
        q=NodeFn(grid, qv),
        g=gv,
        g0=g0v,
        g1=g1v,
        y0=NodeFn(grid, y0v),
        y1=NodeFn(grid, y1v),
        T=tg.length,
    )


@dataclass(frozen=True, eq=False)
class Trajectory:
    problem: WaveProblem
    tg: TimeGrid
    y: np.ndarray = field(repr=False)

    def __post_init__(self):
        y = np.asarray(self.y)
        y.flags.writeable = False
        object.__setattr__(self, "y", y)

    @property
    def grid(self) -> Grid1D:
        return self.problem.grid

    def at(self, n: int) -> NodeFn:
        return NodeFn(self.grid, self.y[n])


def solve(problem: WaveProblem, tg: TimeGrid) -> Trajectory:
    """Leapfrog time stepping with a second-order Taylor start."""
    grid = problem.grid
    h, N = grid.h, grid.N
    if problem.n_levels != tg.steps + 1:
        raise DimensionError(
            f"problem data has {problem.n_levels} time levels, time grid has {tg.steps + 1}"
        )
    if tg.dt > CFL_MAX * h * (1.0 + 1e-9):
        raise ConfigurationError(f"dt = {tg.dt:.6g} violates dt ≤ {CFL_MAX}·h = {CFL_MAX * h:.6g}")
    y = leapfrog(problem.q.values, problem.g, problem.g0, problem.g1,
                 problem.y0.values, problem.y1.values, h, tg.dt)
    return Trajectory(problem, tg, y)


def leapfrog(q, g, g0, g1, y0, y1, h, dt):
    """Array-level leapfrog recursion; returns shape (steps+1, N+2)."""
    S = g.shape[0] - 1
    y = np.empty((S + 1, y0.size))
    y[:, 0] = g0
    y[:, -1] = g1
    qi = q[1:-1]
    c = dt * dt

    def rhs(v, n):
        return (v[2:] - 2.0 * v[1:-1] + v[:-2]) / (h * h) - qi * v[1:-1] + g[n, 1:-1]

    y[0, 1:-1] = y0[1:-1]
    y[1, 1:-1] = y0[1:-1] + dt * y1[1:-1] + 0.5 * c * rhs(y[0], 0)
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(1, S):
            y[n + 1, 1:-1] = 2.0 * y[n, 1:-1] - y[n - 1, 1:-1] + c * rhs(y[n], n)
            if not np.isfinite(y[n + 1, 1:-1]).all():
                raise DivergenceError(n + 1)
    if not np.isfinite(y[1]).all():
        raise DivergenceError(1)
    return y


# ---------------------------------------------------------------------------
# diagnostics


def energy_series(traj: Trajectory) -> np.ndarray:
    """‖∂⁺y‖²_[0,1) + ‖∂_t y‖²_(0,1) + ‖y‖²_(0,1) at every time level."""
    h = traj.grid.h
    y = traj.y
    yt = timeops.d_t(y, traj.tg.dt)
    grad = dc.integrate(np.nan_to_num(dc.d_plus(y, h)) ** 2, h, "left")
    return grad + dc.integrate(yt**2, h, "open") + dc.integrate(y**2, h, "open")


def energy(traj: Trajectory, n: int) -> float:
    return float(energy_series(traj)[n])


def leapfrog_energy_series(traj: Trajectory) -> np.ndarray:
    """Energy of the staggered pairs (y^n, y^{n+1}), n = 0..steps−1.

    ‖(y^{n+1}−y^n)/dt‖²_(0,1) + h Σ_{j=0}^{N} ∂⁺y^{n+1} ∂⁺y^n + h Σ_{j=1}^{N} q y^{n+1} y^n.
    It is exactly invariant under the recursion when g ≡ 0 and the
    boundary data vanish, and positive under the CFL restriction.
    """
    h, dt = traj.grid.h, traj.tg.dt
    y, q = traj.y, traj.problem.q.values
    a, b = y[1:], y[:-1]
    vel = dc.integrate(((a - b) / dt) ** 2, h, "open")
    da, db = np.nan_to_num(dc.d_plus(a, h)), np.nan_to_num(dc.d_plus(b, h))
    return vel + dc.integrate(da * db, h, "left") + dc.integrate(q * a * b, h, "open")


def hidden_reg_trace(traj: Trajectory) -> np.ndarray:
    """(∂⁻y(t_n))_{N+1} for every time level."""
    return (traj.y[:, -1] - traj.y[:, -2]) / traj.grid.h


def multiplier_terms(traj: Trajectory) -> dict:
    """Both sides of the x∂_h-multiplier identity for w = ∂_t y.

    lhs = ½∫|(∂⁻w)_{N+1}|² + (h²/4)∫∫_[0,1)|∂⁺∂_tt y|²
    rhs = [∫ ∂_tt y · x · ∂_h w]_0^T + ½∫∫|∂_tt y|² + ½∫∫_[0,1)|∂⁺w|² − ∫∫ F x ∂_h w,
    with F = ∂_t g − q w the forcing of the differentiated equation.
    """
    grid, tg = traj.grid, traj.tg
    h, dt = grid.h, tg.dt
    x = grid.x
    y = traj.y
    w = timeops.d_t(y, dt)
    z2 = timeops.d_tt(y, dt)
    dw = dc.d_h(w, h)
    dpw = np.nan_to_num(dc.d_plus(w, h))
    dpz2 = np.nan_to_num(dc.d_plus(z2, h))
    F = timeops.d_t(traj.problem.g, dt) - traj.problem.q.values * w

    flux = (w[:, -1] - w[:, -2]) / h
    lhs = 0.5 * timeops.time_integral(flux**2, dt)
    lhs += 0.25 * h * h * timeops.time_integral(dc.integrate(dpz2**2, h, "left"), dt)

    cross = dc.integrate(np.nan_to_num(z2 * x * dw), h, "open")
    rhs = cross[-1] - cross[0]
    rhs += 0.5 * timeops.time_integral(dc.integrate(z2**2, h, "open"), dt)
    rhs += 0.5 * timeops.time_integral(dc.integrate(dpw**2, h, "left"), dt)
    rhs -= timeops.time_integral(dc.integrate(np.nan_to_num(F * x * dw), h, "open"), dt)
    return {"lhs": float(lhs), "rhs": float(rhs)}


def multiplier_residual(traj: Trajectory) -> float:
    t = multiplier_terms(traj)
    lhs, rhs = t["lhs"], t["rhs"]
    if lhs == 0.0 and rhs == 0.0:
        return 0.0
    return abs(lhs - rhs) / (abs(lhs) + abs(rhs) + 1e-300)


# ---------------------------------------------------------------------------
# observation


@dataclass(frozen=True, eq=False)
class ObservationPair:
    """Boundary component ``flux_dt`` (steps+1,) and h-scaled field ``tych`` (steps+1, N+1)."""

    flux_dt: np.ndarray
    tych: np.ndarray
    dt: float
    h: float

    def __post_init__(self):
        flux = np.asarray(self.flux_dt, dtype=float)
        tych = np.asarray(self.tych, dtype=float)
        if tych.ndim != 2 or tych.shape[0] != flux.shape[0]:
            raise DimensionError("tych must have one row per time level of flux_dt")
        for name, arr in (("flux_dt", flux), ("tych", tych)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def tych_face(self, n: int, grid: Grid1D) -> FaceFn:
        return FaceFn(grid, self.tych[n], shift=0)

    @property
    def flux_norm(self) -> float:
        return flux_l2(self.flux_dt, self.dt)

    @property
    def tych_norm(self) -> float:
        return tych_l2(self.tych, self.dt, self.h)

    def __sub__(self, other: "ObservationPair") -> "ObservationPair":
        if self.tych.shape != other.tych.shape:
            raise DimensionError("observations live on different grids")
        return ObservationPair(self.flux_dt - other.flux_dt, self.tych - other.tych, self.dt, self.h)


def flux_l2(series, dt) -> float:
    return float(np.sqrt(timeops.time_integral(np.asarray(series) ** 2, dt)))


def tych_l2(field_, dt, h) -> float:
    """L²(0,T; L²_h[0,1)) norm of a face field (rows = time levels)."""
    return float(np.sqrt(timeops.time_integral(h * np.sum(np.asarray(field_) ** 2, axis=-1), dt)))


def observe_array(y, h, dt):
    """(flux_dt, tych) from a trajectory array."""
    trace = (y[:, -1] - y[:, -2]) / h
    flux_dt = timeops.d_t(trace, dt)
    ytt = timeops.d_tt(y, dt)
    tych = ytt[:, 1:] - ytt[:, :-1]  # h·∂⁺ of ∂_tt y on faces 0..N
    return flux_dt, tych


def observe(traj: Trajectory) -> ObservationPair:
    if traj.tg.steps < 2:
        raise PreconditionError("observation needs at least 2 time steps")
    flux_dt, tych = observe_array(traj.y, traj.grid.h, traj.tg.dt)
    return ObservationPair(flux_dt, tych, traj.tg.dt, traj.grid.h)


def reference_observation(p, data: ContinuousData, N_ref: int, grid: Grid1D, tg: TimeGrid,
                          n_max: Optional[int] = None) -> ObservationPair:
    """Fine-grid surrogate of the continuous observation, resampled to ``tg``.

    ``p`` is a function of x.  The pair has a zero h-scaled component.
    """
    n_max = grid.N if n_max is None else n_max
    if N_ref < 8 * n_max:
        raise ConfigurationError(f"N_ref = {N_ref} must be at least 8 × {n_max}")
    ref_grid = Grid1D(N_ref)
    ref_tg = TimeGrid.for_grid(ref_grid, tg.length, cfl=CFL_MAX, t0=tg.t0)
    traj = solve(data.sample(ref_grid, ref_tg, q=p), ref_tg)
    flux_ref = timeops.d_t(hidden_reg_trace(traj), ref_tg.dt)
    flux = np.interp(tg.t, ref_tg.t, flux_ref)
    return ObservationPair(flux, np.zeros((tg.steps + 1, grid.N + 1)), tg.dt, grid.h)
