"""Inverse problems: source and potential stability ratios, misfit, adjoint gradient, reconstruction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np
from scipy import fft, sparse

from . import calculus as dc
from . import timeops
from .calculus import Grid1D, NodeFn
from .carleman import WeightParams
from .errors import ConfigurationError, ParameterError, PreconditionError
from .wave import (
    ObservationPair,
    TimeGrid,
    Trajectory,
    WaveProblem,
    flux_l2,
    leapfrog,
    observe,
    observe_array,
    solve,
    tych_l2,
)

__all__ = [
    "SourceSetup",
    "StabilityReport",
    "ReconConfig",
    "ReconResult",
    "FilterReport",
    "solve_source_problem",
    "source_stability",
    "potential_stability",
    "ForwardModel",
    "misfit_J",
    "grad_J",
    "reconstruct",
    "filtering_check",
    "filter_modes",
    "sine_filter",
]


@dataclass(frozen=True, eq=False)
class SourceSetup:
    """Source f⊙R(t) with potential q; R has shape (steps+1, N+2)."""

    f: NodeFn
    R: np.ndarray
    q: NodeFn
    m: float
    K: float
    r: float

    @classmethod
    def build(cls, f: NodeFn, R, q: NodeFn, tg: TimeGrid, m: float = math.inf) -> "SourceSetup":
        R = np.asarray(R, dtype=float)
        grid = f.grid
        if R.shape != (tg.steps + 1, grid.N + 2):
            raise PreconditionError(f"R must have shape {(tg.steps + 1, grid.N + 2)}, got {R.shape}")
        qmax = float(np.max(np.abs(q.interior)))
        if qmax > m:
            raise ParameterError(f"‖q‖_∞ = {qmax:.6g} exceeds m = {m}")
        Ri = R[:, 1:-1]
        r = float(np.min(np.abs(Ri[0])))
        if not r > 0.0:
            raise PreconditionError("inf_j |R_j(0)| must be positive")
        sup = np.max(np.abs(Ri), axis=1)
        sup_t = np.max(np.abs(timeops.d_t(Ri, tg.dt)), axis=1)
        K = float(np.sqrt(timeops.time_integral(sup**2 + sup_t**2, tg.dt)))
        R.flags.writeable = False
        return cls(f, R, q, m, K, r)

    @property
    def grid(self) -> Grid1D:
        return self.f.grid


def _source_problem(setup: SourceSetup, tg: TimeGrid) -> WaveProblem:
    grid = setup.grid
    zeros_t = np.zeros(tg.steps + 1)
    g = setup.f.values[None, :] * setup.R
    g[:, 0] = g[:, -1] = 0.0
    return WaveProblem(grid, setup.q, g, zeros_t, zeros_t, grid.zeros(), grid.zeros(), tg.length)


def solve_source_problem(setup: SourceSetup, tg: TimeGrid) -> Trajectory:
    """u_tt − Δ_h u + q u = f R with zero initial and boundary data."""
    return solve(_source_problem(setup, tg), tg)


@dataclass(frozen=True)
class StabilityReport:
    N: int
    h: float
    lhs: float
    flux_term: float
    tych_term: float
    ratio_direct: float
    ratio_inverse: float
    ratio_flux_only: float
    degenerate: bool
    params: dict = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        return self.ratio_inverse


def _report(grid: Grid1D, lhs: float, obs: ObservationPair, params: Optional[WeightParams]) -> StabilityReport:
    flux, tych = obs.flux_norm, obs.tych_norm
    den = flux + tych
    snap = asdict(params) if params is not None else {}
    if lhs == 0.0 or den == 0.0:
        return StabilityReport(grid.N, grid.h, lhs, flux, tych, math.nan, math.nan, math.nan, True, snap)
    return StabilityReport(
        grid.N, grid.h, lhs, flux, tych, den / lhs, lhs / den,
        lhs / flux if flux > 0 else math.inf, False, snap,
    )


def _check_inverse_params(params: Optional[WeightParams], tg: TimeGrid):
    if params is None:
        return
    if params.mode != "inverse":
        raise ConfigurationError("stability experiments need inverse-mode weight parameters")
    if not math.isclose(params.T, tg.length, rel_tol=1e-9):
        raise ConfigurationError(f"time grid length {tg.length} differs from T = {params.T}")


def source_stability(setup: SourceSetup, tg: TimeGrid, params: Optional[WeightParams] = None) -> StabilityReport:
    """‖f‖_{L²_h} against the two observation terms of the source problem."""
    _check_inverse_params(params, tg)
    traj = solve_source_problem(setup, tg)
    lhs = dc.norm(setup.f, 2, "open")
    return _report(setup.grid, lhs, observe(traj), params)


def potential_stability(p: NodeFn, q: NodeFn, problem: WaveProblem, tg: TimeGrid,
                        params: Optional[WeightParams] = None, m: float = math.inf,
                        r: Optional[float] = None) -> StabilityReport:
    """‖q − p‖_{L²_h} against the observation of y[q] − y[p] (``problem`` supplies the shared data)."""
    _check_inverse_params(params, tg)
    for name, pot in (("p", p), ("q", q)):
        if np.max(np.abs(pot.interior)) > m:
            raise ParameterError(f"‖{name}‖_∞ exceeds m = {m}")
    y0 = problem.y0.interior
    inf_y0 = float(np.min(np.abs(y0)))
    if not inf_y0 > 0.0 or (r is not None and inf_y0 < r):
        raise PreconditionError(
            f"positivity assumption violated: inf_j |y0_j| = {inf_y0:.6g}" + (f" < r = {r}" if r is not None else "")
        )
    yp = solve(problem.with_q(p), tg)
    yq = solve(problem.with_q(q), tg)
    diff = Trajectory(problem.with_q(q), tg, yq.y - yp.y)
    lhs = dc.norm(q - p, 2, "open")
    return _report(problem.grid, lhs, observe(diff), params)


# ---------------------------------------------------------------------------
# misfit and adjoint gradient


@dataclass(frozen=True)
class ReconConfig:
    m: float = 5.0
    tych_weight: float = 1.0
    max_iter: int = 500
    step_init: float = 0.1
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    max_backtracks: int = 40
    grad_tol: float = 1e-10
    misfit_tol: float = 0.0
    filtering_delta: Optional[float] = None

    def __post_init__(self):
        if not self.m > 0:
            raise ConfigurationError("m must be positive")
        if self.tych_weight < 0:
            raise ConfigurationError("tych_weight must be non-negative")
        if not (self.step_init > 0 and 0 < self.armijo_c < 1 and 0 < self.armijo_shrink < 1):
            raise ConfigurationError("step parameters must be positive (armijo_c, armijo_shrink in (0,1))")
        if self.max_iter < 0 or self.max_backtracks < 1:
            raise ConfigurationError("max_iter ≥ 0 and max_backtracks ≥ 1 required")
        if self.filtering_delta is not None and not self.filtering_delta > 0:
            raise ConfigurationError("filtering_delta must be positive")


class ForwardModel:
    """Potential-to-observation map on a fixed grid, time grid and data set."""

    def __init__(self, problem: WaveProblem, tg: TimeGrid, target: ObservationPair, tych_weight: float = 1.0):
        if target.tych.shape != (tg.steps + 1, problem.grid.N + 1):
            raise ConfigurationError("target observation does not match the grid / time grid")
        self.problem = problem
        self.tg = tg
        self.target = target
        self.tych_weight = float(tych_weight)
        grid = problem.grid
        self.h, self.dt, self.N = grid.h, tg.dt, grid.N
        n_t = tg.steps + 1
        self.w = timeops.trapezoid_weights(n_t, tg.dt)
        self.Dt = timeops.dt_matrix(n_t, tg.dt)
        self.Dtt = timeops.dtt_matrix(n_t, tg.dt)
        main = np.full(self.N, -2.0)
        off = np.ones(self.N - 1)
        self.K = sparse.diags([off, main, off], [-1, 0, 1], format="csr") / self.h**2

    def _q_full(self, q):
        q = q.values if isinstance(q, NodeFn) else np.asarray(q, dtype=float)
        if q.shape == (self.N,):
            q = np.concatenate(([0.0], q, [0.0]))
        return q

    def states(self, q) -> np.ndarray:
        p = self.problem
        return leapfrog(self._q_full(q), p.g, p.g0, p.g1, p.y0.values, p.y1.values, self.h, self.dt)

    def residuals(self, y):
        flux, tych = observe_array(y, self.h, self.dt)
        return flux - self.target.flux_dt, tych - self.target.tych

    def misfit_from_states(self, y) -> float:
        dF, dT = self.residuals(y)
        J = float(np.dot(self.w, dF**2))
        if self.tych_weight:
            J += self.tych_weight * float(np.dot(self.w, self.h * np.sum(dT**2, axis=1)))
        return J

    def misfit(self, q) -> float:
        return self.misfit_from_states(self.states(q))

    def gradient(self, q, y=None) -> np.ndarray:
        """∂J/∂q at the interior nodes, length N+2 with zero boundary slots."""
        qf = self._q_full(q)
        y = self.states(qf) if y is None else y
        dF, dT = self.residuals(y)
        h, dt, N = self.h, self.dt, self.N
        S = y.shape[0] - 1
        G = np.zeros((S + 1, N + 2))
        G[:, N] += -(1.0 / h) * (self.Dt.T @ (2.0 * self.w * dF))
        if self.tych_weight:
            A = self.Dtt.T @ (2.0 * self.tych_weight * self.w[:, None] * h * dT)
            # transpose of the face difference v ↦ v_{f+1} − v_f
            G[:, 1:] += A
            G[:, :-1] -= A
        Gi = G[:, 1:-1]
        qi = qf[1:-1]
        c = dt * dt
        mu_next = np.zeros(N)  # μ_{m+1}
        mu = np.zeros(N)  # μ_m
        grad = np.zeros(N)
        for mm in range(S, 0, -1):
            mu_prev = Gi[mm] + 2.0 * mu + c * (self.K @ mu - qi * mu) - mu_next
            mu_next, mu = mu, mu_prev  # now mu = μ_{mm−1}
            n = mm - 1
            if n >= 1:
                grad -= c * mu * y[n, 1:-1]
            else:
                grad -= 0.5 * c * mu * y[0, 1:-1]
        out = np.zeros(N + 2)
        out[1:-1] = grad
        return out

    def observe(self, q) -> ObservationPair:
        flux, tych = observe_array(self.states(q), self.h, self.dt)
        return ObservationPair(flux, tych, self.dt, self.h)


def misfit_J(q, target: ObservationPair, problem: WaveProblem, tg: TimeGrid, cfg: ReconConfig) -> float:
    """‖flux[q] − target.flux‖²_{L²(0,T)} + w ‖tych[q] − target.tych‖²_{L²(0,T;L²_h)}."""
    return ForwardModel(problem, tg, target, cfg.tych_weight).misfit(q)


def grad_J(q, target: ObservationPair, problem: WaveProblem, tg: TimeGrid, cfg: ReconConfig) -> NodeFn:
    """Exact gradient of the discrete misfit by one backward sweep of the transposed recursion."""
    g = ForwardModel(problem, tg, target, cfg.tych_weight).gradient(q)
    return NodeFn(problem.grid, g)


# ---------------------------------------------------------------------------
# filtering


def filter_modes(h: float, delta: float) -> int:
    """Largest sine mode k with 4 sin²(kπh/2)/h² ≤ δ²/h²."""
    N = round(1.0 / h) - 1
    if delta >= 2.0:
        return N
    return min(N, int(math.floor(2.0 / (math.pi * h) * math.asin(delta / 2.0) + 1e-12)))


def sine_filter(v, h: float, delta: float) -> np.ndarray:
    """Keep the first ``filter_modes`` discrete sine modes of the interior values."""
    v = np.asarray(v, dtype=float)
    k = filter_modes(h, delta)
    c = fft.dst(v[1:-1], type=1)
    c[k:] = 0.0
    out = np.zeros_like(v)
    out[1:-1] = fft.idst(c, type=1)
    return out


@dataclass(frozen=True)
class FilterReport:
    data_bound: float
    data_limit: float
    data_ok: bool
    f_ratio: float
    f_limit: float
    f_ok: bool
    degenerate: bool

    @property
    def satisfied(self) -> bool:
        return self.data_ok and self.f_ok


def filtering_check(f, h: float, delta: float, R=None, dt: Optional[float] = None) -> FilterReport:
    """Both filtering inequalities: data bound ≤ δ/h and ∫|∂⁺f|² ≤ (δ/h)² ∫|f|².

    ``f`` holds node values (boundary slots are treated as zero).  Without
    ``R`` the data inequality is reported as satisfied with a zero bound.
    """
    fv = np.array(f.values if isinstance(f, NodeFn) else f, dtype=float)
    fv[0] = fv[-1] = 0.0
    limit = delta / h
    num = float(dc.integrate(np.nan_to_num(dc.d_plus(fv, h)) ** 2, h, "left"))
    den = float(dc.integrate(fv**2, h, "open"))
    degenerate = den == 0.0
    f_ratio = num / den if not degenerate else 0.0
    if R is None:
        data_bound = 0.0
    else:
        if dt is None:
            raise ConfigurationError("dt is required together with R")
        R = np.asarray(R, dtype=float)
        Ri = R[:, 1:-1]
        l2 = lambda a: np.sqrt(h * np.sum(a**2, axis=-1))  # noqa: E731
        Rt, Rtt = timeops.d_t(Ri, dt), timeops.d_tt(Ri, dt)
        w21 = float(timeops.time_integral(l2(Ri) + l2(Rt) + l2(Rtt), dt))
        init = math.hypot(np.max(np.abs(Ri[0])), np.max(np.abs(Rt[0])))
        data_bound = w21 + init
    return FilterReport(data_bound, limit, data_bound <= limit, f_ratio, limit**2, f_ratio <= limit**2, degenerate)


# ---------------------------------------------------------------------------
# reconstruction


@dataclass
class ReconResult:
    q_rec: NodeFn
    misfit_history: list
    grad_norm_history: list
    iterations: int
    status: str
    l2_error_vs_truth: Optional[float] = None

    @property
    def stagnated(self) -> bool:
        return self.status == "stagnation"


def _project(q, cfg: ReconConfig, h: float, q_ref) -> np.ndarray:
    q = np.array(q, dtype=float)
    if cfg.filtering_delta is not None:
        q = q_ref + sine_filter(q - q_ref, h, cfg.filtering_delta)
    np.clip(q, -cfg.m, cfg.m, out=q)
    q[0], q[-1] = q_ref[0], q_ref[-1]
    return q


def reconstruct(target: ObservationPair, problem: WaveProblem, tg: TimeGrid, cfg: ReconConfig,
                q_init, q_true=None) -> ReconResult:
    """Projected gradient with Armijo backtracking on the box ‖q‖_∞ ≤ m.

    The first trial step is ``step_init/‖∇J‖_∞``; later trial steps use the
    Barzilai–Borwein quotient of the last accepted move.
    """
    grid = problem.grid
    model = ForwardModel(problem, tg, target, cfg.tych_weight)
    q0 = q_init.values if isinstance(q_init, NodeFn) else np.asarray(q_init, dtype=float)
    if np.max(np.abs(q0[1:-1])) > cfg.m:
        raise ConfigurationError("q_init lies outside the box ‖q‖_∞ ≤ m")
    q_ref = q0.copy()
    q = _project(q0, cfg, grid.h, q_ref)
    y = model.states(q)
    J = model.misfit_from_states(y)
    g = model.gradient(q, y)
    Js, gn = [J], [float(np.max(np.abs(g)))]
    status = "max_iter"
    alpha = None
    it = 0
    for it in range(cfg.max_iter):
        gmax = float(np.max(np.abs(g)))
        if J <= cfg.misfit_tol or gmax <= cfg.grad_tol:
            status = "converged"
            break
        if alpha is None or not (alpha > 0 and math.isfinite(alpha)):
            alpha = cfg.step_init / gmax
        accepted = False
        for _ in range(cfg.max_backtracks):
            q_try = _project(q - alpha * g, cfg, grid.h, q_ref)
            step = q_try - q
            if not np.any(step):
                break
            y_try = model.states(q_try)
            J_try = model.misfit_from_states(y_try)
            if J_try <= J + cfg.armijo_c * float(np.dot(g, step)):
                accepted = True
                break
            alpha *= cfg.armijo_shrink
        if not accepted:
            status = "stagnation"
            break
        g_new = model.gradient(q_try, y_try)
        dq, dg = step[1:-1], (g_new - g)[1:-1]
        curv = float(np.dot(dq, dg))
        alpha = float(np.dot(dq, dq)) / curv if curv > 0 else None
        q, y, J, g = q_try, y_try, J_try, g_new
        Js.append(J)
        gn.append(float(np.max(np.abs(g))))
    else:
        it = cfg.max_iter
    err = None
    if q_true is not None:
        qt = q_true.values if isinstance(q_true, NodeFn) else np.asarray(q_true, dtype=float)
        err = float(np.sqrt(grid.h * np.sum((q[1:-1] - qt[1:-1]) ** 2)))
    return ReconResult(NodeFn(grid, q), Js, gn, it, status, err)
