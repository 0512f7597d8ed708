"""Carleman weights, conjugate-operator coefficients and the weighted-inequality evaluators.

Weight: ψ(t,x) = (x − x0)² − β t² + C0, φ = e^{λψ}, ρ = e^{−sφ}, on the
space-time grid (nodes 0..N+1) × (time levels over [−T, T]).

Space-time fields are plain arrays of shape (n_t, N+2); axis 0 is time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import exprel

from . import calculus as dc
from . import timeops
from .calculus import Grid1D
from .errors import ParameterError, PreconditionError, QuadratureOrderError, InternalConsistencyError
from .wave import TimeGrid

__all__ = [
    "WeightParams",
    "WeightFields",
    "ConjCoeffs",
    "RatioReport",
    "make_params",
    "lambda_min",
    "eval_weights",
    "coeffs",
    "principal_parts",
    "conjugate_apply",
    "conjugate_literal",
    "split",
    "decompo_check",
    "carleman_w_check",
    "cutoff_chi",
    "cutoff_chi_dt",
    "test_function_gen",
    "coefficient_deviation",
    "choose_eps",
    "EXP_LIMIT",
]

EXP_LIMIT = 700.0
QUAD_TOL = 1e-8
SPLIT_TOL = 1e-10


@dataclass(frozen=True)
class WeightParams:
    x0: float
    beta: float
    lam: float
    s: float
    C0: float
    T: float
    eps: float
    eta: float
    mode: str = "carleman"

    def with_s(self, s: float) -> "WeightParams":
        if not (s >= 0 and math.isfinite(s)):
            raise ParameterError(f"s must be non-negative, got {s}")
        return replace(self, s=float(s))

    def in_theory(self, h: float) -> bool:
        """Whether s·h ≤ ε on a grid of step h."""
        return self.s * h <= self.eps * (1.0 + 1e-12)

    def psi(self, t, x):
        return (x - self.x0) ** 2 - self.beta * t**2 + self.C0


def lambda_min(beta: float, x0: float) -> float:
    """(3β+1)²/(2c) with c = 16(1−β)x0²."""
    if not 0.0 < beta < 1.0:
        raise ParameterError(f"beta must lie in (0, 1), got {beta}")
    if not x0 < 0.0:
        raise ParameterError(f"x0 must be negative, got {x0}")
    c = 16.0 * (1.0 - beta) * x0**2
    return (3.0 * beta + 1.0) ** 2 / (2.0 * c)


def make_params(x0, beta, lam, T, eps, mode="carleman", s=0.0, eta=None) -> WeightParams:
    """Validate the raw parameters and derive C0 (and η in inverse mode)."""
    if not x0 < 0.0:
        raise ParameterError(f"x0 < 0 required, got x0 = {x0}")
    if not 0.0 < beta < 1.0:
        raise ParameterError(f"0 < beta < 1 required, got beta = {beta}")
    if not lam > 0.0:
        raise ParameterError(f"lambda > 0 required, got {lam}")
    if not T > 0.0:
        raise ParameterError(f"T > 0 required, got {T}")
    if not eps > 0.0:
        raise ParameterError(f"eps > 0 required, got {eps}")
    if not s >= 0.0:
        raise ParameterError(f"s ≥ 0 required, got {s}")
    C0 = 1.0 + beta * T**2
    reach = 1.0 + abs(x0)
    if mode == "inverse":
        if not T > reach:
            raise ParameterError(f"inverse mode requires T > 1 + |x0| = {reach}, got T = {T}")
        if beta < (reach / T) ** 2:
            raise ParameterError(
                f"inverse mode requires beta ≥ ((1+|x0|)/T)² = {(reach / T) ** 2:.6g}, got {beta}"
            )
        eta_inv = T - reach / math.sqrt(beta)
        if not eta_inv > 0.0:
            raise ParameterError(f"inverse mode requires eta = T − (1+|x0|)/√beta > 0, got {eta_inv}")
        eta = eta_inv if eta is None else eta
    elif mode == "carleman":
        eta = 0.25 * T if eta is None else eta
    else:
        raise ParameterError(f"unknown mode {mode!r}")
    if not 0.0 < eta < T:
        raise ParameterError(f"0 < eta < T required, got eta = {eta}")
    return WeightParams(float(x0), float(beta), float(lam), float(s), C0, float(T), float(eps), float(eta), mode)


@dataclass(frozen=True, eq=False)
class WeightFields:
    params: WeightParams
    grid: Grid1D
    tg: TimeGrid
    t: np.ndarray
    x: np.ndarray
    psi: np.ndarray
    phi: np.ndarray
    log_rho: np.ndarray
    psi_x: np.ndarray
    psi_t: np.ndarray

    @property
    def rho(self) -> np.ndarray:
        return np.exp(self.log_rho)

    @property
    def psi_xx(self) -> float:
        return 2.0

    @property
    def psi_tt(self) -> float:
        return -2.0 * self.params.beta


def eval_weights(params: WeightParams, grid: Grid1D, tg: TimeGrid) -> WeightFields:
    """Tabulate ψ, φ and ρ (through log ρ = −sφ)."""
    t, x = tg.t[:, None], grid.x[None, :]
    psi = params.psi(t, x)
    lam_psi_max = params.lam * float(psi.max())
    if lam_psi_max > EXP_LIMIT:
        raise ParameterError(
            f"λ·ψ_max = {lam_psi_max:.4g} exceeds {EXP_LIMIT}; use a smaller λ or a shorter window"
        )
    if psi.min() < 1.0 - 1e-12:
        raise ParameterError(f"ψ ≥ 1 violated (min ψ = {psi.min():.6g})")
    phi = np.exp(params.lam * psi)
    psi_x = np.broadcast_to(2.0 * (x - params.x0), psi.shape)
    psi_t = np.broadcast_to(-2.0 * params.beta * t, psi.shape)
    return WeightFields(params, grid, tg, tg.t, grid.x, psi, phi, -params.s * phi, psi_x, psi_t)


@dataclass(frozen=True, eq=False)
class ConjCoeffs:
    """A0..A4 on the space-time grid (boundary columns NaN), plus exact reference ratios."""

    fields: WeightFields
    A0: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    A3: np.ndarray
    A4: np.ndarray
    A1_quad: np.ndarray
    dh_ratio: np.ndarray  # (∂_h ρ)/ρ
    lap_ratio: np.ndarray  # (Δ_h ρ)/ρ
    order: int
    combo_residual: float

    @property
    def params(self) -> WeightParams:
        return self.fields.params

    @property
    def grid(self) -> Grid1D:
        return self.fields.grid

    @property
    def tg(self) -> TimeGrid:
        return self.fields.tg


def _pad(interior):
    out = np.full((interior.shape[0], interior.shape[1] + 2), np.nan)
    out[:, 1:-1] = interior
    return out


def _gauss_halves(order):
    """Nodes σ ∈ (−1, 1) and plain weights, Gauss–Legendre on [−1,0] and [0,1] separately."""
    u, w = np.polynomial.legendre.leggauss(order)
    pos = 0.5 * (u + 1.0)
    sig = np.concatenate((-pos[::-1], pos))
    wts = np.concatenate((0.5 * w[::-1], 0.5 * w))
    return sig, wts


def coeffs(params: WeightParams, fields: WeightFields, quadrature_order: int = 16, check: bool = True) -> ConjCoeffs:
    """Coefficients of the conjugate operator.

    A1 and the combination s²λ²A2 − sλ²A3 − sλA4 have closed forms in terms of
    grid values of ρ; A2, A3, A4 (and a second copy of A1) come from the
    σ-integrals evaluated by Gauss–Legendre quadrature.  The combination
    residual against the closed form must stay below 1e-8.
    """
    if quadrature_order < 8:
        raise QuadratureOrderError(f"quadrature order ≥ 8 required, got {quadrature_order}")
    s, lam, x0 = params.s, params.lam, params.x0
    h = fields.grid.h
    phi, psi = fields.phi, fields.psi
    pj = phi[:, 1:-1]

    # neighbour differences of φ, computed as φ_j (e^{λ(ψ_{j±1}−ψ_j)} − 1) to keep digits
    dpl = pj * np.expm1(lam * (psi[:, 2:] - psi[:, 1:-1]))
    dmi = pj * np.expm1(lam * (psi[:, :-2] - psi[:, 1:-1]))
    if s * max(np.abs(dpl).max(), np.abs(dmi).max()) > EXP_LIMIT:
        raise ParameterError("ρ ratio between neighbouring nodes overflows; reduce s·h or λ")
    # A1 = −(∂_hρ/ρ)/(sλ), continuous in s through exprel
    A1 = (dpl * exprel(-s * dpl) - dmi * exprel(-s * dmi)) / (2.0 * h * lam)
    ep, em = np.expm1(-s * dpl), np.expm1(-s * dmi)
    dh_ratio = (ep - em) / (2.0 * h)
    lap_ratio = (ep + em) / h**2
    A0 = 0.5 * (ep + em)

    sig, wts = _gauss_halves(quadrature_order)
    kern = (1.0 - np.abs(sig)) * wts
    x = fields.x[1:-1][None, :, None]
    xs = x + sig[None, None, :] * h
    psix_s = 2.0 * (xs - x0)
    dpsi = sig * h * (2.0 * (x - x0) + sig * h)  # ψ(x+σh) − ψ(x)
    A1_quad, A2, A3, A4 = (np.empty_like(pj) for _ in range(4))
    block = max(1, 2**22 // (pj.shape[1] * sig.size))
    for lo in range(0, pj.shape[0], block):
        sl = slice(lo, lo + block)
        t = fields.t[sl, None, None]
        phi_s = np.exp(lam * params.psi(t, xs))
        ratio = np.exp(-s * pj[sl, :, None] * np.expm1(lam * dpsi))
        base = phi_s * ratio
        A1_quad[sl] = 0.5 * np.sum(base * psix_s * wts, axis=-1)
        A2[sl] = np.sum(base * phi_s * psix_s**2 * kern, axis=-1)
        A3[sl] = np.sum(base * psix_s**2 * kern, axis=-1)
        A4[sl] = np.sum(base * 2.0 * kern, axis=-1)

    combo = s * s * lam * lam * A2 - s * lam * lam * A3 - s * lam * A4
    scale = s * s * lam * lam * np.abs(A2) + s * lam * lam * np.abs(A3) + s * lam * np.abs(A4) + np.abs(lap_ratio)
    resid = float(np.max(np.abs(combo - lap_ratio) / np.maximum(scale, np.finfo(float).tiny)))
    if check and resid > QUAD_TOL:
        raise QuadratureOrderError(
            f"quadrature of order {quadrature_order} misses the exact combination by {resid:.3g} > {QUAD_TOL}"
        )
    return ConjCoeffs(
        fields=fields,
        A0=_pad(A0),
        A1=_pad(A1),
        A2=_pad(A2),
        A3=_pad(A3),
        A4=_pad(A4),
        A1_quad=_pad(A1_quad),
        dh_ratio=_pad(dh_ratio),
        lap_ratio=_pad(lap_ratio),
        order=quadrature_order,
        combo_residual=resid,
    )


def principal_parts(fields: WeightFields) -> dict:
    """Continuous limits f1..f4 of A1..A4 at the nodes."""
    phi, psx = fields.phi, fields.psi_x
    return {"A1": phi * psx, "A2": phi**2 * psx**2, "A3": phi * psx**2, "A4": 2.0 * phi}


def coefficient_deviation(cc: ConjCoeffs) -> dict:
    """max_j ‖A_j − f_j‖_∞ (interior nodes) and the same relative to ‖f_j‖_∞."""
    f = principal_parts(cc.fields)
    out = {}
    for name in ("A1", "A2", "A3", "A4"):
        a = getattr(cc, name)[:, 1:-1]
        ff = f[name][:, 1:-1]
        err = float(np.max(np.abs(a - ff)))
        out[name] = err
        out[name + "_rel"] = err / float(np.max(np.abs(ff)))
    return out


# ---------------------------------------------------------------------------
# conjugate operator


def _check_v(v, cc: ConjCoeffs):
    v = np.asarray(v, dtype=float)
    shape = (cc.tg.steps + 1, cc.grid.N + 2)
    if v.shape != shape:
        raise PreconditionError(f"v must have shape {shape}, got {v.shape}")
    scale = max(float(np.max(np.abs(v))), np.finfo(float).tiny)
    if np.max(np.abs(v[:, [0, -1]])) > 1e-12 * scale:
        raise PreconditionError("v must vanish at x = 0 and x = 1")
    return v


def _pieces(v, cc: ConjCoeffs):
    p = cc.params
    f = cc.fields
    s, lam = p.s, p.lam
    h, dt = cc.grid.h, cc.tg.dt
    vt = timeops.d_t(v, dt)
    vtt = timeops.d_tt(v, dt)
    lapv = dc.lap(v, h)
    dv = dc.d_h(v, h)
    phi, pst, pstt = f.phi, f.psi_t, f.psi_tt
    return dict(
        vtt=vtt,
        time1=-2.0 * s * lam * phi * pst * vt,
        time0=(s * s * lam * lam * phi**2 * pst**2 - s * lam * lam * phi * pst**2 - s * lam * phi * pstt) * v,
        lapterm=-(1.0 + cc.A0) * lapv,
        grad=2.0 * s * lam * cc.A1 * dv,
        zero=-(s * s * lam * lam * cc.A2 - s * lam * lam * cc.A3 - s * lam * cc.A4) * v,
        vt=vt,
        dv=dv,
        lapv=lapv,
    )


def _interior(a):
    out = np.array(a, dtype=float)
    out[:, 0] = out[:, -1] = 0.0
    return out


def conjugate_apply(v, cc: ConjCoeffs, params: Optional[WeightParams] = None) -> np.ndarray:
    """P_h v by the expanded formula, time derivatives by centered differences."""
    v = _check_v(v, cc)
    k = _pieces(v, cc)
    out = k["vtt"] + k["time1"] + k["time0"] + k["lapterm"] + k["grad"] + k["zero"]
    return _interior(out)


def conjugate_literal(v, cc: ConjCoeffs) -> np.ndarray:
    """ρ⁻¹(∂_tt − Δ_h)(ρ v) with discrete derivatives and neighbour ratios of ρ.

    Each stencil is applied to (ρ/ρ_{n,j}) v so that no raw ρ value is formed.
    """
    v = _check_v(v, cc)
    s = cc.params.s
    h, dt = cc.grid.h, cc.tg.dt
    phi = cc.fields.phi
    n_t = v.shape[0]
    out = np.zeros_like(v)
    # space part: Δ_h(ρv)/ρ at (n, j)
    rp = np.exp(-s * (phi[:, 2:] - phi[:, 1:-1]))
    rm = np.exp(-s * (phi[:, :-2] - phi[:, 1:-1]))
    out[:, 1:-1] -= (rp * v[:, 2:] - 2.0 * v[:, 1:-1] + rm * v[:, :-2]) / h**2
    # time part: D_tt(ρv)/ρ using the rows of the D_tt matrix
    D = timeops.dtt_matrix(n_t, dt).tocsr()
    for n in range(n_t):
        lo, hi = D.indptr[n], D.indptr[n + 1]
        cols, vals = D.indices[lo:hi], D.data[lo:hi]
        r = np.exp(-s * (phi[cols, 1:-1] - phi[n, 1:-1]))
        out[n, 1:-1] += np.sum(vals[:, None] * r * v[cols, 1:-1], axis=0)
    return out


def split(v, cc: ConjCoeffs, params: Optional[WeightParams] = None, check: bool = True):
    """(P1 v, P2 v, R v) with P1 v + P2 v = P_h v + R v."""
    v = _check_v(v, cc)
    p = cc.params
    f = cc.fields
    s, lam = p.s, p.lam
    k = _pieces(v, cc)
    phi, pst = f.phi, f.psi_t
    P1 = k["vtt"] + k["lapterm"] + s * s * lam * lam * (phi**2 * pst**2 - cc.A2) * v
    P2 = -s * lam * lam * (phi * pst**2 - cc.A3) * v - 2.0 * s * lam * (phi * pst * k["vt"] - cc.A1 * k["dv"])
    R = s * lam * (phi * f.psi_tt - cc.A4) * v
    P1, P2, R = _interior(P1), _interior(P2), _interior(R)
    if check:
        Pv = conjugate_apply(v, cc)
        err = split_residual(P1, P2, R, Pv)
        if err > SPLIT_TOL:
            raise InternalConsistencyError(f"P1+P2 = P_h+R violated: relative residual {err:.3g}")
    return P1, P2, R


def split_residual(P1, P2, R, Pv) -> float:
    scale = np.max(np.abs(P1) + np.abs(P2) + np.abs(R) + np.abs(Pv))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(P1 + P2 - Pv - R)) / scale)


# ---------------------------------------------------------------------------
# ratio evaluators


@dataclass(frozen=True)
class RatioReport:
    lhs: float
    rhs0: float
    ratio: float
    tych_share: float
    degenerate: bool
    terms: dict = field(default_factory=dict)

    @property
    def ratio_without_tych(self) -> float:
        rest = self.rhs0 - self.terms.get("tych", 0.0)
        return self.lhs / rest if rest > 0 else math.inf


def _report(lhs_terms: dict, rhs_terms: dict) -> RatioReport:
    lhs = float(sum(lhs_terms.values()))
    rhs0 = float(sum(rhs_terms.values()))
    terms = {**lhs_terms, **rhs_terms}
    if rhs0 == 0.0:
        return RatioReport(lhs, rhs0, math.nan, math.nan, True, terms)
    return RatioReport(lhs, rhs0, lhs / rhs0, rhs_terms["tych"] / rhs0, False, terms)


def _check_support(v, dt):
    scale = float(np.max(np.abs(v)))
    if scale == 0.0:
        return
    if np.max(np.abs(v[[0, -1]])) > 1e-8 * scale:
        raise PreconditionError("v(±T) must vanish")
    vt = timeops.d_t(v, dt)
    vt_scale = float(np.max(np.abs(vt)))
    if np.max(np.abs(vt[[0, -1]])) > 0.05 * vt_scale:
        raise PreconditionError("∂_t v(±T) must vanish")


def _space_time(values, h, dt, domain):
    return float(timeops.time_integral(dc.integrate(np.nan_to_num(values), h, domain), dt))


def decompo_check(v, cc: ConjCoeffs, params: Optional[WeightParams] = None) -> RatioReport:
    """Unweighted v-form: LHS/RHS₀ with RHS₀ = ‖P_h v‖² + s‖(∂⁻v)_{N+1}‖² + s‖h∂⁺∂_t v‖²."""
    v = _check_v(v, cc)
    _check_support(v, cc.tg.dt)
    s = cc.params.s
    h, dt = cc.grid.h, cc.tg.dt
    P1, P2, R = split(v, cc)
    Pv = conjugate_apply(v, cc)
    vt = timeops.d_t(v, dt)
    dpv = dc.d_plus(v, h)
    lhs = {
        "s_vt": s * _space_time(vt**2, h, dt, "open"),
        "s_dv": s * _space_time(dpv**2, h, dt, "left"),
        "s3_v": s**3 * _space_time(v**2, h, dt, "open"),
        "P1": _space_time(P1**2, h, dt, "open"),
        "P2": _space_time(P2**2, h, dt, "open"),
    }
    flux = (v[:, -1] - v[:, -2]) / h
    rhs = {
        "Pv": _space_time(Pv**2, h, dt, "open"),
        "flux": s * float(timeops.time_integral(flux**2, dt)),
        "tych": s * _space_time((h * dc.d_plus(vt, h)) ** 2, h, dt, "left"),
    }
    return _report(lhs, rhs)


def carleman_w_check(w, cc: ConjCoeffs, q=None) -> RatioReport:
    """Weighted w-form with weights e^{2s(φ − φ_max)}; optional potential q (array of N+2)."""
    w = _check_v(w, cc)
    _check_support(w, cc.tg.dt)
    s = cc.params.s
    h, dt = cc.grid.h, cc.tg.dt
    phi = cc.fields.phi
    expo = 2.0 * s * (phi - phi.max())
    if not np.isfinite(expo).all():
        raise ParameterError("weight exponent is not finite after factoring")
    wgt = np.exp(expo)  # underflow to 0 is accepted
    wt = timeops.d_t(w, dt)
    Lw = timeops.d_tt(w, dt) - dc.lap(w, h)
    if q is not None:
        Lw = Lw + np.asarray(q, dtype=float)[None, :] * w
    dpw = dc.d_plus(w, h)  # face j weighted at its left node x_j
    flux = (w[:, -1] - w[:, -2]) / h
    lhs = {
        "s_wt": s * _space_time(wgt * wt**2, h, dt, "open"),
        "s_dw": s * _space_time(wgt * dpw**2, h, dt, "left"),
        "s3_w": s**3 * _space_time(wgt * w**2, h, dt, "open"),
    }
    rhs = {
        "Lw": _space_time(wgt * Lw**2, h, dt, "open"),
        "flux": s * float(timeops.time_integral(wgt[:, -1] * flux**2, dt)),
        "tych": s * _space_time(wgt * (h * dc.d_plus(wt, h)) ** 2, h, dt, "left"),
    }
    return _report(lhs, rhs)


# ---------------------------------------------------------------------------
# cut-off and test functions


def cutoff_chi(t, T, eta):
    """C¹ cut-off: 0 at ±T with zero slope, 1 on [−T+η, T−η], cubic ramp in between."""
    if not 0.0 < eta < T:
        raise ParameterError(f"0 < eta < T required, got eta = {eta}, T = {T}")
    u = np.clip((T - np.abs(np.asarray(t, dtype=float))) / eta, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def cutoff_chi_dt(t, T, eta):
    t = np.asarray(t, dtype=float)
    u = np.clip((T - np.abs(t)) / eta, 0.0, 1.0)
    return -np.sign(t) * 6.0 * u * (1.0 - u) / eta


def discrete_frequency(k, h, dt):
    """Time frequency of the leapfrog standing wave with spatial mode k."""
    arg = (dt / h) * math.sin(k * math.pi * h / 2.0)
    return (2.0 / dt) * math.asin(arg)


def test_function_gen(kind, grid: Grid1D, tg: TimeGrid, eta: float, k: Optional[int] = None,
                      rng=None, envelope: Optional[WeightFields] = None, modes: int = 4) -> np.ndarray:
    """Space-time test fields vanishing at x = 0, 1 and near t = ±T.

    low_mode       χ(t) sin(kπx), k = 1 by default.
    high_mode      χ(t) cos(ω_k t) sin(kπx), k = N by default, ω_k the discrete
                   frequency, i.e. a cut-off fully discrete standing wave.
    random_smooth  χ(t) Σ_k a_k sin(kπx) cos(ω_k t + θ_k) over the first modes with
                   random amplitudes (decaying like k⁻²) and phases.

    With ``envelope`` the field is multiplied by e^{s(φ − φ_max)}, the conjugation
    that turns a weighted w into the unweighted v.
    """
    t = tg.t
    T = -tg.t0
    if not np.isclose(tg.T, T):
        raise ParameterError("test fields need a time grid symmetric about 0")
    x = grid.x
    chi = cutoff_chi(t, T, eta)[:, None]
    h, dt = grid.h, tg.dt
    if kind == "low_mode":
        k = 1 if k is None else k
        v = chi * np.sin(k * np.pi * x)[None, :]
    elif kind == "high_mode":
        k = grid.N if k is None else k
        om = discrete_frequency(k, h, dt)
        v = chi * np.cos(om * t)[:, None] * np.sin(k * np.pi * x)[None, :]
    elif kind == "random_smooth":
        rng = rng if rng is not None else np.random.default_rng(0)
        v = np.zeros((t.size, x.size))
        for kk in range(1, min(modes, grid.N) + 1):
            a = rng.normal() / kk**2
            th = rng.uniform(0.0, 2.0 * np.pi)
            om = discrete_frequency(kk, h, dt)
            v += a * np.cos(om * t + th)[:, None] * np.sin(kk * np.pi * x)[None, :]
        v *= chi
    else:
        raise ValueError(f"unknown test function kind {kind!r}")
    if envelope is not None:
        s = envelope.params.s
        v = v * np.exp(s * (envelope.phi - envelope.phi.max()))
    v[:, 0] = v[:, -1] = 0.0
    v[0] = v[-1] = 0.0
    return v


def choose_eps(params: WeightParams, grid: Grid1D, tg: TimeGrid, candidates, tol: float = 0.1,
               quadrature_order: int = 16) -> float:
    """Largest candidate ε for which s·h = ε/2 keeps every ‖A_j − f_j‖_∞/‖f_j‖_∞ ≤ tol."""
    best = None
    for eps in sorted(candidates):
        p = replace(params, eps=eps, s=0.5 * eps / grid.h)
        try:
            cc = coeffs(p, eval_weights(p, grid, tg), quadrature_order)
        except (ParameterError, QuadratureOrderError):
            break
        dev = coefficient_deviation(cc)
        if max(dev[n + "_rel"] for n in ("A1", "A2", "A3", "A4")) <= tol:
            best = eps
        else:
            break
    if best is None:
        raise ParameterError("no candidate ε keeps the coefficients within tolerance")
    return best
