"""Machine-checkable suite of the discrete product rules and summation-by-parts formulas.

Every check evaluates both sides with the array kernels of :mod:`waveinv.calculus`
and reports ``|lhs - rhs| / scale`` where ``scale`` is the sum of the absolute
sizes of all terms entering the identity.  Node-wise identities use the sup over
the nodes where both sides are defined.

The kernels are looked up on an ``ops`` namespace (default: the calculus module)
so that a test harness can inject a corrupted stencil and watch the suite fail.
"""

from __future__ import annotations

from types import SimpleNamespace

import numpy as np
from scipy import linalg

from . import calculus
from .errors import InternalConsistencyError

__all__ = [
    "IDENTITY_NAMES",
    "default_ops",
    "corrupted_ops",
    "identity_errors",
    "random_inputs",
    "poincare_sharp_constant",
    "poincare_samples",
    "sine_mode",
]

_KERNELS = ("m_h", "m_plus", "m_minus", "d_h", "d_plus", "d_minus", "lap", "integrate")


def default_ops():
    return SimpleNamespace(**{name: getattr(calculus, name) for name in _KERNELS})


def corrupted_ops(kernel="lap", factor=1.0 + 1e-6):
    """Copy of the default kernels with one of them scaled by ``factor``."""
    ops = default_ops()
    good = getattr(ops, kernel)
    setattr(ops, kernel, lambda *a, **k: factor * good(*a, **k))
    return ops


def _nodewise(lhs, rhs, *terms):
    lhs, rhs = np.asarray(lhs), np.asarray(rhs)
    ok_l, ok_r = ~np.isnan(lhs), ~np.isnan(rhs)
    if not np.array_equal(ok_l, ok_r):
        raise InternalConsistencyError("identity sides are defined on different index sets")
    scale = sum(np.abs(np.nan_to_num(t)) for t in terms)
    num = np.where(ok_l, np.abs(lhs - rhs), 0.0).max(axis=-1)
    den = np.where(ok_l, scale, 0.0).max(axis=-1)
    return float(np.max(num / np.maximum(den, np.finfo(float).tiny)))


def _scalar(lhs, rhs, scale):
    return float(np.max(np.abs(lhs - rhs) / np.maximum(scale, np.finfo(float).tiny)))


def random_inputs(rng, N, samples):
    """Random f, g (arbitrary boundary values) and v (zero boundary values)."""
    f = rng.uniform(-1.0, 1.0, (samples, N + 2))
    g = rng.uniform(-1.0, 1.0, (samples, N + 2))
    v = rng.uniform(-1.0, 1.0, (samples, N + 2))
    v[:, 0] = v[:, -1] = 0.0
    return f, g, v


def _algebraic(ops, h, u, v, rho, rng):
    I = lambda a: a  # noqa: E731
    mp, mm, mh = ops.m_plus, ops.m_minus, ops.m_h
    dp = lambda a: ops.d_plus(a, h)  # noqa: E731
    dm = lambda a: ops.d_minus(a, h)  # noqa: E731
    d0 = lambda a: ops.d_h(a, h)  # noqa: E731
    lp = lambda a: ops.lap(a, h)  # noqa: E731
    out = {}

    a1, a2, b1, b2 = rng.uniform(-1.0, 1.0, (4, u.shape[0]))
    lhs = 0.5 * (a1 * b1 + a2 * b2)
    t1 = 0.5 * (a1 + a2) * 0.5 * (b1 + b2)
    t2 = 0.25 * h * h * ((a1 - a2) / h) * ((b1 - b2) / h)
    out["utile+"] = _scalar(lhs, t1 + t2, np.abs(lhs) + np.abs(t1) + np.abs(t2))
    lhs = (a1 * b1 - a2 * b2) / h
    t1 = ((a1 - a2) / h) * 0.5 * (b1 + b2)
    t2 = 0.5 * (a1 + a2) * ((b1 - b2) / h)
    out["utile-"] = _scalar(lhs, t1 + t2, np.abs(lhs) + np.abs(t1) + np.abs(t2))

    half_dp = 0.5 * h * dp(v)
    out["mhv:m+=I+h/2d+"] = _nodewise(mp(v), I(v) + half_dp, mp(v), v, half_dp)
    quarter_lap = 0.25 * h * h * lp(v)
    out["mhv:m=I+h2/4lap"] = _nodewise(mh(v), v + quarter_lap, mh(v), v, quarter_lap)
    out["mhv:m=m+m-"] = _nodewise(mh(v), mp(mm(v)), mh(v), mp(mm(v)))

    ref = d0(v)
    avg = 0.5 * (dp(v) + dm(v))
    worst = 0.0
    for other in (avg, mp(dm(v)), dm(mp(v)), mm(dp(v)), dp(mm(v))):
        worst = max(worst, _nodewise(ref, other, ref, other))
    out["dhv"] = worst

    ref = lp(v)
    worst = 0.0
    for other in (dp(dm(v)), dm(dp(v))):
        worst = max(worst, _nodewise(ref, other, ref, other))
    out["Dhv"] = worst

    t1 = mp(u) * mp(v)
    t2 = 0.25 * h * h * dp(u) * dp(v)
    out["mhuv"] = _nodewise(mp(u * v), t1 + t2, mp(u * v), t1, t2)

    worst = 0.0
    for d, m in ((dp, mp), (dm, mm)):
        t1 = d(u) * m(v)
        t2 = m(u) * d(v)
        worst = max(worst, _nodewise(d(u * v), t1 + t2, d(u * v), t1, t2))
    out["dhuv"] = worst

    t1 = lp(rho) * mh(v)
    t2 = 2.0 * d0(rho) * d0(v)
    t3 = mh(rho) * lp(v)
    out["Dhrv"] = _nodewise(lp(rho * v), t1 + t2 + t3, lp(rho * v), t1, t2, t3)
    return out


def _sbp(ops, h, f, g, v):
    dp = lambda a: ops.d_plus(a, h)  # noqa: E731
    dm = lambda a: ops.d_minus(a, h)  # noqa: E731
    d0 = lambda a: ops.d_h(a, h)  # noqa: E731
    lp = lambda a: ops.lap(a, h)  # noqa: E731
    mp = ops.m_plus

    def S(values, domain):
        """Integral and integral of the absolute value."""
        values = np.nan_to_num(values)
        return ops.integrate(values, h, domain), ops.integrate(np.abs(values), h, domain)

    out = {}

    # ∫_[0,1) g ∂⁺f = −∫_(0,1] (∂⁻g) f + g_{N+1}f_{N+1} − g_0 f_0
    L, sL = S(g * dp(f), "left")
    R1, sR1 = S(dm(g) * f, "right")
    b1, b0 = g[:, -1] * f[:, -1], g[:, 0] * f[:, 0]
    out["IPP00"] = _scalar(L, -R1 + b1 - b0, sL + sR1 + np.abs(b1) + np.abs(b0))

    # ∫_(0,1) g ∂f = ∫_[0,1) (m⁺g)(∂⁺f) − (h/2) g_0 (∂⁺f)_0 − (h/2) g_{N+1} (∂⁻f)_{N+1}
    L, sL = S(g * d0(f), "open")
    R1, sR1 = S(mp(g) * dp(f), "left")
    b0 = 0.5 * h * g[:, 0] * dp(f)[:, 0]
    b1 = 0.5 * h * g[:, -1] * dm(f)[:, -1]
    out["IPP000"] = _scalar(L, R1 - b0 - b1, sL + sR1 + np.abs(b0) + np.abs(b1))

    # 2∫ g v ∂v = −∫ |v|² ∂g + (h²/2) ∫_[0,1) |∂⁺v|² ∂⁺g
    L, sL = S(2.0 * g * v * d0(v), "open")
    R1, sR1 = S(v**2 * d0(g), "open")
    R2, sR2 = S(0.5 * h * h * dp(v) ** 2 * dp(g), "left")
    out["IPP0"] = _scalar(L, -R1 + R2, sL + sR1 + sR2)

    # ∫ g Δv = −∫_[0,1) ∂⁺v ∂⁺g − (∂⁺v)_0 g_0 + (∂⁻v)_{N+1} g_{N+1}
    L, sL = S(g * lp(v), "open")
    R1, sR1 = S(dp(v) * dp(g), "left")
    b0 = dp(v)[:, 0] * g[:, 0]
    b1 = dm(v)[:, -1] * g[:, -1]
    out["IPP1"] = _scalar(L, -R1 - b0 + b1, sL + sR1 + np.abs(b0) + np.abs(b1))

    # ∫ g v Δv = −∫_[0,1) (∂⁺v)² m⁺g + ½∫ |v|² Δg
    L, sL = S(g * v * lp(v), "open")
    R1, sR1 = S(dp(v) ** 2 * mp(g), "left")
    R2, sR2 = S(0.5 * v**2 * lp(g), "open")
    out["IPP1bis"] = _scalar(L, -R1 + R2, sL + sR1 + sR2)

    # ∫ g Δv ∂v = −½∫_[0,1) |∂⁺v|² ∂⁺g + ½|(∂⁻v)_{N+1}|² g_{N+1} − ½|(∂⁺v)_0|² g_0
    L, sL = S(g * lp(v) * d0(v), "open")
    R1, sR1 = S(0.5 * dp(v) ** 2 * dp(g), "left")
    b1 = 0.5 * dm(v)[:, -1] ** 2 * g[:, -1]
    b0 = 0.5 * dp(v)[:, 0] ** 2 * g[:, 0]
    out["IPP2"] = _scalar(L, -R1 + b1 - b0, sL + sR1 + np.abs(b1) + np.abs(b0))
    return out


IDENTITY_NAMES = (
    "utile+",
    "utile-",
    "mhv:m+=I+h/2d+",
    "mhv:m=I+h2/4lap",
    "mhv:m=m+m-",
    "dhv",
    "Dhv",
    "mhuv",
    "dhuv",
    "Dhrv",
    "IPP00",
    "IPP000",
    "IPP0",
    "IPP1",
    "IPP1bis",
    "IPP2",
)


def identity_errors(N, samples=100, rng=None, ops=None):
    """Max relative error of every identity over ``samples`` random inputs on N."""
    ops = ops or default_ops()
    rng = rng if rng is not None else np.random.default_rng(0)
    h = 1.0 / (N + 1)
    f, g, v = random_inputs(rng, N, samples)
    out = _algebraic(ops, h, f, g, v, rng)
    out.update(_sbp(ops, h, f, g, v))
    return {name: out[name] for name in IDENTITY_NAMES}


def sine_mode(N, k=1):
    """Sampled sin(kπx) on the nodes, boundary included (zero there)."""
    x = np.arange(N + 2) / (N + 1)
    v = np.sin(k * np.pi * x)
    v[0] = v[-1] = 0.0
    return v


def poincare_sharp_constant(N):
    """Largest ``∫|v|²/∫|∂⁺v|²`` over zero-boundary v, by a symmetric eigensolve."""
    h = 1.0 / (N + 1)
    # ∫_[0,1)|∂⁺v|² = h v·Kv with K the Dirichlet second-difference matrix / h²
    K = (np.diag(np.full(N, 2.0)) - np.diag(np.ones(N - 1), 1) - np.diag(np.ones(N - 1), -1)) / h**2
    mu1 = linalg.eigh(K, eigvals_only=True, subset_by_index=[0, 0])[0]
    return 1.0 / mu1


def poincare_samples(N, samples=1000, rng=None):
    """Ratios for random zero-boundary vectors (uniform and random-walk shaped)."""
    rng = rng if rng is not None else np.random.default_rng(0)
    h = 1.0 / (N + 1)
    v = rng.uniform(-1.0, 1.0, (samples, N + 2))
    # half the draws are cumulative sums, which are much smoother than white noise
    walk = np.cumsum(v[samples // 2 :], axis=-1)
    x = np.arange(N + 2) * h
    v[samples // 2 :] = walk - walk[:, :1] - np.outer(walk[:, -1] - walk[:, 0], x)
    v[:, 0] = v[:, -1] = 0.0
    return calculus.poincare_ratio(v, h)
