"""Time-difference and time-integration operators on a uniform time grid.

All operators act on axis 0 of an array sampled at ``t_n = t0 + n dt``,
``n = 0..S``.  They are assembled as sparse matrices so that the adjoint code
can use their transposes directly.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy import sparse

__all__ = ["dt_matrix", "dtt_matrix", "trapezoid_weights", "d_t", "d_tt", "time_integral"]


@lru_cache(maxsize=64)
def _dt(n_pts: int, dt: float):
    if n_pts < 3:
        raise ValueError("time derivative needs at least 3 time levels")
    S = n_pts - 1
    rows, cols, vals = [], [], []
    for n in range(1, S):
        rows += [n, n]
        cols += [n - 1, n + 1]
        vals += [-0.5, 0.5]
    # second-order one-sided ends
    rows += [0, 0, 0, S, S, S]
    cols += [0, 1, 2, S, S - 1, S - 2]
    vals += [-1.5, 2.0, -0.5, 1.5, -2.0, 0.5]
    D = sparse.csr_matrix((np.array(vals) / dt, (rows, cols)), shape=(n_pts, n_pts))
    return D


@lru_cache(maxsize=64)
def _dtt(n_pts: int, dt: float):
    if n_pts < 3:
        raise ValueError("second time derivative needs at least 3 time levels")
    S = n_pts - 1
    rows, cols, vals = [], [], []
    for n in range(1, S):
        rows += [n, n, n]
        cols += [n - 1, n, n + 1]
        vals += [1.0, -2.0, 1.0]
    if n_pts >= 4:
        # second-order one-sided ends
        end = [2.0, -5.0, 4.0, -1.0]
    else:
        end = [1.0, -2.0, 1.0]
    for k, c in enumerate(end):
        rows += [0, S]
        cols += [k, S - k]
        vals += [c, c]
    return sparse.csr_matrix((np.array(vals) / dt**2, (rows, cols)), shape=(n_pts, n_pts))


def dt_matrix(n_pts: int, dt: float) -> sparse.csr_matrix:
    """Centered first difference, one-sided second order at both ends."""
    return _dt(int(n_pts), float(dt))


def dtt_matrix(n_pts: int, dt: float) -> sparse.csr_matrix:
    """Centered second difference, one-sided (4-point) second order at both ends."""
    return _dtt(int(n_pts), float(dt))


def trapezoid_weights(n_pts: int, dt: float) -> np.ndarray:
    w = np.full(n_pts, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def _apply(M, a):
    a = np.asarray(a, dtype=float)
    flat = a.reshape(a.shape[0], -1)
    return np.asarray(M @ flat).reshape(a.shape)


def d_t(a, dt):
    return _apply(dt_matrix(len(a), dt), a)


def d_tt(a, dt):
    return _apply(dtt_matrix(len(a), dt), a)


def time_integral(a, dt):
    """Trapezoid rule along axis 0."""
    a = np.asarray(a, dtype=float)
    w = trapezoid_weights(a.shape[0], dt)
    return np.tensordot(w, a, axes=(0, 0))
