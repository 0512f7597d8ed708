"""Uniform 1-d grid, finite-difference stencils, discrete integrals and extensions.

Discrete functions live on the nodes ``x_j = j h``, ``j = 0, ..., N+1`` with
``h = 1/(N+1)``; the two boundary slots are stored with the interior values.

Two layers are provided:

* array kernels (``d_plus``, ``lap``, ...) acting on the last axis of arrays of
  length ``N+2``.  They return full-length arrays padded with NaN wherever the
  stencil is undefined, so that compositions such as ``m_plus(d_minus(v))``
  propagate "undefined" automatically.  Solvers and identity checks use these.
* the typed layer (:class:`Grid1D`, :class:`NodeFn`, :class:`FaceFn`,
  :func:`stencil_apply`, ...) with the storage conventions of the public API.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import DimensionError, DomainError

__all__ = [
    "Grid1D",
    "NodeFn",
    "FaceFn",
    "STENCILS",
    "stencil_apply",
    "discrete_integral",
    "norm",
    "extend_affine",
    "extend_const",
    "const_extension_l2_distance",
    "boundary_flux",
    "poincare_ratio",
    "integrate",
    "m_h",
    "m_plus",
    "m_minus",
    "d_h",
    "d_plus",
    "d_minus",
    "lap",
]


@dataclass(frozen=True)
class Grid1D:
    """Uniform mesh of [0, 1] with ``N`` interior nodes."""

    N: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise DimensionError(f"N must be a positive integer, got {self.N!r}")

    @property
    def h(self) -> float:
        return 1.0 / (self.N + 1)

    @property
    def x(self) -> np.ndarray:
        """Node coordinates, boundary included (length N+2)."""
        return np.arange(self.N + 2) * self.h

    @property
    def interior(self) -> slice:
        return slice(1, self.N + 1)

    def sample(self, func: Callable) -> "NodeFn":
        return NodeFn(self, np.asarray(func(self.x), dtype=float) * np.ones(self.N + 2))

    def zeros(self) -> "NodeFn":
        return NodeFn(self, np.zeros(self.N + 2))


# ---------------------------------------------------------------------------
# array kernels (last axis = node index 0..N+1, NaN where undefined)


def _empty(v):
    v = np.asarray(v, dtype=float)
    return v, np.full(v.shape, np.nan)


def m_plus(v):
    v, out = _empty(v)
    out[..., :-1] = 0.5 * (v[..., 1:] + v[..., :-1])
    return out


def m_minus(v):
    v, out = _empty(v)
    out[..., 1:] = 0.5 * (v[..., 1:] + v[..., :-1])
    return out


def m_h(v):
    v, out = _empty(v)
    out[..., 1:-1] = 0.25 * (v[..., 2:] + 2.0 * v[..., 1:-1] + v[..., :-2])
    return out


def d_plus(v, h):
    v, out = _empty(v)
    out[..., :-1] = (v[..., 1:] - v[..., :-1]) / h
    return out


def d_minus(v, h):
    v, out = _empty(v)
    out[..., 1:] = (v[..., 1:] - v[..., :-1]) / h
    return out


def d_h(v, h):
    v, out = _empty(v)
    out[..., 1:-1] = (v[..., 2:] - v[..., :-2]) / (2.0 * h)
    return out


def lap(v, h):
    v, out = _empty(v)
    out[..., 1:-1] = (v[..., 2:] - 2.0 * v[..., 1:-1] + v[..., :-2]) / (h * h)
    return out


_DOMAIN_SLICES = {
    "open": lambda n: slice(1, n - 1),
    "left": lambda n: slice(0, n - 1),
    "right": lambda n: slice(1, n),
}


def integrate(values, h, domain="open"):
    """``h`` times the sum over the index set of ``domain`` (last axis, nodes 0..N+1).

    ``open`` sums j = 1..N, ``left`` j = 0..N and ``right`` j = 1..N+1.
    """
    values = np.asarray(values, dtype=float)
    try:
        sl = _DOMAIN_SLICES[domain](values.shape[-1])
    except KeyError:
        raise ValueError(f"unknown domain {domain!r}") from None
    return h * values[..., sl].sum(axis=-1)


# ---------------------------------------------------------------------------
# typed layer


@dataclass(frozen=True, eq=False)
class NodeFn:
    """Values at the nodes j = 0..N+1 (boundary slots included)."""

    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.N + 2,):
            raise DimensionError(
                f"NodeFn on N={self.grid.N} needs {self.grid.N + 2} values, got shape {values.shape}"
            )
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def interior(self) -> np.ndarray:
        return self.values[1:-1]

    def __add__(self, other):
        _same_grid(self, other)
        return NodeFn(self.grid, self.values + other.values)

    def __sub__(self, other):
        _same_grid(self, other)
        return NodeFn(self.grid, self.values - other.values)

    def __mul__(self, c):
        if isinstance(c, NodeFn):
            _same_grid(self, c)
            return NodeFn(self.grid, self.values * c.values)
        return NodeFn(self.grid, self.values * float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return NodeFn(self.grid, -self.values)


@dataclass(frozen=True, eq=False)
class FaceFn:
    """Values on N+1 consecutive indices.

    ``shift=0`` stores indices 0..N (result of m⁺, ∂⁺); ``shift=1`` stores
    indices 1..N+1 (result of m⁻, ∂⁻), i.e. slot k holds node k+1.
    """

    grid: Grid1D
    values: np.ndarray
    shift: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.N + 1,):
            raise DimensionError(
                f"FaceFn on N={self.grid.N} needs {self.grid.N + 1} values, got shape {values.shape}"
            )
        if self.shift not in (0, 1):
            raise ValueError("shift must be 0 or 1")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def as_nodes(self) -> np.ndarray:
        """Embed into a length N+2 node array, NaN on the missing slot."""
        out = np.full(self.grid.N + 2, np.nan)
        out[self.shift : self.shift + self.grid.N + 1] = self.values
        return out


DiscreteFn = Union[NodeFn, FaceFn]


def _same_grid(a, b):
    if a.grid != b.grid:
        raise DimensionError(f"grid mismatch: N={a.grid.N} vs N={b.grid.N}")


STENCILS = {
    "m": lambda v, h: m_h(v),
    "m+": lambda v, h: m_plus(v),
    "m-": lambda v, h: m_minus(v),
    "d": d_h,
    "d+": d_plus,
    "d-": d_minus,
    "lap": lap,
}
_ALIASES = {"m⁺": "m+", "m⁻": "m-", "∂": "d", "∂⁺": "d+", "∂⁻": "d-", "Δ": "lap"}


def stencil_apply(kind: str, f: NodeFn, grid: Grid1D | None = None) -> DiscreteFn:
    """Apply one of the seven stencils to a node function.

    ``m``, ``d`` and ``lap`` give a :class:`NodeFn` whose boundary slots are
    zero-filled (they are undefined there).  ``m+``/``d+`` give a face function
    on indices 0..N and ``m-``/``d-`` one on indices 1..N+1.
    """
    kind = _ALIASES.get(kind, kind)
    if kind not in STENCILS:
        raise ValueError(f"unknown stencil {kind!r}")
    if grid is not None and grid != f.grid:
        raise DimensionError(f"grid mismatch: N={grid.N} vs N={f.grid.N}")
    full = STENCILS[kind](f.values, f.grid.h)
    if kind in ("m", "d", "lap"):
        out = np.where(np.isnan(full), 0.0, full)
        return NodeFn(f.grid, out)
    if kind in ("m+", "d+"):
        return FaceFn(f.grid, full[:-1], shift=0)
    return FaceFn(f.grid, full[1:], shift=1)


def _index_range(f: DiscreteFn):
    """First node index stored in ``f.values``."""
    return f.shift if isinstance(f, FaceFn) else 0


def _domain_values(domain: str, f: DiscreteFn) -> np.ndarray:
    N = f.grid.N
    lo, hi = {"open": (1, N), "left": (0, N), "right": (1, N + 1)}[domain]
    start = _index_range(f)
    stop = start + len(f.values) - 1
    if lo < start or hi > stop:
        raise DimensionError(
            f"domain {domain!r} needs indices {lo}..{hi}, function stores {start}..{stop}"
        )
    return f.values[lo - start : hi - start + 1]


def discrete_integral(domain: str, f: DiscreteFn) -> float:
    """Discrete integral over (0,1) (``open``), [0,1) (``left``) or (0,1] (``right``)."""
    if domain not in ("open", "left", "right"):
        raise ValueError(f"unknown domain {domain!r}")
    return float(f.grid.h * _domain_values(domain, f).sum())


def norm(f: DiscreteFn, p=2, domain: str = "open") -> float:
    vals = np.abs(_domain_values(domain, f))
    if p in (np.inf, "inf"):
        return float(vals.max(initial=0.0))
    if p not in (1, 2):
        raise ValueError("p must be 1, 2 or inf")
    return float((f.grid.h * np.sum(vals**p)) ** (1.0 / p))


def _check_unit_interval(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0) or np.any(x > 1.0) or np.any(~np.isfinite(x)):
        raise DomainError("extension operators are defined on [0, 1] only")
    return x


def extend_affine(f: NodeFn) -> Callable:
    """Continuous piecewise affine interpolant of the node values."""
    xs = f.grid.x
    vals = np.array(f.values)

    def e_h(x):
        return np.interp(_check_unit_interval(x), xs, vals)

    return e_h


def extend_const(f: NodeFn) -> Callable:
    """Piecewise constant extension: f_j on [(j-1/2)h, (j+1/2)h), zero near the ends."""
    N, h = f.grid.N, f.grid.h
    vals = np.array(f.values)

    def e0_h(x):
        x = _check_unit_interval(x)
        j = np.floor(x / h + 0.5).astype(int)
        inside = (j >= 1) & (j <= N)
        return np.where(inside, vals[np.clip(j, 0, N + 1)], 0.0)

    return e0_h


def const_extension_l2_distance(f: NodeFn, func: Callable, order: int = 8) -> float:
    """‖e_h⁰(f) − func‖ in L²(0,1), integrated exactly cell by cell with Gauss–Legendre."""
    N, h = f.grid.N, f.grid.h
    nodes, weights = np.polynomial.legendre.leggauss(order)
    # cell j spans [(j-1/2)h, (j+1/2)h); the two end half-cells carry zero
    breaks = np.concatenate(([0.0], (np.arange(N + 1) + 0.5) * h, [1.0]))
    values = np.concatenate(([0.0], f.values[1:-1], [0.0]))
    a, b = breaks[:-1], breaks[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    pts = mid[:, None] + half[:, None] * nodes[None, :]
    err = (values[:, None] - np.asarray(func(pts), dtype=float)) ** 2
    return float(np.sqrt(np.sum(half[:, None] * weights[None, :] * err)))


def boundary_flux(f: NodeFn) -> float:
    """Discrete outward normal derivative at x = 1, ``(f_{N+1} − f_N)/h``."""
    return float((f.values[-1] - f.values[-2]) / f.grid.h)


def poincare_ratio(v, h):
    """``∫_{(0,1)}|v|² / ∫_{[0,1)}|∂⁺v|²`` along the last axis."""
    v = np.asarray(v, dtype=float)
    num = integrate(v**2, h, "open")
    dv = d_plus(v, h)
    den = integrate(np.nan_to_num(dv) ** 2, h, "left")
    return num / den
