"""Corner-domain grid, finite differences, quadrature, and discrete norms.

The computational domain is the spacetime corner region

    M = [0, T] x [-1, 0] x (S^1)^(n-1)

in coordinates (t, x1, x2[, x3]).  The physical boundary C sits at x1 = 0,
the initial slice S0 at t = 0, and the corner ring Sigma is their intersection.  The
inner edge x1 = -1 plays no geometric role: it carries exact background (or
zero) data, and all interesting data is compactly supported away from it.

All stencils are second order: centered in the interior, one-sided at the
two non-periodic faces of each axis, exact wrap in the angular directions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "CornerGrid",
    "GridScalar",
    "GridVector",
    "GridSym2",
    "SliceNorms",
    "build_grid",
    "fd",
    "slice_norm",
    "rescale",
]

TWO_PI = 2.0 * np.pi


class GridConfigError(ValueError):
    """Raised for inconsistent grid parameters (CFL violations etc.)."""


# ---------------------------------------------------------------------------
# finite differences


def _fd1(arr: np.ndarray, axis: int, h: float, periodic: bool) -> np.ndarray:
    if periodic:
        return (np.roll(arr, -1, axis) - np.roll(arr, 1, axis)) / (2.0 * h)
    out = np.empty_like(arr)
    a = np.moveaxis(arr, axis, 0)
    o = np.moveaxis(out, axis, 0)
    if a.shape[0] < 3:
        raise GridConfigError("need at least 3 nodes for one-sided first derivative")
    o[1:-1] = (a[2:] - a[:-2]) / (2.0 * h)
    o[0] = (-3.0 * a[0] + 4.0 * a[1] - a[2]) / (2.0 * h)
    o[-1] = (3.0 * a[-1] - 4.0 * a[-2] + a[-3]) / (2.0 * h)
    return out


def _fd2(arr: np.ndarray, axis: int, h: float, periodic: bool) -> np.ndarray:
    h2 = h * h
    if periodic:
        return (np.roll(arr, -1, axis) - 2.0 * arr + np.roll(arr, 1, axis)) / h2
    out = np.empty_like(arr)
    a = np.moveaxis(arr, axis, 0)
    o = np.moveaxis(out, axis, 0)
    if a.shape[0] < 4:
        raise GridConfigError("need at least 4 nodes for one-sided second derivative")
    o[1:-1] = (a[2:] - 2.0 * a[1:-1] + a[:-2]) / h2
    o[0] = (2.0 * a[0] - 5.0 * a[1] + 4.0 * a[2] - a[3]) / h2
    o[-1] = (2.0 * a[-1] - 5.0 * a[-2] + 4.0 * a[-3] - a[-4]) / h2
    return out


def fd(arr: np.ndarray, axis: int, h: float, periodic: bool = False, order: int = 1) -> np.ndarray:
    """Second-order finite difference of ``arr`` along ``axis``.

    ``order`` selects the first or second derivative.  One-sided
    second-order closures are used at non-periodic faces, so degree <= 2
    polynomials are differentiated exactly.
    """
    if order == 1:
        return _fd1(arr, axis, h, periodic)
    if order == 2:
        return _fd2(arr, axis, h, periodic)
    raise ValueError(f"unsupported derivative order {order}")


# ---------------------------------------------------------------------------
# grid


@dataclass(frozen=True)
class CornerGrid:
    """Tensor-product discretization of the corner domain.

    Axis 0 is time t in [0, T], axis 1 is x1 in [-1, 0], the remaining
    n-1 axes are angular coordinates on [0, 2*pi) with exact wrap.
    """

    n: int
    shape: tuple[int, ...]
    T: float
    cfl_factor: float
    c_max: float
    axes: tuple[np.ndarray, ...] = field(repr=False)
    spacings: tuple[float, ...]
    periodic: tuple[bool, ...]

    # -- construction helpers ------------------------------------------------

    @property
    def d(self) -> int:
        """Spacetime dimension n + 1 (number of coordinates)."""
        return self.n + 1

    @property
    def dt(self) -> float:
        return self.spacings[0]

    @property
    def dr(self) -> float:
        return self.spacings[1]

    @property
    def dth(self) -> float:
        return self.spacings[2]

    @property
    def t(self) -> np.ndarray:
        return self.axes[0]

    @property
    def x1(self) -> np.ndarray:
        return self.axes[1]

    def coords(self) -> tuple[np.ndarray, ...]:
        """Broadcast coordinate arrays (x0, ..., xn), each of shape ``self.shape``."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return tuple(mesh)

    def coords_boundary(self) -> tuple[np.ndarray, ...]:
        """Coordinates on the boundary face C (x1 = 0); arrays of shape (Nt, Nang...)."""
        axes = (self.axes[0],) + self.axes[2:]
        mesh = np.meshgrid(*axes, indexing="ij")
        out = list(mesh)
        out.insert(1, np.zeros_like(mesh[0]))
        return tuple(out)

    def coords_initial(self) -> tuple[np.ndarray, ...]:
        """Coordinates on the initial slice S0 (t = 0); arrays of shape (Nr, Nang...)."""
        mesh = np.meshgrid(*self.axes[1:], indexing="ij")
        out = [np.zeros_like(mesh[0])]
        out.extend(mesh)
        return tuple(out)

    def coords_corner(self) -> tuple[np.ndarray, ...]:
        """Coordinates on the corner ring Sigma (t = 0, x1 = 0)."""
        mesh = np.meshgrid(*self.axes[2:], indexing="ij")
        out = [np.zeros_like(mesh[0]), np.zeros_like(mesh[0])]
        out.extend(mesh)
        return tuple(out)

    # -- index sets ----------------------------------------------------------

    def mask_boundary_c(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[:, -1] = True
        return m

    def mask_inner_edge(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[:, 0] = True
        return m

    def mask_initial_s(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[0] = True
        return m

    def mask_corner(self) -> np.ndarray:
        return self.mask_boundary_c() & self.mask_initial_s()

    def mask_interior(self) -> np.ndarray:
        return ~(self.mask_boundary_c() | self.mask_inner_edge() | self.mask_initial_s())

    # -- differencing --------------------------------------------------------

    def diff(self, fld: np.ndarray, direction: int, order: int = 1) -> np.ndarray:
        """Differentiate a bulk field (leading axes = grid axes) along a coordinate."""
        if not 0 <= direction < self.d:
            raise ValueError(f"unknown direction index {direction}")
        return fd(fld, direction, self.spacings[direction], self.periodic[direction], order)

    def diff_c(self, fld: np.ndarray, direction: int, order: int = 1) -> np.ndarray:
        """Differentiate a boundary field with axes (t, angular...) along t or an angle."""
        if direction == 1 or not 0 <= direction < self.d:
            raise ValueError(f"direction {direction} is not tangent to the boundary face")
        axis = 0 if direction == 0 else direction - 1
        return fd(fld, axis, self.spacings[direction], self.periodic[direction], order)

    def diff_s(self, fld: np.ndarray, direction: int, order: int = 1) -> np.ndarray:
        """Differentiate an initial-slice field with axes (x1, angular...)."""
        if not 1 <= direction < self.d:
            raise ValueError(f"direction {direction} is not tangent to the initial slice")
        return fd(fld, direction - 1, self.spacings[direction], self.periodic[direction], order)

    # -- quadrature ----------------------------------------------------------

    def _axis_weights(self, axis: int) -> np.ndarray:
        h = self.spacings[axis]
        m = self.shape[axis]
        if self.periodic[axis]:
            return np.full(m, h)
        w = np.full(m, h)
        w[0] = w[-1] = 0.5 * h
        return w

    def quad_weights_slice(self) -> np.ndarray:
        """Trapezoid weights over a constant-t slice, shape (Nr, Nang...)."""
        ws = [self._axis_weights(a) for a in range(1, self.d)]
        out = ws[0]
        for w in ws[1:]:
            out = np.multiply.outer(out, w)
        return out

    def quad_weights_ring(self) -> np.ndarray:
        """Trapezoid weights over the corner ring, shape (Nang...)."""
        ws = [self._axis_weights(a) for a in range(2, self.d)]
        out = ws[0]
        for w in ws[1:]:
            out = np.multiply.outer(out, w)
        return out

    def time_weights(self, t_index: int) -> np.ndarray:
        """Trapezoid weights over [0, t_index * dt], zero beyond; shape (Nt,)."""
        w = np.zeros(self.shape[0])
        if t_index >= 1:
            w[: t_index + 1] = self.dt
            w[0] = w[t_index] = 0.5 * self.dt
        return w


def build_grid(
    n: int,
    N_t: int | None,
    N_r: int,
    N_ang: int,
    T: float = 0.5,
    N_ang2: int | None = None,
    cfl_factor: float = 0.5,
    c_max: float = 1.0,
    r_min: float = 1.0,
) -> CornerGrid:
    """Build a corner grid; ``N_t=None`` picks the smallest CFL-admissible step count.

    Raises :class:`GridConfigError` when the CFL bound
    dt <= cfl_factor * min(dr, dth * r_min) / c_max cannot hold.
    """
    if n not in (2, 3):
        raise GridConfigError(f"spatial dimension must be 2 or 3, got {n}")
    if T <= 0 or T > 1:
        raise GridConfigError(f"final time T must lie in (0, 1], got {T}")
    if cfl_factor <= 0 or cfl_factor > 0.5:
        raise GridConfigError(f"cfl_factor must lie in (0, 0.5], got {cfl_factor}")
    if N_ang2 is None:
        N_ang2 = N_ang
    counts = [N_r, N_ang] + ([N_ang2] if n == 3 else [])
    if any(c < 8 for c in counts + ([N_t] if N_t is not None else [])):
        raise GridConfigError("all node counts must be at least 8")

    dr = 1.0 / (N_r - 1)
    dth = TWO_PI / N_ang
    dt_max = cfl_factor * min(dr, dth * r_min) / c_max
    if N_t is None:
        N_t = max(8, int(np.ceil(T / dt_max)) + 1)
    dt = T / (N_t - 1)
    if dt > dt_max * (1.0 + 1e-12):
        raise GridConfigError(
            f"time spacing dt={dt:.3e} violates the CFL bound {dt_max:.3e}; increase N_t"
        )

    axes: list[np.ndarray] = [
        np.linspace(0.0, T, N_t),
        np.linspace(-1.0, 0.0, N_r),
        np.arange(N_ang) * dth,
    ]
    spacings = [dt, dr, dth]
    periodic = [False, False, True]
    if n == 3:
        dph = TWO_PI / N_ang2
        axes.append(np.arange(N_ang2) * dph)
        spacings.append(dph)
        periodic.append(True)

    return CornerGrid(
        n=n,
        shape=tuple(len(a) for a in axes),
        T=T,
        cfl_factor=cfl_factor,
        c_max=c_max,
        axes=tuple(axes),
        spacings=tuple(spacings),
        periodic=tuple(periodic),
    )


# ---------------------------------------------------------------------------
# sampled fields


def _validate(values: np.ndarray, name: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{name} contains non-finite entries")
    return values


@dataclass
class GridScalar:
    """Scalar samples over grid nodes (possibly restricted to a face)."""

    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = _validate(self.values, "GridScalar")


@dataclass
class GridVector:
    """Vector samples; the last axis indexes the n+1 components."""

    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = _validate(self.values, "GridVector")


@dataclass
class GridSym2:
    """Symmetric 2-tensor samples; the last two axes index components.

    Storage keeps the full (d, d) matrix with exact symmetry enforced at
    construction, so swapped-index access is identical by construction.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        v = _validate(self.values, "GridSym2")
        if v.shape[-1] != v.shape[-2]:
            raise ValueError("GridSym2 component axes must be square")
        self.values = 0.5 * (v + np.swapaxes(v, -1, -2))

    def component(self, a: int, b: int) -> np.ndarray:
        return self.values[..., a, b]


# ---------------------------------------------------------------------------
# norms


def _tangential_axes(grid: CornerGrid, kind: str) -> list[int]:
    # Axes (of the bulk array) that count as "tangential derivatives" for H^s.
    return list(range(1, grid.d))


def _derivative_list(axes: Sequence[int], s: int) -> list[tuple[int, ...]]:
    """Multi-indices (as axis tuples) of order <= s, unordered pairs once."""
    out: list[tuple[int, ...]] = [()]
    if s >= 1:
        out.extend((a,) for a in axes)
    if s >= 2:
        for i, a in enumerate(axes):
            for b in axes[i:]:
                out.append((a, b))
    return out


def _apply_derivative(grid: CornerGrid, fld: np.ndarray, combo: tuple[int, ...]) -> np.ndarray:
    if len(combo) == 2 and combo[0] == combo[1]:
        return grid.diff(fld, combo[0], order=2)
    out = fld
    for a in combo:
        out = grid.diff(out, a, order=1)
    return out


def _component_square(fld: np.ndarray, grid_ndim: int) -> np.ndarray:
    sq = fld * fld
    while sq.ndim > grid_ndim:
        sq = sq.sum(axis=-1)
    return sq


def slice_norm(
    grid: CornerGrid,
    fld: np.ndarray,
    t_index: int,
    s: int = 0,
    kind: str = "H",
    mu_s: np.ndarray | None = None,
    mu_c: np.ndarray | None = None,
) -> float:
    """Discrete Sobolev norm of a bulk field on the slice S_t.

    kind "H" sums slice-tangential derivatives only, "Hbar" all spacetime
    derivatives, and "Hcal" adds the accumulated boundary-face contribution
    over C_t = [0, t] x boundary.  ``mu_s`` / ``mu_c`` are the volume-element
    samples of the background metric on a slice and on the boundary face
    (defaults: coordinate measure).
    """
    if s not in (0, 1, 2):
        raise ValueError(f"norm order s must be 0, 1, or 2, got {s}")
    if kind not in ("H", "Hbar", "Hcal"):
        raise ValueError(f"unknown norm kind {kind!r}")
    fld = np.asarray(fld, dtype=float)
    axes = _tangential_axes(grid, kind) if kind == "H" else list(range(grid.d))
    w_slice = grid.quad_weights_slice()
    if mu_s is None:
        mu_s = np.ones_like(w_slice)

    total = 0.0
    for combo in _derivative_list(axes, s):
        df = _apply_derivative(grid, fld, combo)
        sq = _component_square(df[t_index], len(grid.shape) - 1)
        total += float(np.sum(sq * mu_s * w_slice))

    if kind == "Hcal":
        total += _boundary_norm_sq(grid, fld, t_index, s, mu_c)
    return float(np.sqrt(total))


def _time_ring_sum(sq: np.ndarray, w_time: np.ndarray, w_ring: np.ndarray) -> float:
    wt = w_time.reshape((-1,) + (1,) * (sq.ndim - 1))
    return float(np.sum(sq * wt * w_ring[None]))


def _boundary_norm_sq(
    grid: CornerGrid,
    fld: np.ndarray,
    t_index: int,
    s: int,
    mu_c: np.ndarray | None,
) -> float:
    """Squared H-bar^s norm over the boundary portion C_t (all derivatives, restricted)."""
    w_ring = grid.quad_weights_ring()
    w_time = grid.time_weights(t_index)
    if mu_c is None:
        mu_c = np.ones(grid.shape[:1] + grid.shape[2:])
    total = 0.0
    axes = list(range(grid.d))
    for combo in _derivative_list(axes, s):
        df = _apply_derivative(grid, fld, combo)
        face = df[:, -1]
        sq = _component_square(face, len(grid.shape) - 1)
        total += _time_ring_sum(sq * mu_c, w_time, w_ring)
    return total


def boundary_norm(
    grid: CornerGrid,
    fld: np.ndarray,
    t_index: int,
    s: int = 0,
    mu_c: np.ndarray | None = None,
    tangential_only: bool = False,
) -> float:
    """Norm of a boundary-face field over C_t (axes (t, angular...)).

    When ``tangential_only`` derivatives normal to C are never formed; the
    input may then be a pure face array.  Otherwise the input must be a bulk
    array and all spacetime derivatives are restricted to the face.
    """
    if tangential_only:
        w_ring = grid.quad_weights_ring()
        w_time = grid.time_weights(t_index)
        if mu_c is None:
            mu_c = np.ones(grid.shape[:1] + grid.shape[2:])
        dirs = [0] + list(range(2, grid.d))
        total = 0.0
        for combo in _derivative_list(dirs, s):
            df = np.asarray(fld, dtype=float)
            if len(combo) == 2 and combo[0] == combo[1]:
                df = grid.diff_c(df, combo[0], order=2)
            else:
                for a in combo:
                    df = grid.diff_c(df, a, order=1)
            sq = _component_square(df, len(grid.shape) - 1)
            total += _time_ring_sum(sq * mu_c, w_time, w_ring)
        return float(np.sqrt(total))
    return float(np.sqrt(_boundary_norm_sq(grid, np.asarray(fld, float), t_index, s, mu_c)))


def spacetime_norm(
    grid: CornerGrid,
    fld: np.ndarray,
    t_index: int,
    s: int = 0,
    mu_s: np.ndarray | None = None,
) -> float:
    """H^s norm over the spacetime region M_t = [0, t] x S (all derivatives)."""
    fld = np.asarray(fld, dtype=float)
    w_slice = grid.quad_weights_slice()
    w_time = grid.time_weights(t_index)
    if mu_s is None:
        mu_s = np.ones_like(w_slice)
    total = 0.0
    for combo in _derivative_list(list(range(grid.d)), s):
        df = _apply_derivative(grid, fld, combo)
        sq = _component_square(df, len(grid.shape))
        total += _time_ring_sum(sq, w_time, mu_s * w_slice)
    return float(np.sqrt(total))


@dataclass
class SliceNorms:
    """Per-slice norm table for s in {0, 1, 2} and the three kinds."""

    t_index: int
    H: dict[int, float]
    Hbar: dict[int, float]
    Hcal: dict[int, float]

    @classmethod
    def of(
        cls,
        grid: CornerGrid,
        fld: np.ndarray,
        t_index: int,
        mu_s: np.ndarray | None = None,
        mu_c: np.ndarray | None = None,
    ) -> "SliceNorms":
        vals = {
            kind: {s: slice_norm(grid, fld, t_index, s, kind, mu_s, mu_c) for s in (0, 1, 2)}
            for kind in ("H", "Hbar", "Hcal")
        }
        return cls(t_index=t_index, H=vals["H"], Hbar=vals["Hbar"], Hcal=vals["Hcal"])


# ---------------------------------------------------------------------------
# rescaling


def rescale(g, h, lam: float):
    """Rescale a background metric and a field closure to the localization scale.

    Component values of the result at x-tilde equal the original values at
    lam * x-tilde, so k-th coordinate derivatives shrink by lam^k.  Both
    arguments must either expose a ``rescaled(lam)`` method (backgrounds,
    closure-backed fields) or be plain callables of the coordinate arrays.
    """
    if lam <= 0:
        raise ValueError(f"localization scale must be positive, got {lam}")

    def _do(obj):
        if obj is None:
            return None
        if hasattr(obj, "rescaled"):
            return obj.rescaled(lam)
        if callable(obj):
            return lambda *X: obj(*(lam * np.asarray(x) for x in X))
        raise TypeError(f"cannot rescale object of type {type(obj).__name__}")

    return _do(g), _do(h)
