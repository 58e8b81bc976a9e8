"""Explicit solvers for the scalar wave equations of the corner problem.

Two solvers live here.  ``solve_ibvp`` integrates the bulk equation

    -1/2 box_g v + p(dv) = phi

by a first-order-in-time reduction (v, w = dv/dt) stepped with RK4; spatial
derivatives are the second-order stencils of :mod:`cornerlab.grid`.  The
boundary face x1 = 0 is closed by Dirichlet overwrite, or by solving the
one-sided normal-derivative relation for Sommerfeld / Neumann data; the
inner edge x1 = -1 always carries Dirichlet data (zero by default), which
is the localization convention: interesting data never reaches that edge.

``solve_boundary_wave_f`` integrates the boundary-intrinsic equation

    <D^2 f, Pi-hat> + q(df) = rhs

on the face C itself.  Under the convexity assumption the renormalized
stress Pi-hat is a Lorentz metric with timelike dt, so this is a wave
equation on (t, angles) with no spatial boundary (the angles are periodic).
When the assumption fails the solver refuses and attaches the verdict.

``check_energy_estimate`` computes, per time slice, the left and right
sides of the boundary-stable estimates (Dirichlet and Sommerfeld) and of
the Neumann variant; half-integer trace norms are not discretized, the
Neumann bracket uses the whole-integer proxies.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .geometry import (
    BackgroundMetric,
    BoundaryGeometry,
    ConvexityReport,
    christoffel_from,
    inverse_metric,
)
from .grid import CornerGrid, boundary_norm, slice_norm, spacetime_norm

__all__ = [
    "BoundaryConditionSpec",
    "EnergyTrace",
    "WaveError",
    "ConvexityRefusal",
    "solve_ibvp",
    "solve_boundary_wave_f",
    "check_energy_estimate",
]

RATIO_FLOOR = 1e-12


class WaveError(RuntimeError):
    """Raised when a time integration fails (NaN blow-up, bad inputs)."""


class ConvexityRefusal(RuntimeError):
    """Raised when a solve requires the convexity assumption and it fails."""

    def __init__(self, message: str, report: ConvexityReport):
        super().__init__(f"{message} (verdict: {report.verdict}; {report.detail})")
        self.report = report


@dataclass
class BoundaryConditionSpec:
    """Boundary closure at the face C.

    ``data`` is either a trace array of shape (Nt, Nang...) or a callable
    ``data(t) -> (Nang...)``.  For Dirichlet it is the value of v, for
    Sommerfeld the value of (a*dt + b*nu)(v), for Neumann the value of
    nu(v).  The Sommerfeld coefficients default to (1/2, 1).
    """

    kind: str
    data: np.ndarray | Callable | None = None
    a: float = 0.5
    b: float = 1.0
    data_dt: np.ndarray | Callable | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("dirichlet", "sommerfeld", "neumann"):
            raise ValueError(f"unknown boundary condition kind {self.kind!r}")
        if self.kind == "sommerfeld" and (self.a <= 0 or self.b <= 0):
            raise ValueError("Sommerfeld coefficients must satisfy a > 0, b > 0")


def _sample(data, t: float, grid: CornerGrid, shape) -> np.ndarray:
    """Evaluate trace data (callable, time-indexed array, or None) at time t."""
    if data is None:
        return np.zeros(shape)
    if callable(data):
        return np.asarray(data(t), dtype=float) + np.zeros(shape)
    arr = np.asarray(data, dtype=float)
    # linear interpolation between stored time slices (stage times fall mid-step)
    x = t / grid.dt
    k = int(np.clip(np.floor(x), 0, arr.shape[0] - 2))
    w = x - k
    return (1.0 - w) * arr[k] + w * arr[k + 1]


@dataclass
class EnergyTrace:
    """Per-slice energy-estimate monitor rows: (t, kind, s, lhs, rhs, ratio)."""

    rows: list[tuple[float, str, int, float, float, float]] = field(default_factory=list)

    def append(self, t: float, kind: str, s: int, lhs: float, rhs: float) -> None:
        ratio = lhs / rhs if rhs > RATIO_FLOOR else float("nan")
        self.rows.append((t, kind, s, lhs, rhs, ratio))

    @property
    def ratios(self) -> np.ndarray:
        return np.array([r[5] for r in self.rows])

    @property
    def max_ratio(self) -> float:
        finite = self.ratios[np.isfinite(self.ratios)]
        return float(np.max(finite)) if finite.size else float("nan")

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "kind", "s", "lhs", "rhs", "ratio"])
            for row in self.rows:
                writer.writerow([f"{row[0]:.12g}", row[1], row[2]]
                                + [f"{x:.12g}" for x in row[3:]])


class _BulkCoefficients:
    """Cached inverse metric, gauge vector, and boundary normal samplers."""

    def __init__(self, bg: BackgroundMetric, grid: CornerGrid):
        self.bg = bg
        self.grid = grid
        self._spatial = np.meshgrid(*grid.axes[1:], indexing="ij")
        self._cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}
        self._nu_cache: dict[float, np.ndarray] = {}

    def at(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        key = round(t, 12)
        if key not in self._cache:
            X = (np.full_like(self._spatial[0], t),) + tuple(self._spatial)
            g = self.bg.metric(*X)
            ginv = inverse_metric(g)
            V = self.bg.gauge_vector(*X)
            self._cache[key] = (ginv, V)
        return self._cache[key]

    def normal_at(self, t: float) -> np.ndarray:
        """Outward unit normal nu_C^alpha on the boundary nodes at time t."""
        key = round(t, 12)
        if key not in self._nu_cache:
            ginv, _ = self.at(t)
            gb = ginv[-1]
            self._nu_cache[key] = gb[..., :, 1] / np.sqrt(gb[..., 1, 1])[..., None]
        return self._nu_cache[key]


def _spatial_gradients(grid: CornerGrid, v: np.ndarray) -> list[np.ndarray]:
    return [grid.diff_s(v, i) for i in range(1, grid.d)]


def _bx(coeff: np.ndarray, extra: int) -> np.ndarray:
    """Append singleton axes so a coefficient broadcasts over component axes."""
    if extra == 0:
        return coeff
    return coeff.reshape(coeff.shape + (1,) * extra)


def _rhs_bulk(
    grid: CornerGrid,
    coeffs: _BulkCoefficients,
    v: np.ndarray,
    w: np.ndarray,
    t: float,
    phi,
    p,
) -> tuple[np.ndarray, np.ndarray]:
    d = grid.d
    ginv, V = coeffs.at(t)
    extra = v.ndim - (d - 1)
    dv = _spatial_gradients(grid, v)
    dw = _spatial_gradients(grid, w)

    box = _bx(V[..., 0], extra) * w
    for i in range(1, d):
        box += 2.0 * _bx(ginv[..., 0, i], extra) * dw[i - 1]
        box += _bx(V[..., i], extra) * dv[i - 1]
        box += _bx(ginv[..., i, i], extra) * grid.diff_s(v, i, order=2)
        for j in range(i + 1, d):
            box += 2.0 * _bx(ginv[..., i, j], extra) * grid.diff_s(dv[i - 1], j)

    phi_t = _sample(phi, t, grid, v.shape)
    p_t = p(t, v, w, dv) if p is not None else 0.0
    dw_dt = (-2.0 * (phi_t - p_t) - box) / _bx(ginv[..., 0, 0], extra)
    return w, dw_dt


def _close_boundary(
    grid: CornerGrid,
    coeffs: _BulkCoefficients,
    v: np.ndarray,
    w: np.ndarray,
    t: float,
    bc: BoundaryConditionSpec,
    inner,
    inner_dt,
) -> None:
    """Impose the inner-edge and boundary-face closures in place."""
    dr = grid.dr
    v[0] = _sample(inner, t, grid, v[0].shape)
    w[0] = _sample(inner_dt, t, grid, w[0].shape)

    data = _sample(bc.data, t, grid, v[-1].shape)
    if bc.kind == "dirichlet":
        v[-1] = data
        if bc.data_dt is not None:
            w[-1] = _sample(bc.data_dt, t, grid, w[-1].shape)
        return

    nu = coeffs.normal_at(t)
    extra = v.ndim - (grid.d - 1)
    ang = 0.0
    for a in range(2, grid.d):
        ang = ang + _bx(nu[..., a], extra) * grid.diff_s(v, a)[-1]
    nu0 = _bx(nu[..., 0], extra)
    nu1 = _bx(nu[..., 1], extra)
    if bc.kind == "neumann":
        d1v = (data - nu0 * w[-1] - ang) / nu1
    else:  # sommerfeld
        d1v = (data - (bc.a + bc.b * nu0) * w[-1] - bc.b * ang) / (bc.b * nu1)
    v[-1] = (2.0 * dr * d1v + 4.0 * v[-2] - v[-3]) / 3.0


def solve_ibvp(
    bg: BackgroundMetric,
    grid: CornerGrid,
    phi,
    bc: BoundaryConditionSpec,
    v0: np.ndarray,
    w0: np.ndarray,
    p: Callable | None = None,
    inner=None,
    inner_dt=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Integrate -1/2 box_g v + p(dv) = phi; returns (v, w) histories.

    ``phi`` and the boundary data may be callables of t or time-indexed
    arrays.  The returned histories have shape (Nt, Nr, Nang...).
    """
    speed = bg.char_speed(*grid.coords())
    dt_max = grid.cfl_factor * min(grid.dr, grid.dth) / speed
    if grid.dt > dt_max * (1.0 + 1e-12):
        raise WaveError(
            f"grid dt={grid.dt:.3e} exceeds the CFL bound {dt_max:.3e} "
            f"for characteristic speed {speed:.3f}; rebuild the grid with c_max>={speed:.3f}"
        )

    coeffs = _BulkCoefficients(bg, grid)
    Nt = grid.shape[0]
    v = np.array(v0, dtype=float)
    w = np.array(w0, dtype=float)
    vh = np.zeros((Nt,) + v.shape)
    wh = np.zeros((Nt,) + w.shape)
    _close_boundary(grid, coeffs, v, w, 0.0, bc, inner, inner_dt)
    vh[0], wh[0] = v, w

    dt = grid.dt
    for k in range(Nt - 1):
        t = grid.t[k]

        def stage(vs, ws, ts):
            vs, ws = np.array(vs), np.array(ws)
            _close_boundary(grid, coeffs, vs, ws, ts, bc, inner, inner_dt)
            return _rhs_bulk(grid, coeffs, vs, ws, ts, phi, p)

        k1v, k1w = stage(v, w, t)
        k2v, k2w = stage(v + 0.5 * dt * k1v, w + 0.5 * dt * k1w, t + 0.5 * dt)
        k3v, k3w = stage(v + 0.5 * dt * k2v, w + 0.5 * dt * k2w, t + 0.5 * dt)
        k4v, k4w = stage(v + dt * k3v, w + dt * k3w, t + dt)
        v = v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        w = w + dt / 6.0 * (k1w + 2 * k2w + 2 * k3w + k4w)
        _close_boundary(grid, coeffs, v, w, t + dt, bc, inner, inner_dt)
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(w))):
            raise WaveError(f"non-finite values detected at step {k + 1}")
        vh[k + 1], wh[k + 1] = v, w
    return vh, wh


# ---------------------------------------------------------------------------
# boundary-intrinsic wave equation for f


def _interp_time(arr: np.ndarray, grid: CornerGrid, t: float) -> np.ndarray:
    x = t / grid.dt
    k = int(np.clip(np.floor(x), 0, arr.shape[0] - 2))
    wgt = x - k
    return (1.0 - wgt) * arr[k] + wgt * arr[k + 1]


def solve_boundary_wave_f(
    bgeo: BoundaryGeometry,
    rhs,
    f0: np.ndarray,
    ft0: np.ndarray,
    q_scalar: np.ndarray | None = None,
    q_vector: np.ndarray | None = None,
) -> np.ndarray:
    """Integrate <D^2 f, Pi-hat> + q(df) = rhs on the boundary face C.

    ``rhs`` is a face array (Nt, Nang...) or a callable of t; the optional
    first-order term is q(df) = q_scalar * f + q_vector^a d_a f with the
    time component first.  Refuses when the convexity verdict is not
    "holds", since hyperbolicity of the operator is exactly that condition.
    """
    if not bgeo.report.holds:
        raise ConvexityRefusal(
            "the boundary wave operator is hyperbolic only under the convexity assumption",
            bgeo.report,
        )
    grid = bgeo.grid
    n = grid.n
    gamma_inv = bgeo.gamma_inv
    Pihat = bgeo.Pihat
    # raised boundary stress and its contraction with the face Christoffels
    Pi_up = np.einsum("...ac,...bd,...cd->...ab", gamma_inv, gamma_inv, Pihat)
    dirs = [0] + list(range(2, grid.d))
    dgamma = np.stack([grid.diff_c(bgeo.gamma, m) for m in dirs], axis=-3)
    Gam = christoffel_from(gamma_inv, dgamma)
    G = np.einsum("...ab,...cab->...c", Pi_up, Gam)

    shape_face = grid.shape[:1] + grid.shape[2:]
    Nt = shape_face[0]
    fh = np.zeros(shape_face)
    f = np.array(f0, dtype=float)
    w = np.array(ft0, dtype=float)
    fh[0] = f
    dt = grid.dt

    qs = np.zeros(shape_face) if q_scalar is None else np.asarray(q_scalar, float)
    qv = (
        np.zeros(shape_face + (n,))
        if q_vector is None
        else np.asarray(q_vector, float)
    )

    nang = n - 1

    def rate(fs, ws, t):
        Pi_t = _interp_time(Pi_up, grid, t)
        G_t = _interp_time(G, grid, t)
        qs_t = _interp_time(qs, grid, t)
        qv_t = _interp_time(qv, grid, t)
        rhs_t = _sample(rhs, t, grid, fs.shape)
        # periodic angular derivatives; axis q of a face slice is angle q + 2
        dA = []
        for q in range(nang):
            h = grid.spacings[q + 2]
            dA.append((np.roll(fs, -1, q) - np.roll(fs, 1, q)) / (2.0 * h))
        spat = 0.0
        for q in range(nang):
            h = grid.spacings[q + 2]
            spat = spat + Pi_t[..., q + 1, q + 1] * (
                (np.roll(fs, -1, q) - 2.0 * fs + np.roll(fs, 1, q)) / h**2
            )
            spat = spat + 2.0 * Pi_t[..., 0, q + 1] * (
                (np.roll(ws, -1, q) - np.roll(ws, 1, q)) / (2.0 * h)
            )
            for r in range(q + 1, nang):
                hr = grid.spacings[r + 2]
                mixed = (np.roll(dA[q], -1, r) - np.roll(dA[q], 1, r)) / (2.0 * hr)
                spat = spat + 2.0 * Pi_t[..., q + 1, r + 1] * mixed
        low = -G_t[..., 0] * ws
        q_t = qs_t * fs + qv_t[..., 0] * ws
        for q in range(nang):
            low = low - G_t[..., q + 1] * dA[q]
            q_t = q_t + qv_t[..., q + 1] * dA[q]
        dw = (rhs_t - q_t - spat - low) / Pi_t[..., 0, 0]
        return ws, dw

    for k in range(Nt - 1):
        t = grid.t[k]
        k1f, k1w = rate(f, w, t)
        k2f, k2w = rate(f + 0.5 * dt * k1f, w + 0.5 * dt * k1w, t + 0.5 * dt)
        k3f, k3w = rate(f + 0.5 * dt * k2f, w + 0.5 * dt * k2w, t + 0.5 * dt)
        k4f, k4w = rate(f + dt * k3f, w + dt * k3w, t + dt)
        f = f + dt / 6.0 * (k1f + 2 * k2f + 2 * k3f + k4f)
        w = w + dt / 6.0 * (k1w + 2 * k2w + 2 * k3w + k4w)
        if not np.all(np.isfinite(f)):
            raise WaveError(f"non-finite boundary solution at step {k + 1}")
        fh[k + 1] = f
    return fh


# ---------------------------------------------------------------------------
# energy-estimate monitors


def check_energy_estimate(
    bg: BackgroundMetric,
    grid: CornerGrid,
    vh: np.ndarray,
    wh: np.ndarray,
    phi,
    bc: BoundaryConditionSpec,
    s: int = 1,
) -> EnergyTrace:
    """Ratio series LHS/RHS of the per-kind energy estimate at each slice.

    LHS is the bar-H^s slice norm of v; RHS collects the initial norms, the
    accumulated source norm, and the boundary-data norm appropriate to the
    closure kind (the Neumann half-integer trace norm is replaced by its
    whole-integer proxy of the same order as Sommerfeld).
    """
    Xs = grid.coords_initial()
    mu_s = bg.volume_element_slice(*Xs)
    Xc = grid.coords_boundary()
    mu_c = bg.volume_element_boundary(*Xc)

    init = slice_norm(grid, vh, 0, s, "H", mu_s=mu_s) ** 2
    init += slice_norm(grid, wh, 0, max(s - 1, 0), "H", mu_s=mu_s) ** 2

    if callable(phi):
        phi_arr = np.stack([np.broadcast_to(phi(t), grid.shape[1:]) for t in grid.t])
    else:
        phi_arr = np.zeros(grid.shape) if phi is None else np.asarray(phi, float)

    face_shape = grid.shape[:1] + grid.shape[2:]
    if bc.data is None:
        data_arr = np.zeros(face_shape)
    elif callable(bc.data):
        data_arr = np.stack(
            [np.broadcast_to(np.asarray(bc.data(t), float), face_shape[1:]) for t in grid.t]
        )
    else:
        data_arr = np.asarray(bc.data, float)

    s_bdry = s if bc.kind == "dirichlet" else max(s - 1, 0)
    trace = EnergyTrace()
    for k in range(1, grid.shape[0]):
        lhs = slice_norm(grid, vh, k, s, "Hbar", mu_s=mu_s, mu_c=mu_c)
        rhs_sq = init
        rhs_sq += boundary_norm(grid, data_arr, k, s_bdry, mu_c=mu_c, tangential_only=True) ** 2
        rhs_sq += spacetime_norm(grid, phi_arr, k, max(s - 1, 0), mu_s=mu_s) ** 2
        trace.append(float(grid.t[k]), bc.kind, s, lhs, float(np.sqrt(rhs_sq)))
    return trace
