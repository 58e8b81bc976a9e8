"""Harmonic gauge fields: the background field, its linearization, the split.

The background gauge field is V^a = d_mu g^{mu a} + 1/2 g^{a mu} g^{rho sig}
d_mu g_{rho sig}, evaluated from the analytic metric derivatives.  The
linearization in a direction h is the Bianchi operator plus an algebraic
Christoffel term,

    V'_h = beta_g h - <D^2 x^a, h> d_a,   beta_g h = delta_g h + 1/2 d tr_g h,

with <D^2 x^a, h> = -Gamma^a_{mu nu} h^{mu nu}.  ``split_gauge`` decomposes
V'_h into a part V'_F driven by the constraint-violation source F and a part
W'_h driven by the background Ricci curvature; both solve vector wave
equations -1/2 [box X + Ric(X)] = RHS integrated with the bulk solver, with
the first-order connection coupling supplied through the p-term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    BackgroundMetric,
    christoffel_from,
    d_christoffel_from,
    d_inverse_metric,
    inverse_metric,
)
from .grid import CornerGrid
from .waves import BoundaryConditionSpec, solve_ibvp

__all__ = [
    "GaugeField",
    "gauge_field",
    "linearized_gauge",
    "bianchi_one_form",
    "vector_wave_p",
    "split_gauge",
]

_CSTEP = 1e-30
_VACUUM_TOL = 1e-10


@dataclass
class GaugeField:
    """A vector field V^a sampled on the full grid, with provenance."""

    V: np.ndarray
    provenance: str
    note: str = ""

    def __post_init__(self) -> None:
        self.V = np.asarray(self.V)
        if not np.all(np.isfinite(self.V)):
            raise ValueError("gauge field has non-finite entries")
        if self.provenance not in (
            "background",
            "linearized",
            "split_F",
            "split_W",
            "corrector",
        ):
            raise ValueError(f"unknown provenance {self.provenance!r}")

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.V)))


def gauge_field(bg: BackgroundMetric, grid: CornerGrid) -> GaugeField:
    """Background gauge field V^a = d_mu g^{mu a} + 1/2 g^{a mu} tr(g^-1 d_mu g)."""
    X = grid.coords()
    g = bg.metric(*X)
    dg = bg.dmetric(*X)
    ginv = inverse_metric(g)
    dginv = d_inverse_metric(ginv, dg)
    V = np.einsum("...mma->...a", dginv)
    V += 0.5 * np.einsum("...am,...rs,...mrs->...a", ginv, ginv, dg)
    return GaugeField(V, "background")


def bianchi_one_form(
    grid: CornerGrid, ginv: np.ndarray, Gam: np.ndarray, S: np.ndarray
) -> np.ndarray:
    """beta_g S = delta_g S + 1/2 d tr_g S as a one-form, for a sym2 field S.

    ``S`` lives on the full grid with two trailing index axes; derivatives
    are the grid stencils, so the result carries their truncation error.
    Complex inputs are accepted (used by the complex-step linearizations).
    """
    d = grid.d
    dS = np.stack([grid.diff(S, m) for m in range(d)], axis=-3)
    # delta_g S with the sign convention delta = -div
    div = np.einsum("...mn,...mna->...a", ginv, dS)
    div -= np.einsum("...mn,...cmn,...ca->...a", ginv, Gam, S)
    div -= np.einsum("...mn,...cma,...nc->...a", ginv, Gam, S)
    tr = np.einsum("...ab,...ab->...", ginv, S)
    dtr = np.stack([grid.diff(tr, m) for m in range(d)], axis=-1)
    return -div + 0.5 * dtr


def linearized_gauge(bg: BackgroundMetric, grid: CornerGrid, h: np.ndarray) -> GaugeField:
    """V'_h = beta_g h - <D^2 x^a, h> d_a with analytic background Christoffels."""
    X = grid.coords()
    g = bg.metric(*X)
    ginv = inverse_metric(g)
    Gam = bg.christoffel(*X)
    beta = bianchi_one_form(grid, ginv, Gam, np.asarray(h, float))
    h_up = np.einsum("...ma,...nb,...ab->...mn", ginv, ginv, h)
    # -<D^2 x^a, h> = +Gamma^a_{mu nu} h^{mu nu}
    V = np.einsum("...ab,...b->...a", ginv, beta)
    V += np.einsum("...amn,...mn->...a", Gam, h_up)
    return GaugeField(V, "linearized")


class _VectorWaveCoefficients:
    """Cached connection and curvature samplers for the vector wave p-term."""

    def __init__(self, bg: BackgroundMetric, grid: CornerGrid):
        self.bg = bg
        self.grid = grid
        self._spatial = np.meshgrid(*grid.axes[1:], indexing="ij")
        self._cache: dict[float, tuple] = {}

    def at(self, t: float) -> tuple:
        key = round(t, 12)
        if key not in self._cache:
            X = (np.full_like(self._spatial[0], t),) + tuple(self._spatial)
            g = self.bg.metric(*X)
            dg = self.bg.dmetric(*X)
            ginv = inverse_metric(g)
            Gam = christoffel_from(ginv, dg)
            dGam = d_christoffel_from(
                ginv, d_inverse_metric(ginv, dg), dg, self.bg.d2metric(*X)
            )
            V = self.bg.gauge_vector(*X)
            ric_mixed = np.einsum("...ab,...bc->...ac", ginv, self.bg.ricci(*X))
            self._cache[key] = (ginv, Gam, dGam, V, ric_mixed)
        return self._cache[key]


def vector_wave_p(bg: BackgroundMetric, grid: CornerGrid):
    """First-order term p for -1/2 box_s X + p = RHS matching -1/2[box X + Ric(X)].

    The rough wave operator on vectors differs from the componentwise scalar
    one by connection terms; those terms, and the zeroth-order Ricci term,
    are returned as a p-callable for :func:`cornerlab.waves.solve_ibvp`.
    """
    coeffs = _VectorWaveCoefficients(bg, grid)

    def p(t, v, w, dv):
        ginv, Gam, dGam, V, ric = coeffs.at(t)
        # d_mu X^c with mu = 0 the time derivative
        dX = np.stack([w] + list(dv), axis=-2)
        extra = 2.0 * np.einsum("...mn,...anc,...mc->...a", ginv, Gam, dX)
        extra += np.einsum("...mn,...manc,...c->...a", ginv, dGam, v)
        extra += np.einsum("...mn,...mad,...dnc,...c->...a", ginv, Gam, Gam, v)
        extra += np.einsum("...d,...adc,...c->...a", V, Gam, v)
        return -0.5 * (extra + np.einsum("...ac,...c->...a", ric, v))

    return p


def _time_derivative_initial(grid: CornerGrid, fld: np.ndarray) -> np.ndarray:
    return grid.diff(fld, 0)[0]


def _linearized_bianchi_ricci(
    bg: BackgroundMetric, grid: CornerGrid, h: np.ndarray
) -> np.ndarray:
    """beta'_h Ric: complex-step derivative of g -> beta_g(Ric_g0) at g0."""
    X = grid.coords()
    g = bg.metric(*X)
    dg = bg.dmetric(*X)
    ric = bg.ricci(*X)
    hh = np.asarray(h, float)
    gc = g + 1j * _CSTEP * hh
    dh = np.stack([grid.diff(hh, m) for m in range(grid.d)], axis=-3)
    dgc = dg + 1j * _CSTEP * dh
    ginv_c = np.linalg.inv(gc)
    Gam_c = christoffel_from(ginv_c, dgc)
    beta_c = bianchi_one_form(grid, ginv_c, Gam_c, ric.astype(complex))
    return beta_c.imag / _CSTEP


def split_gauge(
    bg: BackgroundMetric,
    grid: CornerGrid,
    F: np.ndarray | None,
    h: np.ndarray,
) -> tuple[GaugeField, GaugeField]:
    """Decompose the gauge variation into (V'_F, W'_h) by their wave equations.

    V'_F solves -1/2[box V'_F + Ric(V'_F)] = beta F with the initial and
    Dirichlet boundary traces of V'_h; W'_h solves the same operator with
    zero data and the background-curvature forcing beta'_h Ric.  The
    second-order coupling through a nonzero background gauge field is
    dropped; when the background is not harmonic this is recorded in the
    returned note.
    """
    X = grid.coords()
    g = bg.metric(*X)
    ginv = inverse_metric(g)
    Gam = bg.christoffel(*X)

    Vh = linearized_gauge(bg, grid, h).V
    v0 = Vh[0]
    w0 = _time_derivative_initial(grid, Vh)
    bc = BoundaryConditionSpec("dirichlet", Vh[:, -1])

    if F is None:
        rhs_F = np.zeros(grid.shape + (grid.d,))
    else:
        beta_F = bianchi_one_form(grid, ginv, Gam, np.asarray(F, float))
        rhs_F = np.einsum("...ab,...b->...a", ginv, beta_F)

    p = vector_wave_p(bg, grid)
    dtVh = grid.diff(Vh, 0)
    VF, _ = solve_ibvp(
        bg, grid, rhs_F, bc, v0, w0, p=p, inner=Vh[:, 0], inner_dt=dtVh[:, 0]
    )

    note = ""
    if bg.max_gauge(*X) > _VACUUM_TOL:
        note = "background is not harmonic; gauge-gauge coupling term dropped"
    if bg.max_ricci(*X) < _VACUUM_TOL:
        rhs_W = np.zeros_like(rhs_F)
    else:
        beta_W = _linearized_bianchi_ricci(bg, grid, h)
        rhs_W = np.einsum("...ab,...b->...a", ginv, beta_W)

    zero = np.zeros(grid.shape[1:] + (grid.d,))
    WH, _ = solve_ibvp(
        bg, grid, rhs_W, BoundaryConditionSpec("dirichlet"), zero, zero, p=p
    )
    return (
        GaugeField(VF, "split_F", note=note),
        GaugeField(WH, "split_W", note=note),
    )
