"""Constraint and corner-compatibility residuals for initial/boundary data.

The data tuple holds the induced metric and second fundamental form of the
initial slice, the slice normal, the gauge vectors on slice and boundary
face, and the induced boundary metric.  ``constraint_residual`` evaluates
the Hamiltonian and momentum rows of the constraint operator on the slice.
``compat_residual`` evaluates, order by order, the matching conditions at
the corner ring that such a tuple must satisfy to arise as the restriction
of one smooth metric solving the gauge-reduced bulk equation:

* order 0: the two induced metrics, the slice normal, and the two gauge
  vectors agree at the ring;
* order 1: the time derivative of the boundary metric is fixed by the
  slice second form and the corner angle, and the tangential gauge
  components are fixed by the reconstructed metric 1-jet;
* order 2: second time derivatives at the ring are fixed by the bulk
  equation, giving residuals for the angular metric block, the mixed
  time rows, the corner-normal component, and the gauge-vector rate.

The order-1 and order-2 entries assume the charts are geodesically
normalized on both faces (unit lapse in t on the boundary face, unit lapse
in x1 on the slice); entries whose derivation additionally needs a right
angle at the ring, or a prescribed time derivative of the gauge one-form,
are skipped with a notice when that ingredient is absent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    BackgroundMetric,
    GeometryError,
    christoffel_from,
    corner_angle,
    d_christoffel_from,
    d_inverse_metric,
    inverse_metric,
    ricci_from,
    second_form_s,
    unit_normal_s,
    vel_residual,
)
from .grid import CornerGrid, fd

__all__ = [
    "ConstraintResidual",
    "CompatReport",
    "CornerData",
    "constraint_residual",
    "compat_residual",
    "corner_data_from_metric",
    "slice_data_from_metric",
]

# chart-normalization tolerance for the order >= 1 corner entries
TOL_CHART = 1e-9
# tolerance on the corner angle for the entries derived at a right angle
TOL_ANGLE = 1e-8


# ---------------------------------------------------------------------------
# data containers


@dataclass
class ConstraintResidual:
    """Both rows of the constraint operator evaluated on the initial slice."""

    hamiltonian: np.ndarray  # scalar field on the slice
    momentum: np.ndarray  # one-form on the slice, tangential components

    def __post_init__(self) -> None:
        if not (np.all(np.isfinite(self.hamiltonian)) and np.all(np.isfinite(self.momentum))):
            raise ValueError("constraint residual has non-finite entries")

    @property
    def max_hamiltonian(self) -> float:
        return float(np.max(np.abs(self.hamiltonian)))

    @property
    def max_momentum(self) -> float:
        return float(np.max(np.abs(self.momentum)))


@dataclass
class CompatReport:
    """Corner-matching residual fields of one differentiability order."""

    order: int
    entries: dict[str, np.ndarray]
    skipped: dict[str, str] = field(default_factory=dict)

    @property
    def maxima(self) -> dict[str, float]:
        return {k: float(np.max(np.abs(v))) for k, v in self.entries.items()}

    @property
    def max_abs(self) -> float:
        vals = list(self.maxima.values())
        return max(vals) if vals else 0.0


@dataclass
class CornerData:
    """Initial and boundary data arrays feeding the corner-matching checks.

    Slice fields carry axes (x1, angles...), boundary fields (t, angles...).
    ``gamma_S``/``kappa`` components run over the slice-tangent coordinate
    directions (x1 first); ``gamma_C`` components over the boundary-tangent
    directions (t first).  ``nu_S``, ``V_S``, ``V_C`` carry full spacetime
    components with the index up.  ``Q_ring`` is the bulk target tensor at
    the ring; ``dt_V`` the time derivative of the lowered gauge one-form at
    the ring.  Both are optional and default to "absent".
    """

    grid: CornerGrid
    gamma_S: np.ndarray
    kappa: np.ndarray
    nu_S: np.ndarray
    V_S: np.ndarray
    gamma_C: np.ndarray
    V_C: np.ndarray
    Q_ring: np.ndarray | None = None
    dt_V: np.ndarray | None = None

    def __post_init__(self) -> None:
        d = self.grid.d
        n = d - 1
        slice_shape = (self.grid.shape[1],) + self.grid.shape[2:]
        face_shape = (self.grid.shape[0],) + self.grid.shape[2:]
        checks = [
            ("gamma_S", self.gamma_S, slice_shape + (n, n)),
            ("kappa", self.kappa, slice_shape + (n, n)),
            ("nu_S", self.nu_S, slice_shape + (d,)),
            ("V_S", self.V_S, slice_shape + (d,)),
            ("gamma_C", self.gamma_C, face_shape + (n, n)),
            ("V_C", self.V_C, face_shape + (d,)),
        ]
        for name, arr, shape in checks:
            arr = np.asarray(arr, float)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            setattr(self, name, arr)
        for name in ("gamma_S", "kappa", "gamma_C"):
            arr = getattr(self, name)
            if np.max(np.abs(arr - np.swapaxes(arr, -1, -2))) > 1e-12:
                raise ValueError(f"{name} is not symmetric")

    def chart_normalized(self, tol: float = TOL_CHART) -> bool:
        """True when both faces use unit-lapse, zero-shift adapted charts."""
        errs = [
            np.max(np.abs(self.gamma_C[..., 0, 0] + 1.0)),
            np.max(np.abs(self.gamma_C[..., 0, 1:])),
            np.max(np.abs(self.gamma_S[..., 0, 0] - 1.0)),
            np.max(np.abs(self.gamma_S[..., 0, 1:])),
        ]
        return max(errs) < tol


# ---------------------------------------------------------------------------
# small helpers


def _dslice(grid: CornerGrid, F: np.ndarray, direction: int, order: int = 1) -> np.ndarray:
    return grid.diff_s(F, direction, order=order)


def _dring(grid: CornerGrid, F: np.ndarray, direction: int, order: int = 1) -> np.ndarray:
    """Angular derivative of a corner-ring field."""
    return fd(F, direction - 2, grid.spacings[direction], periodic=True, order=order)


def _hessian_table(grid: CornerGrid, F: np.ndarray) -> np.ndarray:
    """Spatial Hessian of a slice field, indexed [..., i, j, components...].

    Diagonal entries use direct second-difference stencils (second-order
    one-sided at the x1 edges); mixed entries apply the periodic angular
    derivative first so the one-sided radial stencil acts on a smooth field.
    """
    d = grid.d
    dirs = list(range(1, d))
    pos = d - 1  # number of slice axes; derivative axes are inserted here
    cache: dict[tuple[int, int], np.ndarray] = {}

    def entry(i: int, j: int) -> np.ndarray:
        key = (min(i, j), max(i, j))
        if key not in cache:
            if i == j:
                cache[key] = _dslice(grid, F, i, order=2)
            else:
                inner = max(i, j)  # angular direction, periodic-central
                cache[key] = _dslice(grid, _dslice(grid, F, inner), min(i, j))
        return cache[key]

    rows = [np.stack([entry(i, j) for j in dirs], axis=pos) for i in dirs]
    return np.stack(rows, axis=pos)


def gauge_from_jet(g: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """Gauge vector of a metric 1-jet: the coordinate wave operator on x^a."""
    ginv = inverse_metric(g)
    dginv = d_inverse_metric(ginv, dg)
    V = np.einsum("...mma->...a", dginv)
    V += 0.5 * np.einsum("...am,...rs,...mrs->...a", ginv, ginv, dg)
    return V


def _first_order_remainder(g: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """First-order part of the gauge-reduced bulk operator from a 1-jet.

    The reduced operator equals -1/2 g^{mu nu} d_mu d_nu g_ab plus a term
    depending only on (g, dg).  Evaluating the full operator on the local
    extension with vanishing second metric derivatives isolates that term.
    """
    d = g.shape[-1]
    ginv = inverse_metric(g)
    dginv = d_inverse_metric(ginv, dg)
    Gam = christoffel_from(ginv, dg)
    zero2 = np.zeros(g.shape[:-2] + (d, d, d, d))
    dGam = d_christoffel_from(ginv, dginv, dg, zero2)
    ric0 = ricci_from(Gam, dGam)

    Vup = gauge_from_jet(g, dg)
    # derivative of ginv's derivative on the extension (second metric
    # derivatives vanish there, the products of first derivatives survive)
    dginv2 = -np.einsum("...nac,...mce,...eb->...nmab", dginv, dg, ginv)
    dginv2 -= np.einsum("...ac,...mce,...neb->...nmab", ginv, dg, dginv)
    dVup = np.einsum("...nmma->...na", dginv2)
    dVup += 0.5 * np.einsum("...nam,...rs,...mrs->...na", dginv, ginv, dg)
    dVup += 0.5 * np.einsum("...am,...nrs,...mrs->...na", ginv, dginv, dg)
    Vlow = np.einsum("...ab,...b->...a", g, Vup)
    dVlow = np.einsum("...nab,...b->...na", dg, Vup)
    dVlow += np.einsum("...ab,...nb->...na", g, dVup)
    dstar = 0.5 * (dVlow + np.swapaxes(dVlow, -1, -2))
    dstar -= np.einsum("...cab,...c->...ab", Gam, Vlow)
    return ric0 + dstar


# ---------------------------------------------------------------------------
# constraint operator


def constraint_residual(
    grid: CornerGrid,
    gamma_S: np.ndarray,
    kappa: np.ndarray,
    nu_S: np.ndarray,
    Q: np.ndarray | None = None,
    deltastar_V: np.ndarray | None = None,
) -> ConstraintResidual:
    """Hamiltonian and momentum constraint rows on the initial slice.

    ``gamma_S``/``kappa`` are slice fields over the slice-tangent components,
    ``nu_S`` the unit normal with spacetime components, ``Q`` and
    ``deltastar_V`` optional spacetime sym2 fields restricted to the slice
    (bulk target and symmetrized gauge gradient); both default to zero.
    """
    d = grid.d
    gamma_S = np.asarray(gamma_S, float)
    kappa = np.asarray(kappa, float)
    ginv = inverse_metric(gamma_S)

    dgam = np.stack([_dslice(grid, gamma_S, i) for i in range(1, d)], axis=-3)
    d2gam = _hessian_table(grid, gamma_S)
    dginv = d_inverse_metric(ginv, dgam)
    Gam = christoffel_from(ginv, dgam)
    dGam = d_christoffel_from(ginv, dginv, dgam, d2gam)
    R = np.einsum("...ab,...ab->...", ginv, ricci_from(Gam, dGam))

    trk = np.einsum("...ab,...ab->...", ginv, kappa)
    k2 = np.einsum("...ac,...bd,...ab,...cd->...", ginv, ginv, kappa, kappa)

    dk = np.stack([_dslice(grid, kappa, i) for i in range(1, d)], axis=-3)
    divk = np.einsum("...ik,...kij->...j", ginv, dk)
    divk -= np.einsum("...ik,...lik,...lj->...j", ginv, Gam, kappa)
    divk -= np.einsum("...ik,...lij,...kl->...j", ginv, Gam, kappa)
    dtrk = np.stack([_dslice(grid, trk, i) for i in range(1, d)], axis=-1)

    ham = k2 - trk**2 - R
    mom = divk - dtrk
    for T, sign in ((Q, 1.0), (deltastar_V, -1.0)):
        if T is None:
            continue
        T = np.asarray(T, float)
        Tnn = np.einsum("...a,...b,...ab->...", nu_S, nu_S, T)
        trT = np.einsum("...ij,...ij->...", ginv, T[..., 1:, 1:])
        # with g(nu, nu) = -1 the Gauss identity reads
        # 2 Ein(nu, nu) = R_gamma + (tr kappa)^2 - |kappa|^2 = T(nu, nu) + tr_gamma T
        ham += sign * (Tnn + trT)
        mom -= sign * np.einsum("...a,...aj->...j", nu_S, T)[..., 1:]
    return ConstraintResidual(ham, mom)


# ---------------------------------------------------------------------------
# slice-side metric reconstruction


class _SliceJet:
    """Full spacetime metric and selected derivatives along the slice.

    The time-time and time-space components are recovered algebraically from
    the slice metric and the unit normal; the time derivative of the spatial
    block is recovered from the second fundamental form through the Lie
    derivative definition.
    """

    def __init__(self, data: CornerData):
        grid = data.grid
        d = grid.d
        self.grid = grid
        nu = data.nu_S
        nu0 = nu[..., 0]
        nusp = nu[..., 1:]

        g00_up = -(nu0**2)
        g0i_up = -nu0[..., None] * nusp
        g0j = -np.einsum("...i,...ij->...j", nusp, data.gamma_S) / nu0[..., None]
        g00 = (1.0 - np.einsum("...i,...i->...", g0i_up, g0j)) / g00_up

        dtype = np.result_type(data.gamma_S, nu, float)
        g = np.zeros(data.gamma_S.shape[:-2] + (d, d), dtype=dtype)
        g[..., 0, 0] = g00
        g[..., 0, 1:] = g0j
        g[..., 1:, 0] = g0j
        g[..., 1:, 1:] = data.gamma_S
        self.g = g

        self.dg_spatial = np.stack(
            [_dslice(grid, g, i) for i in range(1, d)], axis=-3
        )  # [..., i, a, b], i over slice directions

        # time derivative of the spatial block from 2*kappa = Lie_nu g
        dnu = np.stack([_dslice(grid, nu, i) for i in range(1, d)], axis=-2)
        adv = np.einsum("...k,...kij->...ij", nusp, self.dg_spatial[..., 1:, 1:])
        stretch = np.einsum("...ia,...aj->...ij", dnu, g[..., :, 1:])
        self.dt_g_spatial = (
            2.0 * data.kappa - adv - stretch - np.swapaxes(stretch, -1, -2)
        ) / nu0[..., None, None]

        # lowered gauge one-form along the slice
        self.V_low = np.einsum("...ab,...b->...a", g, data.V_S)

        # the remaining first derivatives, d_t of the time row, enter the
        # lowered gauge one-form linearly; solve the d-by-d system per point
        dg = np.zeros(g.shape[:-2] + (d, d, d), dtype=dtype)
        dg[..., 1:, :, :] = self.dg_spatial
        dg[..., 0, 1:, 1:] = self.dt_g_spatial
        ginv = inverse_metric(g)

        def vlow(table: np.ndarray) -> np.ndarray:
            out = -np.einsum("...rs,...rsa->...a", ginv, table)
            out += 0.5 * np.einsum("...rs,...ars->...a", ginv, table)
            return out

        base = vlow(dg)
        cols = []
        for b in range(d):
            trial = dg.copy()
            trial[..., 0, 0, b] += 1.0
            trial[..., 0, b, 0] += 1.0
            trial[..., 0, 0, 0] -= 1.0 if b == 0 else 0.0
            cols.append(vlow(trial) - base)
        M = np.stack(cols, axis=-1)
        u = np.linalg.solve(M, (self.V_low - base)[..., None])[..., 0]
        for b in range(d):
            dg[..., 0, 0, b] = u[..., b]
            dg[..., 0, b, 0] = u[..., b]
        self.dt_g_time_row = u
        self.dg = dg


class _RingJet:
    """Metric 1-jet at the corner ring assembled from both data faces.

    The only first derivative not directly expressible from the data is the
    time derivative of the corner-tilt component g_01; it is solved from the
    x1-component of the gauge vector, in which it enters linearly.
    """

    def __init__(self, data: CornerData, sj: _SliceJet):
        grid = data.grid
        d = grid.d
        self.grid = grid
        self.g = sj.g[-1]
        self.ginv = inverse_metric(self.g)
        self.alpha = -self.g[..., 0, 1]

        dg = np.zeros(self.g.shape[:-2] + (d, d, d))
        dg[..., 1:, :, :] = sj.dg_spatial[-1]
        dg[..., 0, 1:, 1:] = sj.dt_g_spatial[-1]
        # time derivatives of the boundary-tangential components from the face
        dt_gc = data.grid.diff_c(data.gamma_C, 0)[0]
        dg[..., 0, 0, 0] = dt_gc[..., 0, 0]
        for A in range(2, d):
            dg[..., 0, 0, A] = dt_gc[..., 0, A - 1]
            dg[..., 0, A, 0] = dt_gc[..., 0, A - 1]

        # solve the remaining slot d_t g_01 from the gauge-vector component
        def v1(x: np.ndarray) -> np.ndarray:
            trial = dg.copy()
            trial[..., 0, 0, 1] = x
            trial[..., 0, 1, 0] = x
            return gauge_from_jet(self.g, trial)[..., 1]

        zeros = np.zeros(self.g.shape[:-2])
        base = v1(zeros)
        coeff = v1(zeros + 1.0) - base
        x = (data.V_S[-1][..., 1] - base) / coeff
        dg[..., 0, 0, 1] = x
        dg[..., 0, 1, 0] = x
        self.dg = dg


# ---------------------------------------------------------------------------
# compatibility residuals


def _order0(data: CornerData) -> CompatReport:
    grid = data.grid
    entries: dict[str, np.ndarray] = {}
    skipped: dict[str, str] = {}
    entries["metric_match"] = data.gamma_S[-1][..., 1:, 1:] - data.gamma_C[0][..., 1:, 1:]
    entries["gauge_match"] = data.V_S[-1] - data.V_C[0]

    try:
        alpha = corner_angle(grid, data.gamma_S, data.kappa, data.gamma_C)
    except GeometryError as exc:
        skipped["normal_match"] = f"corner angle undetermined: {exc}"
        return CompatReport(0, entries, skipped)
    root = np.sqrt(1.0 + alpha**2)
    model = np.zeros(data.nu_S[-1].shape)
    model[..., 0] = 1.0 / root
    model[..., 1] = alpha / root
    entries["normal_match"] = data.nu_S[-1] - model
    return CompatReport(0, entries, skipped)


def _order1(data: CornerData) -> CompatReport:
    grid = data.grid
    entries: dict[str, np.ndarray] = {}
    skipped: dict[str, str] = {}
    if not data.chart_normalized():
        note = "chart is not geodesically normalized on both faces"
        return CompatReport(1, {}, {"first_order_metric": note, "velocity": note, "tangential_gauge": note})

    sj = _SliceJet(data)
    rj = _RingJet(data, sj)
    Vmodel = gauge_from_jet(rj.g, rj.dg)
    comps = [0] + list(range(2, grid.d))
    entries["tangential_gauge"] = data.V_S[-1][..., comps] - Vmodel[..., comps]

    try:
        alpha = corner_angle(grid, data.gamma_S, data.kappa, data.gamma_C)
    except GeometryError as exc:
        note = f"corner angle undetermined: {exc}"
        skipped["first_order_metric"] = note
        skipped["velocity"] = note
        return CompatReport(1, entries, skipped)
    root = np.sqrt(1.0 + alpha**2)

    gamma_ring = data.gamma_S[-1][..., 1:, 1:]
    gamma_ring_inv = np.linalg.inv(gamma_ring)
    kap = data.kappa[-1][..., 1:, 1:]
    B = _dslice(grid, data.gamma_S, 1)[-1][..., 1:, 1:]
    dtg = grid.diff_c(data.gamma_C, 0)[0][..., 1:, 1:]

    # the angular-block matching; its half-trace is the velocity relation,
    # so the second-form coefficient carries the factor two of the Lie
    # derivative normalization
    lh = dtg - 2.0 * root[..., None, None] * kap + alpha[..., None, None] * B
    entries["first_order_metric"] = lh

    a = np.einsum("...AB,...AB->...", gamma_ring_inv, kap)
    b = 0.5 * np.einsum("...AB,...AB->...", gamma_ring_inv, B)
    c = 0.5 * np.einsum("...AB,...AB->...", gamma_ring_inv, dtg)
    entries["velocity"] = vel_residual(a, b, c, alpha)
    return CompatReport(1, entries, skipped)


def _d2_table(data: CornerData, sj: _SliceJet, rj: _RingJet) -> np.ndarray:
    """Second coordinate derivatives of the metric at the ring, where known.

    Entries the data does not determine (pure second time derivatives other
    than along the face, and the mixed time-x1 derivatives of the time row)
    are left zero; the callers only combine this table with coefficients
    that vanish for right-angle, chart-normalized data.
    """
    grid = data.grid
    d = grid.d
    ring_shape = rj.g.shape[:-2]
    D2 = np.zeros(ring_shape + (d, d, d, d))

    hess = _hessian_table(grid, sj.g)[-1]  # [..., i, j, a, b]
    for i in range(1, d):
        for j in range(1, d):
            D2[..., i, j, :, :] = hess[..., i - 1, j - 1, :, :]

    dts = np.stack([_dslice(grid, sj.dt_g_spatial, i) for i in range(1, d)], axis=-3)[-1]
    for i in range(1, d):
        D2[..., 0, i, 1:, 1:] = dts[..., i - 1, :, :]
        D2[..., i, 0, 1:, 1:] = dts[..., i - 1, :, :]

    # slice derivatives of the gauge-determined time derivatives of the
    # time row, evaluated at the ring
    drow = np.stack(
        [_dslice(grid, sj.dt_g_time_row, i) for i in range(1, d)], axis=-2
    )[-1]
    for i in range(1, d):
        for a in range(d):
            D2[..., 0, i, 0, a] = drow[..., i - 1, a]
            D2[..., 0, i, a, 0] = drow[..., i - 1, a]
            D2[..., i, 0, 0, a] = drow[..., i - 1, a]
            D2[..., i, 0, a, 0] = drow[..., i - 1, a]
    return D2


def _dV_expansion(
    nu_dir: int, comp: int, g: np.ndarray, dg: np.ndarray, D2: np.ndarray
) -> np.ndarray:
    """Derivative along ``nu_dir`` of the lowered gauge component ``comp``.

    Expands the coordinate identity for the lowered gauge one-form; second
    metric derivatives are read from the (partially filled) table ``D2``.
    """
    ginv = inverse_metric(g)
    dginv = d_inverse_metric(ginv, dg)
    term = -np.einsum("...rs,...rs->...", dginv[..., nu_dir, :, :], dg[..., :, :, comp])
    term -= np.einsum("...rs,...rs->...", ginv, D2[..., nu_dir, :, :, comp])
    term += 0.5 * np.einsum("...rs,...rs->...", dginv[..., nu_dir, :, :], dg[..., comp, :, :])
    term += 0.5 * np.einsum("...rs,...rs->...", ginv, D2[..., nu_dir, comp, :, :])
    return term


def _order2(data: CornerData) -> CompatReport:
    grid = data.grid
    d = grid.d
    entries: dict[str, np.ndarray] = {}
    skipped: dict[str, str] = {}
    names = (
        "second_order_metric",
        "second_order_mixed",
        "second_order_corner_normal",
        "second_order_gauge_rate",
    )
    if not data.chart_normalized():
        note = "chart is not geodesically normalized on both faces"
        return CompatReport(2, {}, {name: note for name in names})

    sj = _SliceJet(data)
    rj = _RingJet(data, sj)
    ginv = rj.ginv
    F = _first_order_remainder(rj.g, rj.dg)
    ring_shape = rj.g.shape[:-2]
    Q = np.zeros(ring_shape + (d, d)) if data.Q_ring is None else np.asarray(data.Q_ring, float)
    D2 = _d2_table(data, sj, rj)

    # spatial metric block: the bulk equation fixes its second time
    # derivative from spatial data, mixed terms, and the target tensor;
    # the angular part is compared against the face, the rest feeds the
    # second-derivative table
    d2t_gc = grid.diff_c(data.gamma_C, 0, order=2)[0]
    for i in range(1, d):
        for j in range(1, d):
            rhs = -2.0 * (Q[..., i, j] - F[..., i, j])
            rhs -= 2.0 * np.einsum(
                "...k,...k->...", ginv[..., 0, 1:], D2[..., 0, 1:, i, j]
            )
            rhs -= np.einsum(
                "...kl,...kl->...", ginv[..., 1:, 1:], D2[..., 1:, 1:, i, j]
            )
            D2[..., 0, 0, i, j] = rhs / ginv[..., 0, 0]
    res_g = np.zeros(ring_shape + (d - 2, d - 2))
    for A in range(2, d):
        for B in range(2, d):
            res_g[..., A - 2, B - 2] = d2t_gc[..., A - 1, B - 1] - D2[..., 0, 0, A, B]
    entries["second_order_metric"] = res_g

    right_angle = float(np.max(np.abs(rj.alpha))) < TOL_ANGLE
    if not right_angle:
        note = "corner angle is not zero; right-angle-only entries not evaluated"
        skipped["second_order_mixed"] = note
        skipped["second_order_corner_normal"] = note
        skipped["second_order_gauge_rate"] = note
        return CompatReport(2, entries, skipped)

    # mixed time rows: their second time derivative vanishes on the
    # normalized face, so the bulk equation ties the spatial Hessian of the
    # reconstructed shift row directly to the target tensor
    comps = [0] + list(range(2, d))
    res_m = []
    for a in comps:
        spatial = np.einsum("...ij,...ij->...", ginv[..., 1:, 1:], D2[..., 1:, 1:, 0, a])
        res_m.append(Q[..., 0, a] - (-0.5 * spatial + F[..., 0, a]))
    entries["second_order_mixed"] = np.stack(res_m, axis=-1)

    if data.dt_V is None:
        note = "time derivative of the gauge one-form not supplied"
        skipped["second_order_corner_normal"] = note
        skipped["second_order_gauge_rate"] = note
        return CompatReport(2, entries, skipped)
    dt_V = np.asarray(data.dt_V, float)

    # corner-normal component: the unknown second time derivative of the
    # tilt is eliminated between the time derivative of the x1 gauge
    # component and the x1 derivative of the time gauge component (the
    # undetermined mixed derivative of the lapse cancels in the sum)
    d1_V0 = _dslice(grid, sj.V_low, 1)[-1][..., 0]
    k1 = _dV_expansion(0, 1, rj.g, rj.dg, D2)
    k0 = _dV_expansion(1, 0, rj.g, rj.dg, D2)
    d2t_g01 = (dt_V[..., 1] - k1) + (d1_V0 - k0)
    spatial01 = np.einsum("...ij,...ij->...", ginv[..., 1:, 1:], D2[..., 1:, 1:, 0, 1])
    model_q01 = -0.5 * (ginv[..., 0, 0] * d2t_g01 + spatial01) + F[..., 0, 1]
    entries["second_order_corner_normal"] = Q[..., 0, 1] - model_q01

    # gauge-vector rate: the tangential components of the time derivative
    # of the gauge one-form are determined by the data
    res_v = []
    for a in comps:
        res_v.append(dt_V[..., a] - _dV_expansion(0, a, rj.g, rj.dg, D2))
    entries["second_order_gauge_rate"] = np.stack(res_v, axis=-1)
    return CompatReport(2, entries, skipped)


def compat_residual(order: int, data: CornerData) -> CompatReport:
    """Corner-matching residuals of the given differentiability order."""
    if order == 0:
        return _order0(data)
    if order == 1:
        return _order1(data)
    if order == 2:
        return _order2(data)
    raise ValueError("matching orders above two are not implemented")


# ---------------------------------------------------------------------------
# restriction of a smooth metric to the data tuple


def _deltastar_gauge(bg: BackgroundMetric, grid: CornerGrid) -> np.ndarray:
    """Symmetrized covariant gradient of the lowered gauge one-form, on the grid."""
    X = grid.coords()
    g = bg.metric(*X)
    Gam = bg.christoffel(*X)
    V_low = np.einsum("...ab,...b->...a", g, bg.gauge_vector(*X))
    dV = np.stack([grid.diff(V_low, m) for m in range(grid.d)], axis=-2)
    out = 0.5 * (dV + np.swapaxes(dV, -1, -2))
    out -= np.einsum("...cab,...c->...ab", Gam, V_low)
    return out


def slice_data_from_metric(bg: BackgroundMetric, grid: CornerGrid) -> dict:
    """Initial-slice constraint data induced by an analytic metric.

    Returns gamma_S, kappa, nu_S (exact restriction), and the bulk target
    Q = Ric + the symmetrized gauge gradient together with that gradient
    itself (gradient by grid differencing).
    """
    Xs = grid.coords_initial()
    g = bg.metric(*Xs)
    ginv = inverse_metric(g)
    dg = bg.dmetric(*Xs)
    dstar = _deltastar_gauge(bg, grid)[0]
    return {
        "gamma_S": g[..., 1:, 1:],
        "kappa": second_form_s(g, ginv, dg)[..., 1:, 1:],
        "nu_S": unit_normal_s(g, ginv),
        "Q": bg.ricci(*Xs) + dstar,
        "deltastar_V": dstar,
    }


def corner_data_from_metric(bg: BackgroundMetric, grid: CornerGrid) -> CornerData:
    """Full data tuple induced by an analytic metric (corner ingredients too)."""
    sl = slice_data_from_metric(bg, grid)
    Xc = grid.coords_boundary()
    gc = bg.metric(*Xc)
    dirs = [0] + list(range(2, grid.d))
    gamma_C = gc[..., dirs, :][..., :, dirs]
    V_C = bg.gauge_vector(*Xc)

    X = grid.coords()
    g = bg.metric(*X)
    V_low = np.einsum("...ab,...b->...a", g, bg.gauge_vector(*X))
    dt_V = grid.diff(V_low, 0)[0, -1]
    dstar_ring = _deltastar_gauge(bg, grid)[0, -1]
    Xr = grid.coords_corner()
    Q_ring = bg.ricci(*Xr) + dstar_ring

    Xs = grid.coords_initial()
    return CornerData(
        grid=grid,
        gamma_S=sl["gamma_S"],
        kappa=sl["kappa"],
        nu_S=sl["nu_S"],
        V_S=bg.gauge_vector(*Xs),
        gamma_C=gamma_C,
        V_C=V_C,
        Q_ring=Q_ring,
        dt_V=dt_V,
    )
