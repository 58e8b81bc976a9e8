"""Staged solves of the linearized reduced system with corner boundary data.

The solver assembles a bulk metric variation h from modified boundary data
(h_A, eta, V'_C), bulk source F, and initial variations.  Step 0 solves the
decoupled chain: the A-orthogonal tangential block, the boundary wave for the
trace coefficient f, a Sommerfeld solve for h(dt, nu), a Dirichlet solve for
h(nu, nu), and Neumann solves for the mixed normal-angular components.  Each
later stage feeds the coupling defect of the previous iterate back through the
same chain with zero target data; the localization scale lam makes the defect
a contraction.  Plain Dirichlet data are handled by converting the trace to
modified data and correcting with a deformation-vector solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np

from . import compat
from .boundary import (
    DirichletBoundaryData,
    ModifiedBoundaryData,
    _cutoff,
    _deltastar_bulk,
    _face_dirs,
    _tangential_block,
    eta_of,
    extend_ahat,
    f_equation_rhs,
    f_initial,
    neumann_rhs_hnua,
    normal_field,
    sommerfeld_rhs_h0nu,
    split_trace,
)
from .gauge import (
    _linearized_bianchi_ricci,
    bianchi_one_form,
    linearized_gauge,
    vector_wave_p,
)
from .geometry import (
    BackgroundMetric,
    BoundaryGeometry,
    christoffel_from,
    d_christoffel_from,
    d_inverse_metric,
    inverse_metric,
    ricci_from,
)
from .grid import (
    CornerGrid,
    _apply_derivative,
    _component_square,
    _derivative_list,
    boundary_norm,
    slice_norm,
    spacetime_norm,
)
from .waves import BoundaryConditionSpec, ConvexityRefusal, solve_ibvp, solve_boundary_wave_f

__all__ = [
    "SolverError",
    "VacuumRefusal",
    "TargetData",
    "IterationHistory",
    "SolveReport",
    "TameCheck",
    "FaceEnergyMonitor",
    "reduced_operator",
    "coupling_defect",
    "reduced_residual",
    "gauge_mismatch",
    "initial_variation",
    "solve_modified",
    "solve_dirichlet",
    "verify_tame_estimate",
    "hnu_energy_monitor",
]

_CSTEP = 1e-30
_VACUUM_TOL = 1e-10


class SolverError(RuntimeError):
    """Raised for invalid solver inputs or undefined diagnostics."""


class VacuumRefusal(RuntimeError):
    """Raised when the Dirichlet conversion is requested off a vacuum background.

    The corrector argument controls the conversion error only when the
    background is Ricci-flat and harmonic; otherwise the term
    ``L_X Ric_g + (delta*)'_{delta* X} V_g`` is not quadratically small.
    """


# ---------------------------------------------------------------------------
# target data


@dataclass
class TargetData:
    """Target data for one solve: boundary data, bulk source, initial variations.

    ``boundary`` carries the face data matching ``flavor``; the bulk source F
    and the four initial variation fields (slice metric, second form, unit
    normal, gauge vector) default to zero.  All arrays refer to the localized
    background actually handed to the solver.
    """

    boundary: ModifiedBoundaryData | DirichletBoundaryData
    flavor: str
    F: np.ndarray | None = None
    gamma_S: np.ndarray | None = None
    kappa: np.ndarray | None = None
    nu_S: np.ndarray | None = None
    V_S: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.flavor not in ("modified", "dirichlet"):
            raise SolverError(f"unknown target flavor {self.flavor!r}")
        want = ModifiedBoundaryData if self.flavor == "modified" else DirichletBoundaryData
        if not isinstance(self.boundary, want):
            raise SolverError(
                f"flavor {self.flavor!r} requires boundary data of type {want.__name__}"
            )

    def has_initial(self) -> bool:
        return any(
            fld is not None and np.max(np.abs(fld)) > 0
            for fld in (self.gamma_S, self.kappa, self.nu_S, self.V_S)
        )

    def validate(self, grid: CornerGrid) -> None:
        d = grid.d
        if self.F is not None:
            F = np.asarray(self.F, float)
            if F.shape != grid.shape + (d, d):
                raise SolverError(f"bulk source has shape {F.shape}, expected {grid.shape + (d, d)}")
            if not np.all(np.isfinite(F)):
                raise SolverError("bulk source contains non-finite entries")
            if not np.allclose(F, np.swapaxes(F, -1, -2)):
                raise SolverError("bulk source must be a symmetric 2-tensor field")
            if np.max(np.abs(F[:, 0])) > 0:
                raise SolverError("bulk source must vanish on the inner edge")
        for name in ("gamma_S", "kappa", "nu_S", "V_S"):
            fld = getattr(self, name)
            if fld is not None and not np.all(np.isfinite(np.asarray(fld, float))):
                raise SolverError(f"initial variation {name} contains non-finite entries")

    @classmethod
    def zero(cls, bgeo: BoundaryGeometry, flavor: str = "modified") -> "TargetData":
        grid = bgeo.grid
        face = grid.shape[:1] + grid.shape[2:]
        n = grid.n
        if flavor == "modified":
            bdata = ModifiedBoundaryData(
                np.zeros(face + (n, n)), np.zeros(face), np.zeros(face + (grid.d,))
            )
        else:
            bdata = DirichletBoundaryData(
                np.zeros(face + (n, n)), np.zeros(face + (grid.d,))
            )
        return cls(boundary=bdata, flavor=flavor)


# ---------------------------------------------------------------------------
# reports


@dataclass
class IterationHistory:
    """Per-stage correction norms N^s, their N^1 ratios, and the verdict."""

    norms: list[dict[int, float]]
    ratios: list[float]
    verdict: str
    tol_iter: float
    note: str = ""


@dataclass
class SolveReport:
    """Everything a solve produced: the iterate, its gauge field, diagnostics."""

    h: np.ndarray
    V: np.ndarray
    history: IterationHistory
    residual: float
    trace_errors: dict[str, float]
    lam: float
    flavor: str
    notes: list[str] = field(default_factory=list)
    f_history: np.ndarray | None = None
    tame_ratio: float | None = None


@dataclass
class TameCheck:
    """One tame-estimate evaluation: solution norm against the weighted data norm."""

    s: int
    lhs: float
    rhs: float
    ratio: float


@dataclass
class FaceEnergyMonitor:
    """Per-slice face energy of the normal trace against the boundary-data bound."""

    t: np.ndarray
    energy: np.ndarray
    bound: float
    max_ratio: float
    skipped: bool = False
    note: str = ""


# ---------------------------------------------------------------------------
# differential operators


def _diff3(grid: CornerGrid, fld: np.ndarray, m: int) -> np.ndarray:
    """First difference with third-order one-sided rows on non-periodic axes.

    The interior stencil matches the grid's central difference.  Composing
    two of the standard second-order one-sided rows loses an order at the
    boundary, which would cap the solve at first-order accuracy near the
    face; the wider end rows keep the composed Hessian second order there.
    """
    out = grid.diff(fld, m)
    if grid.periodic[m]:
        return out
    h = grid.spacings[m]

    def row(i):
        return (slice(None),) * m + (i,)

    f = fld
    out[row(0)] = (
        -11.0 * f[row(0)] + 18.0 * f[row(1)] - 9.0 * f[row(2)] + 2.0 * f[row(3)]
    ) / (6.0 * h)
    out[row(-1)] = (
        11.0 * f[row(-1)] - 18.0 * f[row(-2)] + 9.0 * f[row(-3)] - 2.0 * f[row(-4)]
    ) / (6.0 * h)
    return out


def _spacetime_hessian(grid: CornerGrid, fld: np.ndarray) -> np.ndarray:
    """Second-derivative table [..., mu, nu, comps] over all coordinates.

    Every entry, the diagonal included, is a composition of two first
    difference stencils.  The gauge part of the reduced operator reaches its
    second derivatives by differentiating a first-derivative field, so only
    the composed form makes the principal parts of L and the componentwise
    box cancel exactly in the coupling defect; a direct second-difference
    diagonal would leave a mesh-scale remainder acting on rough fields.
    """
    d = grid.d
    pos = len(grid.shape)
    cache: dict[tuple[int, int], np.ndarray] = {}

    def entry(m: int, n: int) -> np.ndarray:
        key = (min(m, n), max(m, n))
        if key not in cache:
            cache[key] = _diff3(grid, _diff3(grid, fld, key[1]), key[0])
        return cache[key]

    rows = [np.stack([entry(m, n) for n in range(d)], axis=pos) for m in range(d)]
    return np.stack(rows, axis=pos)


def reduced_operator(bg: BackgroundMetric, grid: CornerGrid, h: np.ndarray) -> np.ndarray:
    """L(h): linearization of Ric_g + delta*_g V_g at g, by complex step.

    The metric jet of the perturbation is formed with the grid stencils, so
    the result carries their truncation error near the non-periodic edges.
    """
    X = grid.coords()
    g = bg.metric(*X)
    dg = bg.dmetric(*X)
    d2g = bg.d2metric(*X)
    hh = np.asarray(h, float)

    dh = np.stack([_diff3(grid, hh, m) for m in range(grid.d)], axis=-3)
    d2h = _spacetime_hessian(grid, hh)
    gc = g + 1j * _CSTEP * hh
    dgc = dg + 1j * _CSTEP * dh
    d2gc = d2g + 1j * _CSTEP * d2h

    ginv = np.linalg.inv(gc)
    dginv = d_inverse_metric(ginv, dgc)
    Gam = christoffel_from(ginv, dgc)
    dGam = d_christoffel_from(ginv, dginv, dgc, d2gc)
    ric = ricci_from(Gam, dGam)

    V = compat.gauge_from_jet(gc, dgc)
    V_low = np.einsum("...ab,...b->...a", gc, V)
    dV = np.stack([_diff3(grid, V_low, m) for m in range(grid.d)], axis=-2)
    cov = dV - np.einsum("...cab,...c->...ab", Gam, V_low)
    dstar = 0.5 * (cov + np.swapaxes(cov, -1, -2))
    return (ric + dstar).imag / _CSTEP


def _component_box(bg: BackgroundMetric, grid: CornerGrid, fld: np.ndarray) -> np.ndarray:
    """Componentwise rough wave operator g^{mn} d_m d_n + V^m d_m on a sym2 field."""
    X = grid.coords()
    ginv = inverse_metric(bg.metric(*X))
    V = bg.gauge_vector(*X)
    dfld = np.stack([_diff3(grid, fld, m) for m in range(grid.d)], axis=-3)
    d2fld = _spacetime_hessian(grid, fld)
    out = np.einsum("...mn,...mnab->...ab", ginv, d2fld)
    out += np.einsum("...m,...mab->...ab", V, dfld)
    return out


def coupling_defect(bg: BackgroundMetric, grid: CornerGrid, h: np.ndarray) -> np.ndarray:
    """P(h) = L(h) + 1/2 box h: everything below the principal part.

    Its coefficients carry at least one background derivative, so localizing
    the background shrinks P linearly in the scale; that is what makes the
    stage iteration contract.
    """
    return reduced_operator(bg, grid, h) + 0.5 * _component_box(bg, grid, h)


def reduced_residual(
    bg: BackgroundMetric,
    grid: CornerGrid,
    h: np.ndarray,
    F: np.ndarray | None = None,
    margin: int = 2,
) -> float:
    """max |L(h) - F| over nodes at least ``margin`` rows from the t and x1 edges."""
    res = reduced_operator(bg, grid, h)
    if F is not None:
        res = res - np.asarray(F, float)
    m = min(margin, (grid.shape[0] - 1) // 2, (grid.shape[1] - 1) // 2)
    sub = res[m : res.shape[0] - m, m : res.shape[1] - m]
    return float(np.max(np.abs(sub)))


def gauge_mismatch(
    bg: BackgroundMetric, grid: CornerGrid, report: "SolveReport", margin: int = 2
) -> float:
    """max |V'_h - V| between the direct gauge variation and the accumulated field."""
    bg_loc = bg.rescaled(report.lam)
    Vh = linearized_gauge(bg_loc, grid, report.h).V
    diff = Vh - report.V
    m = min(margin, (grid.shape[0] - 1) // 2, (grid.shape[1] - 1) // 2)
    sub = diff[m : diff.shape[0] - m, m : diff.shape[1] - m]
    return float(np.max(np.abs(sub)))


# ---------------------------------------------------------------------------
# initial data reconstruction


def initial_variation(
    bg: BackgroundMetric, grid: CornerGrid, target: TargetData
) -> tuple[np.ndarray, np.ndarray]:
    """(h, d_t h) on the initial slice induced by the target's initial variations.

    Differentiates the slice reconstruction of the spacetime metric through
    the data by complex step; the background enters through its exact
    restriction, so a zero variation returns exact zeros.
    """
    d = grid.d
    shape = grid.shape[1:] + (d, d)
    if not target.has_initial():
        return np.zeros(shape), np.zeros(shape)

    base = compat.slice_data_from_metric(bg, grid)
    Xs = grid.coords_initial()
    V0 = bg.gauge_vector(*Xs)

    def bump(name, base_fld):
        var = getattr(target, name)
        if var is None:
            return base_fld.astype(complex)
        return base_fld + 1j * _CSTEP * np.asarray(var, float)

    data = SimpleNamespace(
        grid=grid,
        gamma_S=bump("gamma_S", base["gamma_S"]),
        kappa=bump("kappa", base["kappa"]),
        nu_S=bump("nu_S", base["nu_S"]),
        V_S=bump("V_S", V0),
    )
    sj = compat._SliceJet(data)
    h0 = sj.g.imag / _CSTEP
    ht0 = np.zeros(shape)
    ht0[..., 1:, 1:] = sj.dt_g_spatial.imag / _CSTEP
    row = sj.dt_g_time_row.imag / _CSTEP
    ht0[..., 0, :] = row
    ht0[..., :, 0] = row
    return h0, ht0


# ---------------------------------------------------------------------------
# assembly helpers


def _assemble(grid: CornerGrid, nu: np.ndarray, T_block, s1, sA, snunu) -> np.ndarray:
    """Rebuild coordinate components from the tangential block and nu-contractions."""
    d = grid.d
    dirs = _face_dirs(grid)
    h = np.zeros(nu.shape[:-1] + (d, d))
    for k, a in enumerate(dirs):
        for l, b in enumerate(dirs):
            h[..., a, b] = T_block[..., k, l]
    nu1 = nu[..., 1]

    h01 = s1 - np.einsum("...m,...m->...", nu, h[..., 0, :])
    h01 = h01 / nu1
    h[..., 0, 1] = h01
    h[..., 1, 0] = h01
    for a in range(2, d):
        h1a = sA[..., a - 2] - np.einsum("...m,...m->...", nu, h[..., :, a])
        h1a = h1a / nu1
        h[..., 1, a] = h1a
        h[..., a, 1] = h1a
    rest = np.einsum("...a,...b,...ab->...", nu, nu, h) - nu1 * nu1 * h[..., 1, 1]
    h[..., 1, 1] = (snunu - rest) / (nu1 * nu1)
    return h


def _contract_source(src: np.ndarray, nu: np.ndarray, dirs) -> dict:
    """Contractions of a bulk sym2 source for the five scalar/block solves."""
    return {
        "T": src[..., dirs, :][..., :, dirs],
        "s1": np.einsum("...m,...m->...", nu, src[..., 0, :]),
        "snunu": np.einsum("...a,...b,...ab->...", nu, nu, src),
        "sA": np.stack(
            [np.einsum("...m,...m->...", nu, src[..., :, a]) for a in range(2, src.shape[-1])],
            axis=-1,
        ),
    }


def _contraction_commutators(grid: CornerGrid, env: dict, h_prev: np.ndarray) -> dict:
    """Bulk sources that keep the nu-contracted scalar solves componentwise consistent.

    Contracting a field with nu before applying the wave operator produces
    first-order commutator terms in the derivatives of nu; without them the
    scalar solves satisfy only the contracted equation and the assembled
    components inherit a defect of the size of the normal's gradient.  The
    terms carry at least one derivative of nu, so they shrink with the
    localization scale, and they are fed back lagged like the coupling
    defect, telescoping to the correction for the accumulated field.
    """
    ginv = env["ginv"]
    dnu = env["dnu"]
    box_nu = env["box_nu"]
    dh = np.stack([_diff3(grid, h_prev, c) for c in range(grid.d)], axis=-3)
    k1 = np.einsum("...m,...m->...", box_nu, h_prev[..., 0, :])
    k1 += 2.0 * np.einsum("...cd,...cm,...dm->...", ginv, dnu, dh[..., 0, :])
    knn = np.einsum("...ab,...ab->...", env["box_W"], h_prev)
    knn += 2.0 * np.einsum("...cd,...cab,...dab->...", ginv, env["dW"], dh)
    kA = np.einsum("...m,...ma->...a", box_nu, h_prev[..., :, 2:])
    kA += 2.0 * np.einsum("...cd,...cm,...dma->...a", ginv, dnu, dh[..., :, :, 2:])
    return {"s1": -0.5 * k1, "snunu": -0.5 * knn, "sA": -0.5 * kA}


def _zero_mdata(grid: CornerGrid) -> ModifiedBoundaryData:
    face = grid.shape[:1] + grid.shape[2:]
    n = grid.n
    return ModifiedBoundaryData(
        np.zeros(face + (n, n)), np.zeros(face), np.zeros(face + (grid.d,))
    )


def _history_norms(grid: CornerGrid, fld: np.ndarray) -> dict[int, float]:
    """N^s = max over slices of the Hbar^s norm, for s in {0, 1, 2}."""
    w_slice = grid.quad_weights_slice()
    out = {}
    for s in (0, 1, 2):
        total = np.zeros(grid.shape[0])
        for combo in _derivative_list(list(range(grid.d)), s):
            df = _apply_derivative(grid, np.asarray(fld, float), combo)
            sq = _component_square(df, len(grid.shape))
            total += np.sum(sq * w_slice, axis=tuple(range(1, len(grid.shape))))
        out[s] = float(np.max(np.sqrt(total)))
    return out


def _w_field(bg: BackgroundMetric, grid: CornerGrid, h: np.ndarray, env: dict) -> np.ndarray:
    """W'_h: zero-data vector wave forced by the curvature bracket beta'_h Ric."""
    if env["max_ricci"] < _VACUUM_TOL:
        return np.zeros(grid.shape + (grid.d,))
    beta_W = _linearized_bianchi_ricci(bg, grid, h)
    rhs = np.einsum("...ab,...b->...a", env["ginv"], beta_W)
    zero = np.zeros(grid.shape[1:] + (grid.d,))
    WH, _ = solve_ibvp(
        bg, grid, rhs, BoundaryConditionSpec("dirichlet"), zero, zero, p=env["vec_p"]
    )
    return WH


def _initial_gauge_traces(
    bg: BackgroundMetric,
    grid: CornerGrid,
    env: dict,
    F: np.ndarray | None,
    init: tuple[np.ndarray, np.ndarray] | None,
) -> tuple[np.ndarray, np.ndarray]:
    """(V'_h, d_t V'_h) on the initial slice induced by the initial variations.

    The gauge variation is first order in the metric jet, so its slice trace
    follows from (h, d_t h); its time derivative additionally needs d_t^2 h,
    which the bulk wave equation supplies.
    """
    shape = grid.shape[1:] + (grid.d,)
    if init is None:
        return np.zeros(shape), np.zeros(shape)
    h0, ht0 = init
    t = grid.t.reshape((-1,) + (1,) * (len(grid.shape) - 1 + 2))
    hist = h0[None] + t * ht0[None]
    box_partial = _component_box(bg, grid, hist)[0]
    rhs = np.zeros_like(box_partial) if F is None else -2.0 * np.asarray(F, float)[0]
    g00 = env["ginv"][0, ..., 0, 0]
    htt0 = (rhs - box_partial) / g00[..., None, None]
    hist = hist + 0.5 * t * t * htt0[None]
    Vh = linearized_gauge(bg, grid, hist).V
    return Vh[0], grid.diff(Vh, 0)[0]


def _vf_field(
    bg: BackgroundMetric,
    grid: CornerGrid,
    env: dict,
    F: np.ndarray | None,
    mdata: ModifiedBoundaryData,
    init: tuple[np.ndarray, np.ndarray] | None,
) -> np.ndarray:
    """V'_F: vector wave forced by the Bianchi form of F with the target gauge traces."""
    if F is None:
        rhs = np.zeros(grid.shape + (grid.d,))
    else:
        beta = bianchi_one_form(grid, env["ginv"], env["Gam"], np.asarray(F, float))
        rhs = np.einsum("...ab,...b->...a", env["ginv"], beta)
    if F is None and np.max(np.abs(mdata.V_C)) == 0.0 and init is None:
        return rhs
    v0, w0 = _initial_gauge_traces(bg, grid, env, F, init)
    bc = BoundaryConditionSpec("dirichlet", np.asarray(mdata.V_C, float))
    VF, _ = solve_ibvp(bg, grid, rhs, bc, v0, w0, p=env["vec_p"])
    return VF


# ---------------------------------------------------------------------------
# one stage of the chain


def _stage(
    bg: BackgroundMetric,
    grid: CornerGrid,
    bgeo: BoundaryGeometry,
    env: dict,
    mdata: ModifiedBoundaryData,
    src: np.ndarray | None,
    h_prev: np.ndarray | None,
    W_prev: np.ndarray | None,
    init: tuple[np.ndarray, np.ndarray] | None,
    F: np.ndarray | None = None,
    V_F: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Solve the decoupled chain once; returns (h_stage, f_face_history)."""
    d = grid.d
    dirs = _face_dirs(grid)
    nu = env["nu"]
    A_ext = env["A_ext"]

    if src is None:
        parts = {"T": None, "s1": None, "snunu": None, "sA": None}
    else:
        parts = _contract_source(np.asarray(src, float), nu, dirs)
    if h_prev is not None:
        kom = _contraction_commutators(grid, env, h_prev)
        for key, val in kom.items():
            parts[key] = val if parts[key] is None else parts[key] + val

    # initial data and the A-projection of its tangential block
    slice_shape = grid.shape[1:]
    z_s = np.zeros(slice_shape)
    if init is None:
        h0T = ht0T = np.zeros(slice_shape + (grid.n, grid.n))
        s1_0 = s1_t0 = snn_0 = snn_t0 = z_s
        sA_0 = sA_t0 = np.zeros(slice_shape + (grid.n - 1,))
        f0_ring = ft_ring = np.zeros(grid.shape[2:])
    else:
        h0, ht0 = init
        h0T = h0[..., dirs, :][..., :, dirs]
        ht0T = ht0[..., dirs, :][..., :, dirs]
        nu0 = nu[0]
        nudot0 = env["nudot0"]
        s1_0 = np.einsum("...m,...m->...", nu0, h0[..., 0, :])
        s1_t0 = np.einsum("...m,...m->...", nudot0, h0[..., 0, :])
        s1_t0 += np.einsum("...m,...m->...", nu0, ht0[..., 0, :])
        snn_0 = np.einsum("...a,...b,...ab->...", nu0, nu0, h0)
        snn_t0 = 2.0 * np.einsum("...a,...b,...ab->...", nudot0, nu0, h0)
        snn_t0 += np.einsum("...a,...b,...ab->...", nu0, nu0, ht0)
        sA_0 = np.stack(
            [np.einsum("...m,...m->...", nu0, h0[..., :, a]) for a in range(2, d)], axis=-1
        )
        sA_t0 = np.stack(
            [
                np.einsum("...m,...m->...", nudot0, h0[..., :, a])
                + np.einsum("...m,...m->...", nu0, ht0[..., :, a])
                for a in range(2, d)
            ],
            axis=-1,
        )
        f0_ring, ft_ring, resid = f_initial(bgeo, h0T[-1], ht0T[-1], mdata.h_A)
        # the boundary wave works with the coefficient against A-hat = A/lam
        f0_ring = bgeo.lam * f0_ring
        ft_ring = bgeo.lam * ft_ring
        env["notes"].extend(
            [f"corner splitting residual {resid:.3e} exceeds tolerance"]
            if resid > 1e-6
            else []
        )

    # boundary wave for the trace coefficient f
    rhs_f, q_s, q_v = f_equation_rhs(bgeo, mdata, F=F, V_F=V_F, W_h=W_prev, h=h_prev)
    fh = solve_boundary_wave_f(bgeo, rhs_f, f0_ring, ft_ring, q_scalar=q_s, q_vector=q_v)

    # tangential block in one Dirichlet solve: the boundary wave produced the
    # coefficient against A-hat, so the full trace target is the A-orthogonal
    # part plus f-hat times the A-hat extension
    T_data = mdata.h_A + fh[..., None, None] * A_ext[:, -1]
    T_block, _ = solve_ibvp(
        bg, grid, parts["T"], BoundaryConditionSpec("dirichlet", T_data), h0T, ht0T
    )

    # h(dt, nu): Sommerfeld with coefficients (1/2, 1)
    somm = sommerfeld_rhs_h0nu(bgeo, mdata, fh, h=h_prev, W_h=W_prev)
    s1_hist, _ = solve_ibvp(
        bg, grid, parts["s1"], BoundaryConditionSpec("sommerfeld", somm), s1_0, s1_t0
    )

    # h(nu, nu): Dirichlet trace from eta minus the mixed component
    snn_data = mdata.eta - s1_hist[:, -1]
    snn_hist, _ = solve_ibvp(
        bg, grid, parts["snunu"], BoundaryConditionSpec("dirichlet", snn_data), snn_0, snn_t0
    )

    # h(nu, angular): Neumann, all angular components stacked last
    neu = neumann_rhs_hnua(bgeo, mdata, fh, snn_hist[:, -1], h=h_prev, W_h=W_prev)
    sA_hist, _ = solve_ibvp(
        bg, grid, parts["sA"], BoundaryConditionSpec("neumann", neu), sA_0, sA_t0
    )

    # report the trace coefficient against A itself
    return _assemble(grid, nu, T_block, s1_hist, sA_hist, snn_hist), fh / bgeo.lam


# ---------------------------------------------------------------------------
# main drivers


def _environment(bg: BackgroundMetric, grid: CornerGrid, bgeo: BoundaryGeometry) -> dict:
    X = grid.coords()
    g = bg.metric(*X)
    ginv = inverse_metric(g)
    Gam = bg.christoffel(*X)
    nu = normal_field(bg, grid)
    dirs = _face_dirs(grid)
    A_ext = extend_ahat(bgeo)
    Vvec = bg.gauge_vector(*X)
    pos = len(grid.shape)
    dnu = np.stack([_diff3(grid, nu, c) for c in range(grid.d)], axis=pos)
    box_nu = np.einsum("...cd,...cdm->...m", ginv, _spacetime_hessian(grid, nu))
    box_nu += np.einsum("...c,...cm->...m", Vvec, dnu)
    W = np.einsum("...a,...b->...ab", nu, nu)
    dW = np.stack([_diff3(grid, W, c) for c in range(grid.d)], axis=pos)
    box_W = np.einsum("...cd,...cdab->...ab", ginv, _spacetime_hessian(grid, W))
    box_W += np.einsum("...c,...cab->...ab", Vvec, dW)
    return {
        "ginv": ginv,
        "Gam": Gam,
        "nu": nu,
        "dnu": dnu,
        "box_nu": box_nu,
        "dW": dW,
        "box_W": box_W,
        "nudot0": grid.diff(nu, 0)[0],
        "A_ext": A_ext,
        "max_ricci": bg.max_ricci(*X),
        "vec_p": vector_wave_p(bg, grid),
        "notes": [],
    }


def _run_modified(
    bg_loc: BackgroundMetric,
    grid: CornerGrid,
    target: TargetData,
    lam: float,
    m_max: int,
    tol_iter: float,
) -> SolveReport:
    bgeo = BoundaryGeometry.of(bg_loc, grid)
    if not bgeo.report.holds:
        raise ConvexityRefusal(
            "the staged construction needs the boundary convexity assumption",
            bgeo.report,
        )
    target.validate(grid)
    mdata = target.boundary
    env = _environment(bg_loc, grid, bgeo)

    init = None
    if target.has_initial():
        init = initial_variation(bg_loc, grid, target)

    # source-driven gauge field from the target data alone: Bianchi source of
    # F with the target gauge traces on the initial slice and the face
    VF = _vf_field(bg_loc, grid, env, target.F, mdata, init)

    h0, fh = _stage(bg_loc, grid, bgeo, env, mdata, target.F, None, None, init, target.F, VF)
    # the step-0 gauge increment is the curvature bracket W' with zero data;
    # later stages feed the previous increment's W' into their boundary-data
    # brackets, so the cumulative fed gauge field converges to V'_F + W'_h
    P_prev = coupling_defect(bg_loc, grid, h0)
    Wg = _w_field(bg_loc, grid, h0, env)
    V = VF + Wg

    norms = [_history_norms(grid, h0)]
    ratios: list[float] = []
    base = max(norms[0][1], 1e-300)
    h = np.array(h0)
    E_prev = h0
    verdict = "converged" if norms[0][1] == 0.0 else "stopped"
    note = ""
    zero_md = _zero_mdata(grid)
    bad_streak = 0

    if norms[0][1] > 0.0:
        for _ in range(1, m_max + 1):
            # lagged coupling feedback: each stage is a fresh chain solve
            # sourced by the defect of the previous correction, with the
            # previous W' + X' entering the boundary-data brackets
            E, fh_E = _stage(bg_loc, grid, bgeo, env, zero_md, -P_prev, E_prev, Wg, None)
            fh = fh + fh_E
            P_prev = coupling_defect(bg_loc, grid, E)
            Wg = _w_field(bg_loc, grid, E, env)
            V = V + Wg
            h = h + E

            norms.append(_history_norms(grid, E))
            r = norms[-1][1] / max(norms[-2][1], 1e-300)
            ratios.append(r)
            bad_streak = bad_streak + 1 if r >= 1.0 else 0
            E_prev = E
            if norms[-1][1] < tol_iter * base:
                verdict = "converged"
                break
            if bad_streak >= 2:
                verdict = "diverged"
                note = (
                    "stage corrections stopped contracting; localize further "
                    f"(retry with a smaller scale than lam={lam})"
                )
                break

    residual = reduced_residual(bg_loc, grid, h, target.F)

    hT_face = _tangential_block(h[:, -1], _face_dirs(grid))
    hA_rec, f_rec = split_trace(hT_face, bgeo.A, bgeo.gamma)
    trace_errors = {
        "h_A": float(np.max(np.abs(hA_rec - mdata.h_A))),
        "eta": float(np.max(np.abs(eta_of(bg_loc, grid, h) - mdata.eta))),
        "f": float(np.max(np.abs(f_rec - fh))),
    }

    history = IterationHistory(norms, ratios, verdict, tol_iter, note)
    return SolveReport(
        h=h,
        V=V,
        history=history,
        residual=residual,
        trace_errors=trace_errors,
        lam=lam,
        flavor="modified",
        notes=env["notes"],
        f_history=fh,
    )


def solve_modified(
    bg: BackgroundMetric,
    grid: CornerGrid,
    target: TargetData,
    lam: float = 0.1,
    m_max: int = 8,
    tol_iter: float = 1e-8,
    lam_max: float = 0.5,
) -> SolveReport:
    """Solve the linearized reduced system with modified boundary data.

    The background is localized to scale ``lam`` before solving; the target
    arrays are interpreted against that localized background.  Raises
    :class:`cornerlab.waves.ConvexityRefusal` when the convexity verdict of
    the localized boundary fails; reports (rather than raises) when the stage
    iteration stops contracting.
    """
    if target.flavor != "modified":
        raise SolverError("solve_modified expects modified-flavor target data")
    if not 0.0 < lam <= lam_max:
        raise SolverError(f"localization scale lam={lam} must lie in (0, {lam_max}]")
    bg_loc = bg.rescaled(lam)
    return _run_modified(bg_loc, grid, target, lam, m_max, tol_iter)


def _eta_jet_data(
    bg_loc: BackgroundMetric,
    grid: CornerGrid,
    init: tuple[np.ndarray, np.ndarray] | None,
) -> np.ndarray:
    """Truncated Taylor data for eta on C: corner jets times a smooth cutoff.

    Only the jets of order 0 and 1 are seeded (the order-2 jet is left free);
    the cutoff kills the extension before half the time interval.
    """
    face = grid.shape[:1] + grid.shape[2:]
    if init is None:
        return np.zeros(face)
    h0, ht0 = init
    nu = normal_field(bg_loc, grid)
    nu_ring = nu[0, -1]
    nudot_ring = grid.diff(nu, 0)[0, -1]
    h0_ring = h0[-1]
    ht0_ring = ht0[-1]

    def eta_of_pair(hr, nr):
        return np.einsum("...m,...m->...", hr[..., 0, :], nr) + np.einsum(
            "...a,...b,...ab->...", nr, nr, hr
        )

    c0 = eta_of_pair(h0_ring, nu_ring)
    c1 = eta_of_pair(ht0_ring, nu_ring)
    c1 += np.einsum("...m,...m->...", h0_ring[..., 0, :], nudot_ring)
    c1 += 2.0 * np.einsum("...a,...b,...ab->...", nudot_ring, nu_ring, h0_ring)

    t = grid.t
    chi = _cutoff(-t, inner=-0.5 * grid.T, outer=-0.25 * grid.T)
    prof = (c0[None] + t.reshape((-1,) + (1,) * c0.ndim) * c1[None]) * chi.reshape(
        (-1,) + (1,) * c0.ndim
    )
    return np.broadcast_to(prof, face).copy()


def solve_dirichlet(
    bg: BackgroundMetric,
    grid: CornerGrid,
    target: TargetData,
    lam: float = 0.1,
    m_max: int = 8,
    tol_iter: float = 1e-8,
    lam_max: float = 0.5,
    jet_tol: float = 1e-6,
) -> SolveReport:
    """Solve with plain Dirichlet trace data by conversion and correction.

    Splits the trace into an A-orthogonal part and the coefficient f, runs
    the modified solve with a Borel-type eta, then moves the boundary trace
    onto the target with a deformation vector solving the gauge-preserving
    vector wave.  Refuses on non-vacuum or non-harmonic backgrounds and when
    the localized convexity verdict fails.
    """
    if target.flavor != "dirichlet":
        raise SolverError("solve_dirichlet expects dirichlet-flavor target data")
    if not 0.0 < lam <= lam_max:
        raise SolverError(f"localization scale lam={lam} must lie in (0, {lam_max}]")
    bg_loc = bg.rescaled(lam)
    X = grid.coords()
    if bg_loc.max_ricci(*X) > _VACUUM_TOL or bg_loc.max_gauge(*X) > _VACUUM_TOL:
        raise VacuumRefusal(
            "the Dirichlet conversion is justified only on vacuum harmonic "
            "backgrounds: the corrector leaves the uncontrolled error term "
            "L_X Ric_g + (delta*)'_{delta* X} V_g"
        )
    bgeo = BoundaryGeometry.of(bg_loc, grid)
    if not bgeo.report.holds:
        raise ConvexityRefusal(
            "the Dirichlet conversion runs through the staged construction, "
            "which needs the convexity assumption",
            bgeo.report,
        )

    bdata: DirichletBoundaryData = target.boundary
    h_A, f_target = split_trace(bdata.gamma_c, bgeo.A, bgeo.gamma)

    init = None
    if target.has_initial():
        init = initial_variation(bg_loc, grid, target)
    eta = _eta_jet_data(bg_loc, grid, init)

    mtarget = TargetData(
        boundary=ModifiedBoundaryData.of(bgeo, h_A, eta, bdata.V_C),
        flavor="modified",
        F=target.F,
        gamma_S=target.gamma_S,
        kappa=target.kappa,
        nu_S=target.nu_S,
        V_S=target.V_S,
    )
    rep = _run_modified(bg_loc, grid, mtarget, lam, m_max, tol_iter)

    # deformation vector moving the produced trace coefficient onto the target
    df = f_target - rep.f_history
    scale = max(float(np.max(np.abs(f_target))), 1.0)
    jets = (float(np.max(np.abs(df[0]))), float(np.max(np.abs(grid.diff_c(df, 0)[0]))))
    if max(jets) > jet_tol * scale:
        rep.notes.append(
            "corner jets of the trace coefficient disagree "
            f"(|d_t^k(f' - f)| at the ring: {jets[0]:.3e}, {jets[1]:.3e}); "
            "the corrector bends the solution near the corner"
        )

    nu_face = normal_field(bg_loc, grid)[:, -1]
    Xdata = df[..., None] * nu_face
    zero_v = np.zeros(grid.shape[1:] + (grid.d,))
    Xh, _ = solve_ibvp(
        bg_loc,
        grid,
        np.zeros(grid.shape + (grid.d,)),
        BoundaryConditionSpec("dirichlet", Xdata),
        zero_v,
        zero_v,
        p=vector_wave_p(bg_loc, grid),
    )
    h = rep.h + _deltastar_bulk(bg_loc, grid, Xh)

    hT_face = _tangential_block(h[:, -1], _face_dirs(grid))
    rep.trace_errors["gamma_c"] = float(np.max(np.abs(hT_face - bdata.gamma_c)))
    rep.notes.append(
        "gauge field kept from the modified stage; the corrector's gauge "
        "variation vanishes with the vector wave residual"
    )
    return SolveReport(
        h=h,
        V=rep.V,
        history=rep.history,
        residual=reduced_residual(bg_loc, grid, h, target.F),
        trace_errors=rep.trace_errors,
        lam=lam,
        flavor="dirichlet",
        notes=rep.notes,
        f_history=rep.f_history,
    )


# ---------------------------------------------------------------------------
# diagnostics


def verify_tame_estimate(
    grid: CornerGrid,
    report: SolveReport,
    target: TargetData,
    s: int = 1,
) -> TameCheck:
    """Ratio of the solution slice norm to the weighted target-data norm.

    The boundary trace h_A is measured with one more derivative than the
    solution (capped at order two); the whole data norm carries the inverse
    localization weight.  Raises when the target norm vanishes.
    """
    if s not in (1, 2):
        raise ValueError(f"tame check is defined for s in {{1, 2}}, got {s}")
    lhs = max(
        slice_norm(grid, report.h, k, s, "Hbar") for k in range(grid.shape[0])
    )
    last = grid.shape[0] - 1
    if isinstance(target.boundary, ModifiedBoundaryData):
        b = target.boundary
        data = boundary_norm(grid, b.h_A, last, s=min(s + 1, 2), tangential_only=True)
        data += boundary_norm(grid, b.eta, last, s=s, tangential_only=True)
        data += boundary_norm(grid, b.V_C, last, s=s, tangential_only=True)
    else:
        b = target.boundary
        data = boundary_norm(grid, b.gamma_c, last, s=min(s + 1, 2), tangential_only=True)
        data += boundary_norm(grid, b.V_C, last, s=s, tangential_only=True)
    if target.F is not None:
        data += spacetime_norm(grid, target.F, last, s=s)
    for name in ("gamma_S", "kappa", "nu_S", "V_S"):
        fld = getattr(target, name)
        if fld is not None:
            w = grid.quad_weights_slice()
            sq = _component_square(np.asarray(fld, float), len(grid.shape) - 1)
            data += float(np.sqrt(np.sum(sq * w)))
    if data <= 0.0:
        raise SolverError("tame ratio is undefined for zero target data")
    rhs = data / report.lam
    ratio = lhs / rhs
    report.tame_ratio = ratio
    return TameCheck(s=s, lhs=lhs, rhs=rhs, ratio=ratio)


def hnu_energy_monitor(
    bg: BackgroundMetric,
    grid: CornerGrid,
    report: SolveReport,
    target: TargetData,
) -> FaceEnergyMonitor:
    """Per-slice face energy of the tangential normal trace of h.

    Defined for pure boundary-value solves; skipped (with a note) when the
    target carries bulk source or initial data, since those feed the normal
    trace through channels the boundary-data bound does not see.
    """
    if target.F is not None and np.max(np.abs(target.F)) > 0 or target.has_initial():
        return FaceEnergyMonitor(
            t=grid.t,
            energy=np.zeros(grid.shape[0]),
            bound=float("nan"),
            max_ratio=float("nan"),
            skipped=True,
            note="monitor requires zero bulk source and zero initial data",
        )
    bg_loc = bg.rescaled(report.lam)
    nu_face = normal_field(bg_loc, grid)[:, -1]
    dirs = _face_dirs(grid)
    hnu = np.einsum("...am,...m->...a", report.h[:, -1], nu_face)
    omega = hnu[..., dirs]

    w_ring = grid.quad_weights_ring()
    total = np.zeros(grid.shape[0])
    for combo in _derivative_list(dirs, 1):
        df = np.asarray(omega, float)
        for a in combo:
            df = grid.diff_c(df, a)
        sq = _component_square(df, len(grid.shape) - 1)
        total += np.sum(sq * w_ring, axis=tuple(range(1, sq.ndim)))
    energy = np.sqrt(total)

    last = grid.shape[0] - 1
    b: ModifiedBoundaryData = (
        target.boundary
        if isinstance(target.boundary, ModifiedBoundaryData)
        else None
    )
    if b is None:
        raise SolverError("the face energy monitor applies to modified-flavor solves")
    bound = (
        boundary_norm(grid, b.h_A, last, s=2, tangential_only=True) ** 2
        + boundary_norm(grid, b.eta, last, s=1, tangential_only=True) ** 2
        + boundary_norm(grid, b.V_C, last, s=1, tangential_only=True) ** 2
    ) / report.lam
    bound += report.lam**2 * max(
        slice_norm(grid, report.h, k, 1, "Hbar") for k in range(grid.shape[0])
    ) ** 2
    ratio = float(np.max(energy**2) / bound) if bound > 0 else float("nan")
    return FaceEnergyMonitor(t=grid.t, energy=energy, bound=bound, max_ratio=ratio)
