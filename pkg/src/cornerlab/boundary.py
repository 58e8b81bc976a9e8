"""Boundary reduction: trace splitting, the eta scalar, and assembled data.

A boundary trace h^T decomposes against the second fundamental form as
h^T = h_A + f A with <h_A, A>_gamma = 0; the scalar f then satisfies the
convex boundary wave equation, the mixed component h_{0 nu} a Sommerfeld
condition, and the remaining normal components h_{nu a} Neumann conditions.
This module assembles the right-hand sides of those conditions from target
data, the current bulk iterate, and the gauge split, together with the
linearized second form A'_h and the normal-component gauge identity used to
convert Dirichlet data.

Index conventions: boundary-face tensors carry indices over the tangential
coordinate directions (t, angles), time first; the unit conormal is
proportional to dx^1, so tangential components of one-forms are plain
coordinate components.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    BackgroundMetric,
    BoundaryGeometry,
    christoffel_from,
    inverse_metric,
    ricci_from,
)
from .grid import CornerGrid

__all__ = [
    "BoundaryError",
    "ModifiedBoundaryData",
    "DirichletBoundaryData",
    "sym_inner",
    "split_trace",
    "normal_field",
    "eta_of",
    "FaceCalculus",
    "extend_ahat",
    "linearized_A",
    "linearized_H",
    "f_equation_rhs",
    "f_initial",
    "sommerfeld_rhs_h0nu",
    "neumann_rhs_hnua",
    "normal_gauge_residual",
]

TOL_NULL = 1e-6


class BoundaryError(RuntimeError):
    """Raised when a boundary reduction precondition fails."""


def sym_inner(gamma_inv: np.ndarray, S: np.ndarray, T: np.ndarray) -> np.ndarray:
    """Pointwise inner product <S, T> = gamma^{ac} gamma^{bd} S_ab T_cd."""
    return np.einsum("...ac,...bd,...ab,...cd->...", gamma_inv, gamma_inv, S, T)


def split_trace(
    hT: np.ndarray, A: np.ndarray, gamma: np.ndarray, tol_null: float = TOL_NULL
) -> tuple[np.ndarray, np.ndarray]:
    """Decompose h^T = h_A + f A with <h_A, A> = 0 pointwise.

    Refuses when <A, A> is too small relative to the Frobenius size of A:
    the splitting needs A bounded away from the null cone, not merely
    nonzero, since the Lorentzian pairing can vanish on nonzero tensors.
    """
    gamma_inv = inverse_metric(gamma)
    AA = sym_inner(gamma_inv, A, A)
    frob = np.einsum("...ab,...ab->...", A, A)
    bad = np.abs(AA) < tol_null * np.maximum(frob, 1e-300)
    if np.any(bad):
        raise BoundaryError(
            "trace splitting is defined only where the second form is "
            "non-null: |<A,A>| fell below tol_null * ||A||^2 at "
            f"{int(bad.sum())} boundary nodes"
        )
    f = sym_inner(gamma_inv, hT, A) / AA
    h_A = hT - f[..., None, None] * A
    return h_A, f


@dataclass
class ModifiedBoundaryData:
    """Target data (h_A, eta, V'_C) for the modified boundary conditions."""

    h_A: np.ndarray
    eta: np.ndarray
    V_C: np.ndarray

    @classmethod
    def of(cls, bgeo: BoundaryGeometry, h_A, eta, V_C, tol_split: float = 1e-8):
        h_A = np.asarray(h_A, float)
        eta = np.asarray(eta, float)
        V_C = np.asarray(V_C, float)
        ip = sym_inner(bgeo.gamma_inv, h_A, bgeo.A)
        scale = np.sqrt(
            np.einsum("...ab,...ab->...", h_A, h_A)
            * np.einsum("...ab,...ab->...", bgeo.A, bgeo.A)
        )
        if np.any(np.abs(ip) > tol_split * np.maximum(scale, 1e-300) + 1e-300):
            raise BoundaryError("h_A is not A-orthogonal at every boundary node")
        return cls(h_A, eta, V_C)


@dataclass
class DirichletBoundaryData:
    """Plain Dirichlet target data: the full trace gamma'_C and V'_C."""

    gamma_c: np.ndarray
    V_C: np.ndarray

    def __post_init__(self) -> None:
        self.gamma_c = np.asarray(self.gamma_c, float)
        if not np.allclose(self.gamma_c, np.swapaxes(self.gamma_c, -1, -2)):
            raise BoundaryError("Dirichlet trace data must be symmetric")


def normal_field(bg: BackgroundMetric, grid: CornerGrid) -> np.ndarray:
    """Collar extension nu = grad x^1 / |grad x^1| on the full grid."""
    ginv = inverse_metric(bg.metric(*grid.coords()))
    return ginv[..., :, 1] / np.sqrt(ginv[..., 1, 1])[..., None]


def eta_of(bg: BackgroundMetric, grid: CornerGrid, h: np.ndarray) -> np.ndarray:
    """eta_h = h(dt, nu) + h(nu, nu) on the boundary face."""
    nu = normal_field(bg, grid)[:, -1]
    hb = np.asarray(h, float)[:, -1]
    h0nu = np.einsum("...b,...b->...", hb[..., 0, :], nu)
    hnunu = np.einsum("...a,...b,...ab->...", nu, nu, hb)
    return h0nu + hnunu


class FaceCalculus:
    """Intrinsic differential operators of the boundary metric gamma_C."""

    def __init__(self, bgeo: BoundaryGeometry):
        self.grid = bgeo.grid
        self.gamma = bgeo.gamma
        self.gamma_inv = bgeo.gamma_inv
        self.dirs = [0] + list(range(2, self.grid.d))
        dgamma = np.stack(
            [self.grid.diff_c(self.gamma, m) for m in self.dirs], axis=-3
        )
        self.Gam = christoffel_from(self.gamma_inv, dgamma)

    def grad(self, s: np.ndarray) -> np.ndarray:
        return np.stack([self.grid.diff_c(s, m) for m in self.dirs], axis=-1)

    def grad_up(self, s: np.ndarray) -> np.ndarray:
        return np.einsum("...ab,...b->...a", self.gamma_inv, self.grad(s))

    def covd_form(self, omega: np.ndarray) -> np.ndarray:
        """nabla_a omega_b of a tangential one-form."""
        dom = np.stack([self.grid.diff_c(omega, m) for m in self.dirs], axis=-2)
        return dom - np.einsum("...cab,...c->...ab", self.Gam, omega)

    def box(self, s: np.ndarray) -> np.ndarray:
        return np.einsum("...ab,...ab->...", self.gamma_inv, self.covd_form(self.grad(s)))

    def div_form(self, omega: np.ndarray) -> np.ndarray:
        return np.einsum("...ab,...ab->...", self.gamma_inv, self.covd_form(omega))

    def div_sym2(self, S: np.ndarray) -> np.ndarray:
        """(div S)^b = nabla_a S^{ab}, indices raised with gamma."""
        S_up = np.einsum("...ac,...bd,...cd->...ab", self.gamma_inv, self.gamma_inv, S)
        dS = np.stack([self.grid.diff_c(S_up, m) for m in self.dirs], axis=-3)
        out = np.einsum("...aab->...b", dS)
        out += np.einsum("...aac,...cb->...b", self.Gam, S_up)
        out += np.einsum("...bac,...ac->...b", self.Gam, S_up)
        return out

    def divdiv(self, S: np.ndarray) -> np.ndarray:
        """nabla_a nabla_b S^{ab}."""
        T = self.div_sym2(S)
        dT = np.stack([self.grid.diff_c(T, m) for m in self.dirs], axis=-2)
        return np.einsum("...aa->...", dT) + np.einsum("...aac,...c->...", self.Gam, T)

    def deltastar_form(self, omega: np.ndarray) -> np.ndarray:
        cd = self.covd_form(omega)
        return 0.5 * (cd + np.swapaxes(cd, -1, -2))

    def ricci(self) -> np.ndarray:
        dGam = np.stack([self.grid.diff_c(self.Gam, m) for m in self.dirs], axis=-4)
        return ricci_from(self.Gam, dGam)

    def linearized_scalar_curvature(self, S: np.ndarray) -> np.ndarray:
        """R'_S = -box tr S + divdiv S - <Ric, S>."""
        tr = np.einsum("...ab,...ab->...", self.gamma_inv, S)
        ric = self.ricci()
        return -self.box(tr) + self.divdiv(S) - sym_inner(self.gamma_inv, ric, S)


def _cutoff(x1: np.ndarray, inner: float = -0.5, outer: float = -0.25) -> np.ndarray:
    """Smooth bump: 1 for x1 >= outer, 0 for x1 <= inner."""

    def psi(s):
        out = np.zeros_like(s)
        pos = s > 0
        out[pos] = np.exp(-1.0 / s[pos])
        return out

    u = (x1 - inner) / (outer - inner)
    num = psi(u)
    return num / (num + psi(1.0 - u))


def extend_ahat(
    bgeo: BoundaryGeometry, inner: float = -0.5, outer: float = -0.25
) -> np.ndarray:
    """Bulk extension of A-hat: x^1-independent with a smooth radial cutoff.

    The extension never uses delta*(f nu); the coefficients are carried
    inward unchanged and truncated by a C-infinity bump supported away from
    the inner edge.
    """
    grid = bgeo.grid
    chi = _cutoff(grid.axes[1], inner, outer)
    shape = (1, grid.shape[1]) + (1,) * (len(grid.shape) - 2) + (1, 1)
    return bgeo.Ahat[:, None] * chi.reshape(shape)


def _face_dirs(grid: CornerGrid) -> list[int]:
    return [0] + list(range(2, grid.d))


def _tangential_block(fld_face: np.ndarray, dirs) -> np.ndarray:
    return fld_face[..., dirs, :][..., :, dirs]


def _collar_quantities(bg: BackgroundMetric, grid: CornerGrid, h: np.ndarray):
    """Face restrictions of the collar fields used by several assemblies."""
    X = grid.coords()
    g = bg.metric(*X)
    ginv = inverse_metric(g)
    Gam = bg.christoffel(*X)
    nu = normal_field(bg, grid)
    return g, ginv, Gam, nu


def linearized_A(bg: BackgroundMetric, grid: CornerGrid, h: np.ndarray) -> np.ndarray:
    """A'_h on C, the metric variation of the second form for the fixed face.

    2A' = nabla_nu h^T - 2 delta*_C h(nu)^T - h_nunu A + (A h^T + h^T A),
    where the last bracket (indices raised with gamma) accounts for the
    difference between the ambient nu-derivative of h and the derivative of
    its tangential projection; it is what the epsilon-differencing oracle of
    the second form requires.
    """
    h = np.asarray(h, float)
    g, ginv, Gam, nu = _collar_quantities(bg, grid, h)
    dirs = _face_dirs(grid)

    dh = np.stack([grid.diff(h, m) for m in range(grid.d)], axis=-3)
    covh = dh - np.einsum("...cma,...cb->...mab", Gam, h)
    covh -= np.einsum("...cmb,...ac->...mab", Gam, h)
    nuder = np.einsum("...m,...mab->...ab", nu, covh)[:, -1]
    nuder_T = _tangential_block(nuder, dirs)

    bgeo = BoundaryGeometry.of(bg, grid)
    calc = FaceCalculus(bgeo)
    hnu = np.einsum("...am,...m->...a", h, nu)[:, -1]
    omega = hnu[..., dirs]
    hnunu = np.einsum("...a,...a->...", np.einsum("...am,...m->...a", h, nu), nu)[:, -1]
    hT = _tangential_block(h[:, -1], dirs)

    AhT = np.einsum("...ac,...cd,...db->...ab", bgeo.A, bgeo.gamma_inv, hT)
    comm = AhT + np.swapaxes(AhT, -1, -2)
    out = nuder_T - 2.0 * calc.deltastar_form(omega)
    out -= hnunu[..., None, None] * bgeo.A
    return 0.5 * (out + comm)


def linearized_H(bgeo: BoundaryGeometry, A_p: np.ndarray, hT: np.ndarray) -> np.ndarray:
    """H'_h = tr_gamma A'_h - <h^T, A>_gamma."""
    return np.einsum("...ab,...ab->...", bgeo.gamma_inv, A_p) - sym_inner(
        bgeo.gamma_inv, hT, bgeo.A
    )


def _deltastar_bulk(
    bg: BackgroundMetric, grid: CornerGrid, V_up: np.ndarray
) -> np.ndarray:
    """(delta* V)_ab = (nabla_a V_b + nabla_b V_a)/2 for a grid vector V^a."""
    X = grid.coords()
    g = bg.metric(*X)
    Gam = bg.christoffel(*X)
    V_low = np.einsum("...ab,...b->...a", g, V_up)
    dV = np.stack([grid.diff(V_low, m) for m in range(grid.d)], axis=-2)
    cov = dV - np.einsum("...cab,...c->...ab", Gam, V_low)
    return 0.5 * (cov + np.swapaxes(cov, -1, -2))


_CSTEP = 1e-30


def _deltastar_variation(
    bg: BackgroundMetric, grid: CornerGrid, h: np.ndarray
) -> np.ndarray:
    """(delta*)'_h V for the background gauge vector V, by complex step."""
    X = grid.coords()
    g = bg.metric(*X)
    dg = bg.dmetric(*X)
    V = bg.gauge_vector(*X)
    if np.max(np.abs(V)) < 1e-12:
        return np.zeros(grid.shape + (grid.d, grid.d))
    hh = np.asarray(h, float)
    gc = g + 1j * _CSTEP * hh
    dh = np.stack([grid.diff(hh, m) for m in range(grid.d)], axis=-3)
    dgc = dg + 1j * _CSTEP * dh
    Gam_c = christoffel_from(np.linalg.inv(gc), dgc)
    V_low = np.einsum("...ab,...b->...a", gc, V)
    dV = np.stack([grid.diff(V_low, m) for m in range(grid.d)], axis=-2)
    cov = dV - np.einsum("...cab,...c->...ab", Gam_c, V_low)
    sym = 0.5 * (cov + np.swapaxes(cov, -1, -2))
    return sym.imag / _CSTEP


def _gauge_corrected_source(
    bg: BackgroundMetric,
    grid: CornerGrid,
    F: np.ndarray | None,
    V_split: np.ndarray | None,
) -> np.ndarray:
    """F - delta* V for a piece V of the gauge split (zero-safe)."""
    out = np.zeros(grid.shape + (grid.d, grid.d))
    if F is not None:
        out += np.asarray(F, float)
    if V_split is not None and np.max(np.abs(V_split)) > 0:
        out -= _deltastar_bulk(bg, grid, np.asarray(V_split, float))
    return out


def f_equation_rhs(
    bgeo: BoundaryGeometry,
    target: ModifiedBoundaryData,
    F: np.ndarray | None = None,
    V_F: np.ndarray | None = None,
    W_h: np.ndarray | None = None,
    h: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Assemble (rhs, q_scalar, q_vector) for the boundary wave equation of f.

    rhs = Y(target) + E(h): the target part carries the linearized boundary
    scalar curvature of h_A and the constraint-source corrections, the E part
    the couplings of the current bulk iterate h.  The q-coefficients encode
    the first-order terms built from A-hat and H-hat.
    """
    bg = bgeo.background
    grid = bgeo.grid
    calc = FaceCalculus(bgeo)
    dirs = _face_dirs(grid)

    rhs = calc.linearized_scalar_curvature(target.h_A)

    src = _gauge_corrected_source(bg, grid, F, V_F)
    if np.max(np.abs(src)) > 0:
        X = grid.coords()
        ginv = inverse_metric(bg.metric(*X))[:, -1]
        nu = normal_field(bg, grid)[:, -1]
        src_b = src[:, -1]
        rhs -= np.einsum("...ab,...ab->...", ginv, src_b)
        rhs += 2.0 * np.einsum("...a,...b,...ab->...", nu, nu, src_b)

    if h is not None:
        rhs += _e_coupling_scalar(bgeo, calc, h, W_h)

    Hhat = bgeo.Hhat
    Ahat = bgeo.Ahat
    ric_c = calc.ricci()
    q_scalar = calc.box(Hhat) - calc.divdiv(Ahat) + sym_inner(calc.gamma_inv, ric_c, Ahat)
    q_vector = 2.0 * calc.grad_up(Hhat)
    q_vector -= 2.0 * calc.div_sym2(Ahat)
    return rhs, q_scalar, q_vector


def _e_coupling_scalar(
    bgeo: BoundaryGeometry,
    calc: FaceCalculus,
    h: np.ndarray,
    W_h: np.ndarray | None,
) -> np.ndarray:
    """E(h): couplings of the bulk iterate entering the f equation."""
    bg = bgeo.background
    grid = bgeo.grid
    dirs = _face_dirs(grid)
    h = np.asarray(h, float)

    X = grid.coords()
    g_face = bg.metric(*X)[:, -1]
    ginv_face = inverse_metric(g_face)
    ric_face = bg.ricci(*X)[:, -1]
    nu = normal_field(bg, grid)[:, -1]
    h_face = h[:, -1]
    hT = _tangential_block(h_face, dirs)

    A_p = linearized_A(bg, grid, h)
    H_p = linearized_H(bgeo, A_p, hT)
    AA = np.einsum("...ac,...cd,...db->...ab", bgeo.A, bgeo.gamma_inv, bgeo.A)

    hnu = np.einsum("...am,...m->...a", h_face, nu)
    hnunu = np.einsum("...a,...a->...", hnu, nu)
    omega = hnu[..., dirs]
    nu_var = np.zeros(hnu.shape)
    nu_var -= 0.5 * hnunu[..., None] * nu
    omega_up = np.einsum("...ab,...b->...a", bgeo.gamma_inv, omega)
    for k, m in enumerate(dirs):
        nu_var[..., m] -= omega_up[..., k]

    out = 2.0 * sym_inner(bgeo.gamma_inv, A_p, bgeo.A)
    out -= 2.0 * bgeo.H * H_p
    out -= 2.0 * sym_inner(bgeo.gamma_inv, AA, hT)
    out += 4.0 * np.einsum("...ab,...a,...b->...", ric_face, nu, nu_var)
    out += np.einsum(
        "...ac,...bd,...ab,...cd->...", ginv_face, ginv_face, ric_face, h_face
    )

    W_term = _gauge_corrected_source(bg, grid, None, W_h)
    W_term += _deltastar_variation(bg, grid, h)
    # the W-bracket enters as -tr[...] + 2[...](nu, nu) with the opposite
    # orientation of the source bracket: delta* W'_h - (delta*)'_h V
    W_face = -W_term[:, -1]
    out -= np.einsum("...ab,...ab->...", ginv_face, W_face)
    out += 2.0 * np.einsum("...a,...b,...ab->...", nu, nu, W_face)
    return out


def f_initial(
    bgeo: BoundaryGeometry,
    hT_ring: np.ndarray,
    dt_hT_ring: np.ndarray,
    hA_face: np.ndarray,
    tol_residual: float = 1e-6,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Corner-ring data (f, d_t f) from the splitting and its time derivative.

    f is the A-projection of h^T - h_A at the ring; d_t f solves the
    overdetermined component system d_t f * A = d_t h^T - d_t h_A - f d_t A
    in the least-squares sense.  The worst-node residual is returned; a
    residual above ``tol_residual`` signals inconsistent target data.
    """
    grid = bgeo.grid
    A_ring = bgeo.A[0]
    gamma_ring = bgeo.gamma[0]
    gamma_inv = inverse_metric(gamma_ring)
    AA = sym_inner(gamma_inv, A_ring, A_ring)
    frob = np.einsum("...ab,...ab->...", A_ring, A_ring)
    if np.any(np.abs(AA) < TOL_NULL * np.maximum(frob, 1e-300)):
        raise BoundaryError("corner-ring second form is null or vanishing")

    hA_ring = np.asarray(hA_face, float)[0]
    f0 = sym_inner(gamma_inv, np.asarray(hT_ring, float) - hA_ring, A_ring) / AA

    dt_hA = grid.diff_c(np.asarray(hA_face, float), 0)[0]
    dt_A = grid.diff_c(bgeo.A, 0)[0]
    R = np.asarray(dt_hT_ring, float) - dt_hA - f0[..., None, None] * dt_A
    # least squares over the independent components at each node
    num = np.einsum("...ab,...ab->...", R, A_ring)
    den = np.einsum("...ab,...ab->...", A_ring, A_ring)
    ft = num / den
    resid_field = R - ft[..., None, None] * A_ring
    resid = float(
        np.max(np.sqrt(np.einsum("...ab,...ab->...", resid_field, resid_field)))
    )
    return f0, ft, resid


def _zbracket(bgeo: BoundaryGeometry, calc: FaceCalculus, f: np.ndarray):
    """(A-hat - H-hat/2 gamma)(grad f, .) and f (delta A-hat + d H-hat / 2)."""
    M = bgeo.Ahat - 0.5 * bgeo.Hhat[..., None, None] * bgeo.gamma
    gradf_up = calc.grad_up(f)
    first = np.einsum("...ab,...a->...b", M, gradf_up)
    delta_A = -np.einsum(
        "...ab,...b->...a", calc.gamma, calc.div_sym2(bgeo.Ahat)
    )
    second = delta_A + 0.5 * calc.grad(bgeo.Hhat)
    return first, second


def _ebracket_component(
    bgeo: BoundaryGeometry,
    calc: FaceCalculus,
    h: np.ndarray,
    W_h: np.ndarray | None,
    comp: int,
) -> np.ndarray:
    """E-hat terms paired with the coordinate direction ``comp``."""
    bg = bgeo.background
    grid = bgeo.grid
    dirs = _face_dirs(grid)
    k = dirs.index(comp)
    h = np.asarray(h, float)

    X = grid.coords()
    g_face = bg.metric(*X)[:, -1]
    Gam_face = bg.christoffel(*X)[:, -1]
    nu = normal_field(bg, grid)[:, -1]
    h_face = h[:, -1]

    hnu = np.einsum("...am,...m->...a", h_face, nu)
    omega = hnu[..., dirs]
    omega_up = np.einsum("...ab,...b->...a", bgeo.gamma_inv, omega)

    M = bgeo.A + bgeo.H[..., None, None] * bgeo.gamma
    out = -np.einsum("...b,...b->...", M[..., k, :], omega_up)
    # <h(nu)^T, nabla_nu d_comp>: tangential pairing with the metric
    conn = np.einsum("...m,...am->...a", nu, Gam_face[..., :, :, comp])
    conn_low = np.einsum("...ab,...b->...a", g_face, conn)
    out += np.einsum("...a,...a->...", omega_up, conn_low[..., dirs])
    if W_h is not None and np.max(np.abs(W_h)) > 0:
        W_low = np.einsum("...ab,...b->...a", g_face, np.asarray(W_h, float)[:, -1])
        out -= W_low[..., comp]
    h_up = np.einsum(
        "...ma,...nb,...ab->...mn", inverse_metric(g_face), inverse_metric(g_face), h_face
    )
    # <D^2 x^comp, h> = -Gamma^comp_{mn} h^{mn}
    out += np.einsum("...mn,...mn->...", Gam_face[..., comp, :, :], h_up)
    return out


def _bianchi_face(calc: FaceCalculus, S: np.ndarray) -> np.ndarray:
    """beta_C S = delta_C S + d tr_C S / 2 as a tangential one-form."""
    tr = np.einsum("...ab,...ab->...", calc.gamma_inv, S)
    div_low = np.einsum("...ab,...b->...a", calc.gamma, calc.div_sym2(S))
    return -div_low + 0.5 * calc.grad(tr)


def sommerfeld_rhs_h0nu(
    bgeo: BoundaryGeometry,
    target: ModifiedBoundaryData,
    f: np.ndarray,
    h: np.ndarray | None = None,
    W_h: np.ndarray | None = None,
) -> np.ndarray:
    """Data for (1/2 d_t + d_nu) h_{0 nu}: Y-hat + Z-hat(f) + E-hat(h)."""
    grid = bgeo.grid
    bg = bgeo.background
    calc = FaceCalculus(bgeo)

    beta = _bianchi_face(calc, target.h_A)
    out = beta[..., 0]
    g_face = bg.metric(*grid.coords())[:, -1]
    VC_low = np.einsum("...ab,...b->...a", g_face, target.V_C)
    out -= VC_low[..., 0]
    out += 0.5 * calc.grid.diff_c(target.eta, 0)

    first, second = _zbracket(bgeo, calc, np.asarray(f, float))
    out -= first[..., 0]
    out += np.asarray(f, float) * second[..., 0]

    if h is not None:
        out += _ebracket_component(bgeo, calc, h, W_h, 0)
    return out


def neumann_rhs_hnua(
    bgeo: BoundaryGeometry,
    target: ModifiedBoundaryData,
    f: np.ndarray,
    h_nunu: np.ndarray,
    h: np.ndarray | None = None,
    W_h: np.ndarray | None = None,
) -> np.ndarray:
    """Data for nu(h_{nu a}), a over the angular directions, stacked last."""
    grid = bgeo.grid
    bg = bgeo.background
    calc = FaceCalculus(bgeo)

    beta = _bianchi_face(calc, target.h_A)
    g_face = bg.metric(*grid.coords())[:, -1]
    VC_low = np.einsum("...ab,...b->...a", g_face, target.V_C)
    first, second = _zbracket(bgeo, calc, np.asarray(f, float))

    cols = []
    for k, comp in enumerate(_face_dirs(grid)):
        if comp == 0:
            continue
        col = beta[..., k] - VC_low[..., comp]
        col -= first[..., k]
        # the lone h_nunu coupling: + d_a h_nunu / 2
        col += 0.5 * grid.diff_c(np.asarray(h_nunu, float), comp)
        col += np.asarray(f, float) * second[..., k]
        if h is not None:
            col += _ebracket_component(bgeo, calc, h, W_h, comp)
        cols.append(col)
    return np.stack(cols, axis=-1)


def normal_gauge_residual(
    bg: BackgroundMetric, grid: CornerGrid, h: np.ndarray, V_h: np.ndarray
) -> np.ndarray:
    """Residual of the normal component of the linearized gauge identity.

    V'_h(nu) = -nu(h_nunu)/2 + nu(tr_C h^T)/2 + delta_C(h(nu)^T)
               - h_nunu H + <A, h^T> - <D^2 x^1, h>.
    """
    h = np.asarray(h, float)
    X = grid.coords()
    g = bg.metric(*X)
    ginv = inverse_metric(g)
    Gam = bg.christoffel(*X)
    nu = normal_field(bg, grid)
    dirs = _face_dirs(grid)

    nu_low = np.einsum("...ab,...b->...a", g, nu)
    lhs = np.einsum("...a,...a->...", np.asarray(V_h, float), nu_low)[:, -1]

    hnunu_bulk = np.einsum("...a,...b,...ab->...", nu, nu, h)
    proj = ginv - np.einsum("...a,...b->...ab", nu, nu)
    trT_bulk = np.einsum("...ab,...ab->...", proj, h)

    def nuderiv(s):
        ds = np.stack([grid.diff(s, m) for m in range(grid.d)], axis=-1)
        return np.einsum("...m,...m->...", nu, ds)[:, -1]

    bgeo = BoundaryGeometry.of(bg, grid)
    calc = FaceCalculus(bgeo)
    hnu = np.einsum("...am,...m->...a", h[:, -1], nu[:, -1])
    omega = hnu[..., dirs]

    h_face = h[:, -1]
    hT = _tangential_block(h_face, dirs)
    h_up = np.einsum("...ma,...nb,...ab->...mn", ginv, ginv, h)[:, -1]

    rhs = -0.5 * nuderiv(hnunu_bulk)
    rhs += 0.5 * nuderiv(trT_bulk)
    rhs -= calc.div_form(omega)
    rhs -= hnunu_bulk[:, -1] * bgeo.H
    rhs += sym_inner(bgeo.gamma_inv, bgeo.A, hT)
    rhs += np.einsum("...mn,...mn->...", Gam[:, -1][..., 1, :, :], h_up)
    return lhs - rhs
