"""Background metrics and the extrinsic geometry of the corner boundary.

Backgrounds are analytic: each catalog entry is a sympy metric in the chart
coordinates (t, x1, angular...).  Only g, dg and d2g are lambdified; every
derived tensor (inverse, Christoffels, Ricci, normals, second fundamental
forms) is assembled from those values by exact tensor algebra, so geometry
oracles carry no finite-difference error.

Boundary quantities on C (x1 = 0): induced Lorentz metric gamma, outward
unit normal nu_C = grad(x1)/|grad(x1)|, second fundamental form
A = (1/2) Lie_{nu_C} g restricted to C, mean curvature H = tr_gamma A, and
the boundary stress tensor Pi = H*gamma - A whose signature drives the
convexity verdict.

Catalog notes:
  * hyperboloid_boundary pulls flat 2+1 Minkowski space back through
    T = x0, X = R cos(x2), Y = R sin(x2) with R = sqrt(rho^2 + x0^2) and
    rho = r0^2/(r0 - x1).  All three chart functions are wave-harmonic, the
    chart is exactly vacuum, and the boundary x1 = 0 is the umbilic
    hyperquadric with A = gamma/r0.
  * product_convex_3d uses g = -dt^2 + dr^2 + r^2(dth^2 + dph^2) with
    r = r0 + x1 and both angles periodic: a doubly curved convex boundary
    on a torus chart, with Pi(dt,dt) = -2/r0 and spatial block gamma/r0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import sympy as sp

from .grid import CornerGrid

__all__ = [
    "BackgroundMetric",
    "BoundaryGeometry",
    "ConvexityReport",
    "catalog",
    "christoffel",
    "second_form_boundary",
    "brown_york",
    "corner_angle",
    "gauss_curvature_boundary",
    "normals_and_frames",
]

TOL_SIG = 1e-8


class GeometryError(ValueError):
    """Raised for invalid metric input (signature, degeneracy, preconditions)."""


# ---------------------------------------------------------------------------
# exact tensor algebra on sampled values (component axes trail)


def inverse_metric(g: np.ndarray) -> np.ndarray:
    return np.linalg.inv(g)


def d_inverse_metric(ginv: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """partial_mu g^{ab} = -g^{ac} g^{bd} partial_mu g_{cd}; index order [..., mu, a, b]."""
    return -np.einsum("...ac,...bd,...mcd->...mab", ginv, ginv, dg)


def christoffel_from(ginv: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """Gamma^a_{bc} from the inverse metric and dg[..., mu, a, b] = partial_mu g_ab."""
    term = np.einsum("...bdc->...dbc", dg) + np.einsum("...cdb->...dbc", dg) - dg
    return 0.5 * np.einsum("...ad,...dbc->...abc", ginv, term)


def d_christoffel_from(
    ginv: np.ndarray, dginv: np.ndarray, dg: np.ndarray, d2g: np.ndarray
) -> np.ndarray:
    """partial_mu Gamma^a_{bc}; d2g indexed [..., mu, nu, a, b]."""
    sym = np.einsum("...bdc->...dbc", dg) + np.einsum("...cdb->...dbc", dg) - dg
    dsym = (
        np.einsum("...mbdc->...mdbc", d2g)
        + np.einsum("...mcdb->...mdbc", d2g)
        - d2g
    )
    return 0.5 * (
        np.einsum("...mad,...dbc->...mabc", dginv, sym)
        + np.einsum("...ad,...mdbc->...mabc", ginv, dsym)
    )


def ricci_from(Gamma: np.ndarray, dGamma: np.ndarray) -> np.ndarray:
    """Ric_ab = partial_c Gamma^c_ab - partial_a Gamma^c_cb + Gamma Gamma terms."""
    r = np.einsum("...ccab->...ab", dGamma) - np.einsum("...accb->...ab", dGamma)
    r += np.einsum("...ccd,...dab->...ab", Gamma, Gamma)
    r -= np.einsum("...cad,...dcb->...ab", Gamma, Gamma)
    return r


def gauge_vector_from(ginv: np.ndarray, Gamma: np.ndarray) -> np.ndarray:
    """V^a = box x^a = -g^{bc} Gamma^a_{bc}."""
    return -np.einsum("...bc,...abc->...a", ginv, Gamma)


# ---------------------------------------------------------------------------
# background metric


def _lambdify_matrix(coords: Sequence[sp.Symbol], mat: sp.Matrix) -> Callable:
    flat = list(mat)
    fns = sp.lambdify(coords, flat, modules="numpy")

    def call(*X: np.ndarray) -> list:
        return fns(*X)

    return call


@dataclass
class BackgroundMetric:
    """Analytic Lorentzian metric on the corner chart.

    ``g_sym`` holds the d x d sympy matrix in the chart coordinates; the
    evaluators broadcast over arrays of coordinates and return component
    axes last (``dmetric``: [..., mu, a, b]; ``d2metric``: [..., mu, nu, a, b]).
    """

    tag: str
    n: int
    g_sym: sp.Matrix
    coords: tuple[sp.Symbol, ...]
    params: dict = field(default_factory=dict)
    amplitude: float = 0.0

    def __post_init__(self) -> None:
        self._cache: dict[str, Callable] = {}

    @property
    def d(self) -> int:
        return self.n + 1

    def _eval(self, key: str, make_exprs: Callable, shape: tuple[int, ...], X) -> np.ndarray:
        # the symbolic differentiation is the expensive part, so the
        # expression lists are built lazily and only on a cache miss
        if key not in self._cache:
            exprs = make_exprs()
            self._cache[key] = (sp.lambdify(self.coords, exprs, modules="numpy"), len(exprs))
        fn, m = self._cache[key]
        vals = fn(*X)
        base = np.broadcast(*[np.asarray(x) for x in X]).shape
        out = np.empty(base + (m,))
        for i, v in enumerate(vals):
            out[..., i] = v
        return out.reshape(base + shape)

    def metric(self, *X) -> np.ndarray:
        d = self.d
        return self._eval("g", lambda: list(self.g_sym), (d, d), X)

    def dmetric(self, *X) -> np.ndarray:
        d = self.d
        return self._eval(
            "dg",
            lambda: [
                sp.diff(self.g_sym[a, b], self.coords[mu])
                for mu in range(d)
                for a in range(d)
                for b in range(d)
            ],
            (d, d, d),
            X,
        )

    def d2metric(self, *X) -> np.ndarray:
        d = self.d
        return self._eval(
            "d2g",
            lambda: [
                sp.diff(self.g_sym[a, b], self.coords[mu], self.coords[nu])
                for mu in range(d)
                for nu in range(d)
                for a in range(d)
                for b in range(d)
            ],
            (d, d, d, d),
            X,
        )

    # -- derived samplers ---------------------------------------------------

    def christoffel(self, *X) -> np.ndarray:
        g = self.metric(*X)
        return christoffel_from(inverse_metric(g), self.dmetric(*X))

    def ricci(self, *X) -> np.ndarray:
        g = self.metric(*X)
        ginv = inverse_metric(g)
        dg = self.dmetric(*X)
        d2g = self.d2metric(*X)
        Gamma = christoffel_from(ginv, dg)
        dGamma = d_christoffel_from(ginv, d_inverse_metric(ginv, dg), dg, d2g)
        return ricci_from(Gamma, dGamma)

    def gauge_vector(self, *X) -> np.ndarray:
        g = self.metric(*X)
        ginv = inverse_metric(g)
        return gauge_vector_from(ginv, christoffel_from(ginv, self.dmetric(*X)))

    def volume_element_slice(self, *X) -> np.ndarray:
        """sqrt(det g_S) of the spatial block (axes 1..n)."""
        g = self.metric(*X)
        gs = g[..., 1:, 1:]
        return np.sqrt(np.linalg.det(gs))

    def volume_element_boundary(self, *X) -> np.ndarray:
        """sqrt(|det gamma_C|) of the boundary-tangent block."""
        g = self.metric(*X)
        idx = boundary_indices(self.d)
        gc = g[..., idx, :][..., :, idx]
        return np.sqrt(np.abs(np.linalg.det(gc)))

    # -- structural checks --------------------------------------------------

    def validate_signature(self, *X) -> None:
        """Check Lorentz signature via leading principal minors (all negative)."""
        g = self.metric(*X)
        for k in range(1, self.d + 1):
            minors = np.linalg.det(g[..., :k, :k])
            if not np.all(minors < 0):
                raise GeometryError(
                    f"metric {self.tag!r} loses Lorentz signature (minor {k} >= 0 somewhere)"
                )
        ginv = inverse_metric(g)
        if not np.all(ginv[..., 1, 1] > 0):
            raise GeometryError(f"boundary of {self.tag!r} is not timelike (g^11 <= 0)")

    def max_ricci(self, *X) -> float:
        return float(np.max(np.abs(self.ricci(*X))))

    def max_gauge(self, *X) -> float:
        return float(np.max(np.abs(self.gauge_vector(*X))))

    def char_speed(self, *X) -> float:
        """Max coordinate characteristic speed of the wave operator, for CFL."""
        ginv = inverse_metric(self.metric(*X))
        g00 = ginv[..., 0, 0]
        speed = 0.0
        for i in range(1, self.d):
            g0i = ginv[..., 0, i]
            gii = ginv[..., i, i]
            disc = np.sqrt(np.maximum(g0i * g0i - g00 * gii, 0.0))
            speed = max(speed, float(np.max((np.abs(g0i) + disc) / (-g00))))
        return speed

    def rescaled(self, lam: float) -> "BackgroundMetric":
        """Localized background: component values at x equal the original at lam*x."""
        sub = {c: lam * c for c in self.coords}
        return BackgroundMetric(
            tag=self.tag,
            n=self.n,
            g_sym=self.g_sym.xreplace(sub),
            coords=self.coords,
            params={**self.params, "localization": lam * self.params.get("localization", 1.0)},
            amplitude=self.amplitude,
        )


# ---------------------------------------------------------------------------
# catalog


def _chart_symbols(n: int) -> tuple[sp.Symbol, ...]:
    names = ["x0", "x1", "x2", "x3"][: n + 1]
    return sp.symbols(names, real=True)


def _perturb(g: sp.Matrix, coords, n: int, amplitude: float) -> sp.Matrix:
    """Multiplicative smooth perturbation of g_00 and the first angular block.

    The profile is periodic in the angles, equals 1 at the boundary face and
    vanishes at the inner edge, so the localization convention is preserved.
    """
    x0, x1, x2 = coords[0], coords[1], coords[2]
    prof = sp.cos(sp.pi * x1 / 2) * sp.cos(x0)
    if n == 3:
        prof = prof * sp.cos(coords[3])
    g = g.copy()
    g[0, 0] = g[0, 0] * (1 + amplitude * prof * sp.sin(x2))
    g[2, 2] = g[2, 2] * (1 + amplitude * prof * sp.cos(x2))
    return g


def catalog(
    tag: str,
    n: int | None = None,
    r0: float = 2.0,
    z_c: float = 2.0,
    amplitude: float = 0.0,
) -> BackgroundMetric:
    """Construct a catalog background by name.

    A ``perturbed_`` prefix (or a nonzero ``amplitude``) adds the smooth
    multiplicative perturbation used by the perturbed-variant scenarios.
    """
    base = tag
    if tag.startswith("perturbed_"):
        base = tag[len("perturbed_"):]
        if amplitude == 0.0:
            amplitude = 0.05

    if base == "minkowski_product_disk":
        n = 2 if n is None else n
        if n != 2:
            raise GeometryError("minkowski_product_disk is the n=2 example")
        x = _chart_symbols(2)
        r = sp.Integer(0) + r0 + x[1]
        g = sp.diag(-1, 1, r**2)
        params = {"r0": r0}
    elif base == "hyperboloid_boundary":
        n = 2 if n is None else n
        if n != 2:
            raise GeometryError("hyperboloid_boundary is built in the n=2 chart")
        x = _chart_symbols(2)
        rho = sp.Rational(1) * r0**2 / (r0 - x[1])
        R = sp.sqrt(rho**2 + x[0] ** 2)
        dR = [sp.diff(R, x[0]), sp.diff(R, x[1])]
        g = sp.zeros(3, 3)
        g[0, 0] = -1 + dR[0] ** 2
        g[0, 1] = g[1, 0] = dR[0] * dR[1]
        g[1, 1] = dR[1] ** 2
        g[2, 2] = R**2
        params = {"r0": r0}
    elif base == "rindler_slab":
        n = 2 if n is None else n
        if n != 2:
            raise GeometryError("rindler_slab is the n=2 example")
        x = _chart_symbols(2)
        z = sp.Integer(0) + z_c + x[1]
        g = sp.diag(-(z**2), 1, 1)
        params = {"z_c": z_c}
    elif base == "product_convex_3d":
        n = 3 if n is None else n
        if n != 3:
            raise GeometryError("product_convex_3d is the n=3 example")
        x = _chart_symbols(3)
        r = sp.Integer(0) + r0 + x[1]
        g = sp.diag(-1, 1, r**2, r**2)
        params = {"r0": r0}
    elif base == "flat_corner":
        n = 2 if n is None else n
        x = _chart_symbols(n)
        g = sp.diag(-1, *([1] * n))
        params = {}
    else:
        raise GeometryError(f"unknown background tag {tag!r}")

    if amplitude:
        g = _perturb(g, x, n, amplitude)
    return BackgroundMetric(tag=tag, n=n, g_sym=g, coords=x, params=params, amplitude=amplitude)


# ---------------------------------------------------------------------------
# index bookkeeping


def boundary_indices(d: int) -> list[int]:
    """Spacetime indices tangent to the boundary face C (all but x1)."""
    return [0] + list(range(2, d))


def slice_indices(d: int) -> list[int]:
    """Spacetime indices tangent to the initial slice (all but t)."""
    return list(range(1, d))


def ring_indices(d: int) -> list[int]:
    """Spacetime indices tangent to the corner ring (angular only)."""
    return list(range(2, d))


def restrict(tensor: np.ndarray, idx: Sequence[int], rank: int = 2) -> np.ndarray:
    """Restrict trailing component axes of a tensor to an index subset."""
    out = tensor
    for k in range(rank):
        out = np.take(out, idx, axis=out.ndim - rank + k)
    return out


# ---------------------------------------------------------------------------
# normals and second fundamental forms


def unit_normal_c(g: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    """Outward unit normal of constant-x1 surfaces: grad(x1)/|grad(x1)| raised."""
    s = np.sqrt(ginv[..., 1, 1])
    return ginv[..., :, 1] / s[..., None]


def unit_normal_s(g: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    """Future unit timelike normal of constant-t slices."""
    s = np.sqrt(-ginv[..., 0, 0])
    return -ginv[..., :, 0] / s[..., None]


def _dnormal_c(ginv: np.ndarray, dginv: np.ndarray) -> np.ndarray:
    """partial_mu nu_C^a, exactly, from the analytic metric derivative."""
    s = np.sqrt(ginv[..., 1, 1])
    ds = 0.5 * dginv[..., :, 1, 1] / s[..., None]
    return (
        dginv[..., :, :, 1] / s[..., None, None]
        - np.einsum("...a,...m->...ma", ginv[..., :, 1], ds) / (s**2)[..., None, None]
    )


def second_form_c(g: np.ndarray, ginv: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """A_ab = (1/2)(Lie_{nu_C} g)_ab over all spacetime indices (restrict to C to use)."""
    nu = unit_normal_c(g, ginv)
    dnu = _dnormal_c(ginv, d_inverse_metric(ginv, dg))
    # Lie_nu g_ab = nu^m dg[m,a,b] + g_mb dnu[a,m] + g_am dnu[b,m]
    lie = np.einsum("...m,...mab->...ab", nu, dg)
    lie += np.einsum("...mb,...am->...ab", g, dnu)
    lie += np.einsum("...am,...bm->...ab", g, dnu)
    return 0.5 * lie


def second_form_s(g: np.ndarray, ginv: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """K_ab = (1/2)(Lie_{nu_S} g)_ab over all spacetime indices."""
    nu = unit_normal_s(g, ginv)
    dginv = d_inverse_metric(ginv, dg)
    s = np.sqrt(-ginv[..., 0, 0])
    ds = -0.5 * dginv[..., :, 0, 0] / s[..., None]
    dnu = (
        -dginv[..., :, :, 0] / s[..., None, None]
        + np.einsum("...a,...m->...ma", ginv[..., :, 0], ds) / (s**2)[..., None, None]
    )
    lie = np.einsum("...m,...mab->...ab", nu, dg)
    lie += np.einsum("...mb,...am->...ab", g, dnu)
    lie += np.einsum("...am,...bm->...ab", g, dnu)
    return 0.5 * lie


# ---------------------------------------------------------------------------
# convexity classification


@dataclass
class ConvexityReport:
    """Verdict on the boundary-stress convexity assumption."""

    verdict: str  # holds | degenerate | wrong_signature | cone_misaligned
    min_invariant: float
    pi_tt_max: float
    detail: str = ""

    @property
    def holds(self) -> bool:
        return self.verdict == "holds"


def _orthonormal_frame(gamma: np.ndarray) -> np.ndarray:
    """Gram-Schmidt frame E with E^T gamma E = diag(-1, 1, ..., 1).

    Column 0 starts from the coordinate time direction (assumed timelike on
    C), the rest from the angular directions.
    """
    m = gamma.shape[-1]
    base = np.broadcast_to(np.eye(m), gamma.shape).copy()
    E = np.zeros_like(gamma)
    signs = [-1.0] + [1.0] * (m - 1)
    for k in range(m):
        v = base[..., :, k].copy()
        for j in range(k):
            coef = np.einsum("...a,...ab,...b->...", E[..., :, j], gamma, v) * signs[j]
            v = v - coef[..., None] * E[..., :, j]
        nrm2 = np.einsum("...a,...ab,...b->...", v, gamma, v)
        if k == 0 and np.any(nrm2 >= 0):
            raise GeometryError("coordinate time direction is not timelike on C")
        if k > 0 and np.any(nrm2 <= 0):
            raise GeometryError("angular frame directions degenerate on C")
        E[..., :, k] = v / np.sqrt(np.abs(nrm2))[..., None]
    return E


def classify_brown_york(gamma: np.ndarray, Pi: np.ndarray, tol_sig: float = TOL_SIG) -> ConvexityReport:
    """Classify Pi against gamma on the boundary nodes.

    The verdict is computed from a gamma-orthonormal frame: there Pi is a
    plain symmetric matrix whose eigenvalue signs give the congruence
    signature.  "holds" requires signature (1, n-1) [one negative direction],
    Pi(dt, dt) < 0, and the negative direction gamma-timelike (cone test).
    """
    E = _orthonormal_frame(gamma)
    P = np.einsum("...ai,...ab,...bj->...ij", E, Pi, E)
    w, vecs = np.linalg.eigh(0.5 * (P + np.swapaxes(P, -1, -2)))
    scale = np.max(np.abs(w))
    pi_tt = Pi[..., 0, 0]
    pi_tt_max = float(np.max(pi_tt))
    min_inv = float(np.min(np.abs(w)))
    if scale == 0.0 or min_inv < tol_sig * scale:
        return ConvexityReport("degenerate", min_inv, pi_tt_max, "Pi has a near-null direction")
    n_neg = np.sum(w < 0, axis=-1)
    if not np.all(n_neg == 1):
        return ConvexityReport(
            "wrong_signature", min_inv, pi_tt_max, "Pi is not Lorentzian of boundary type"
        )
    if pi_tt_max >= 0:
        return ConvexityReport("cone_misaligned", min_inv, pi_tt_max, "Pi(dt,dt) >= 0 somewhere")
    # cone test: the Pi-negative eigenvector, mapped back through E, must be
    # gamma-timelike (frame is gamma-orthonormal, so check its 0-component).
    neg_idx = np.argmin(w, axis=-1)
    vneg = np.take_along_axis(vecs, neg_idx[..., None, None], axis=-1)[..., 0]
    timelike = vneg[..., 0] ** 2 > np.sum(vneg[..., 1:] ** 2, axis=-1)
    if not np.all(timelike):
        return ConvexityReport(
            "cone_misaligned", min_inv, pi_tt_max, "negative Pi-direction not gamma-timelike"
        )
    return ConvexityReport("holds", min_inv, pi_tt_max)


# ---------------------------------------------------------------------------
# boundary geometry bundle


@dataclass
class BoundaryGeometry:
    """Evaluated geometry of the boundary face C on a grid.

    Component axes of boundary tensors run over the boundary-tangent index
    list (t first, then the angles); ``lam`` is the renormalization scale of
    A-hat = A/lam and Pi-hat = Pi/lam.
    """

    grid: CornerGrid
    background: BackgroundMetric
    gamma: np.ndarray  # (Nt, Nang..., d-1, d-1)
    gamma_inv: np.ndarray
    A: np.ndarray
    H: np.ndarray
    Pi: np.ndarray
    lam: float
    nu_c: np.ndarray  # full spacetime components on C nodes
    nu_s: np.ndarray
    alpha: np.ndarray  # corner ring
    report: ConvexityReport

    @property
    def Ahat(self) -> np.ndarray:
        return self.A / self.lam

    @property
    def Hhat(self) -> np.ndarray:
        return self.H / self.lam

    @property
    def Pihat(self) -> np.ndarray:
        return self.Pi / self.lam

    @classmethod
    def of(cls, bg: BackgroundMetric, grid: CornerGrid, lam: float | None = None) -> "BoundaryGeometry":
        X = grid.coords_boundary()
        g = bg.metric(*X)
        ginv = inverse_metric(g)
        dg = bg.dmetric(*X)
        idx = boundary_indices(bg.d)
        gamma = restrict(g, idx)
        gamma_inv = np.linalg.inv(gamma)
        A_full = second_form_c(g, ginv, dg)
        A = restrict(A_full, idx)
        H = np.einsum("...ab,...ab->...", gamma_inv, A)
        Pi = H[..., None, None] * gamma - A
        nu_c = unit_normal_c(g, ginv)
        nu_s = unit_normal_s(g, ginv)
        alpha = np.einsum("...ab,...a,...b->...", g[0], nu_s[0], nu_c[0])
        if lam is None:
            lam = float(np.max(np.abs(A)))
            if lam == 0.0:
                lam = 1.0
        report = classify_brown_york(gamma, Pi)
        return cls(
            grid=grid,
            background=bg,
            gamma=gamma,
            gamma_inv=gamma_inv,
            A=A,
            H=H,
            Pi=Pi,
            lam=lam,
            nu_c=nu_c,
            nu_s=nu_s,
            alpha=alpha,
            report=report,
        )


# ---------------------------------------------------------------------------
# module operations (spec surface)


def christoffel(bg: BackgroundMetric, *X) -> np.ndarray:
    """Christoffel symbols Gamma^a_{bc} at the given coordinates."""
    g = bg.metric(*X)
    det = np.linalg.det(g)
    if np.any(np.abs(det) < 1e-12):
        raise GeometryError("metric is near-singular; Christoffel symbols unreliable")
    return christoffel_from(inverse_metric(g), bg.dmetric(*X))


def second_form_boundary(bg: BackgroundMetric, grid: CornerGrid) -> tuple[np.ndarray, np.ndarray]:
    """(A, H) of the boundary face, components over the boundary-tangent indices."""
    X = grid.coords_boundary()
    g = bg.metric(*X)
    ginv = inverse_metric(g)
    if np.any(ginv[..., 1, 1] <= 0):
        raise GeometryError("boundary face is not timelike (g^11 <= 0)")
    idx = boundary_indices(bg.d)
    A = restrict(second_form_c(g, ginv, bg.dmetric(*X)), idx)
    gamma = restrict(g, idx)
    H = np.einsum("...ab,...ab->...", np.linalg.inv(gamma), A)
    return A, H


def brown_york(
    A: np.ndarray, H: np.ndarray, gamma: np.ndarray, tol_sig: float = TOL_SIG
) -> tuple[np.ndarray, ConvexityReport]:
    """Pi = H*gamma - A plus its convexity classification."""
    Pi = H[..., None, None] * gamma - A
    return Pi, classify_brown_york(gamma, Pi, tol_sig)


def _solve_vel_quadratic(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Solve c = a*sqrt(1+alpha^2) - b*alpha pointwise.

    Squaring gives (a^2-b^2) alpha^2 - 2 b c alpha + (a^2-c^2) = 0; roots are
    filtered against the unsquared equation, ties broken toward smaller
    |alpha| (the continuity convention: alpha -> 0 as (a, c) -> 0).
    """
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    c = np.asarray(c, float)
    if np.any((np.abs(a) < 1e-13) & (np.abs(b) < 1e-13)):
        raise GeometryError(
            "both trace inputs vanish at a corner node; the convexity assumption excludes this"
        )
    A2 = a * a - b * b
    B2 = -2.0 * b * c
    C2 = a * a - c * c
    out = np.zeros_like(a)
    it = np.nditer(a, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        roots = np.roots([A2[i], B2[i], C2[i]]) if abs(A2[i]) > 1e-14 else (
            np.array([-C2[i] / B2[i]]) if abs(B2[i]) > 1e-14 else np.array([0.0])
        )
        # double roots come back from the companion matrix as conjugate
        # pairs with O(sqrt(eps)) imaginary parts, so candidates keep every
        # real part and the unsquared equation does the filtering
        cand = np.unique(roots.real)
        ok = [r for r in cand if abs(a[i] * np.sqrt(1 + r * r) - b[i] * r - c[i]) < 1e-7 * (1 + abs(c[i]))]
        if not ok:
            resid = [abs(a[i] * np.sqrt(1 + r * r) - b[i] * r - c[i]) for r in cand]
            if not resid or min(resid) > 1e-3 * (1 + abs(c[i])):
                raise GeometryError("corner-angle equation has no real root")
            ok = [cand[int(np.argmin(resid))]]
        out[i] = min(ok, key=abs)
    return out


def corner_angle(
    grid: CornerGrid,
    gamma_s: np.ndarray,
    kappa: np.ndarray,
    gamma_c: np.ndarray,
) -> np.ndarray:
    """Corner angle alpha on Sigma from initial and boundary data.

    ``gamma_s``/``kappa`` are slice fields (Nr, Nang..., n, n) with components
    over the slice-tangent indices, ``gamma_c`` a boundary field
    (Nt, Nang..., n, n) over the boundary-tangent indices.  The three traces
    of the velocity relation are formed by exact algebra plus one-sided
    differencing, and the relation is solved for alpha.
    """
    d = grid.d
    # corner ring values seen from the slice (x1 = last index) and boundary (t = 0)
    gs_ring = gamma_s[-1]
    gc_ring = gamma_c[0]
    gamma_ring = gs_ring[..., 1:, 1:]  # angular block, from the slice side
    gamma_ring_inv = np.linalg.inv(gamma_ring)

    # a = tr_Sigma kappa
    a = np.einsum("...AB,...AB->...", gamma_ring_inv, kappa[-1][..., 1:, 1:])

    # b = mean curvature of Sigma inside the initial slice, outward normal
    gs_inv = np.linalg.inv(gamma_s)
    Ns = gs_inv[..., :, 0] / np.sqrt(gs_inv[..., 0, 0])[..., None]  # slice-index components
    dgs = np.stack(
        [grid.diff_s(gamma_s, dirn) for dirn in range(1, d)], axis=-3
    )  # [..., m, a, b] over slice directions
    dNs = np.stack([grid.diff_s(Ns, dirn) for dirn in range(1, d)], axis=-2)
    lie = np.einsum("...m,...mab->...ab", Ns, dgs)
    lie += np.einsum("...mb,...am->...ab", gamma_s, dNs)
    lie += np.einsum("...am,...bm->...ab", gamma_s, dNs)
    B = 0.5 * lie[-1][..., 1:, 1:]
    b = np.einsum("...AB,...AB->...", gamma_ring_inv, B)

    # c = mean curvature of Sigma inside the boundary, future normal
    gc_inv = np.linalg.inv(gamma_c)
    u = -gc_inv[..., :, 0] / np.sqrt(-gc_inv[..., 0, 0])[..., None]
    dirs_c = [0] + list(range(2, d))
    dgc = np.stack([grid.diff_c(gamma_c, dirn) for dirn in dirs_c], axis=-3)
    du = np.stack([grid.diff_c(u, dirn) for dirn in dirs_c], axis=-2)
    lie_c = np.einsum("...m,...mab->...ab", u, dgc)
    lie_c += np.einsum("...mb,...am->...ab", gamma_c, du)
    lie_c += np.einsum("...am,...bm->...ab", gamma_c, du)
    Kc = 0.5 * lie_c[0][..., 1:, 1:]
    gammac_ring_inv = np.linalg.inv(gc_ring[..., 1:, 1:])
    c = np.einsum("...AB,...AB->...", gammac_ring_inv, Kc)

    return _solve_vel_quadratic(a, b, c)


def vel_residual(a: np.ndarray, b: np.ndarray, c: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Residual of the velocity trace relation for a given angle field."""
    return a * np.sqrt(1.0 + alpha**2) - b * alpha - c


def gauss_curvature_boundary(grid: CornerGrid, gamma_c: np.ndarray) -> np.ndarray:
    """Discrete Gauss curvature K = R/2 of the 2d boundary metric (n=2 only)."""
    if grid.n != 2:
        raise GeometryError("Gauss curvature of the boundary is defined for n=2 only")
    dirs = [0, 2]
    ginv = np.linalg.inv(gamma_c)
    dg = np.stack([grid.diff_c(gamma_c, dirn) for dirn in dirs], axis=-3)
    Gam = christoffel_from(ginv, dg)
    dGam = np.stack([grid.diff_c(Gam, dirn) for dirn in dirs], axis=-4)
    ric = ricci_from(Gam, dGam)
    return 0.5 * np.einsum("...ab,...ab->...", ginv, ric)


def normals_and_frames(bg: BackgroundMetric, grid: CornerGrid) -> dict:
    """Unit normals, corner angle, and the corner decomposition residual.

    The residual checks u = sqrt(1+alpha^2) nu_S - alpha N at Sigma, where u
    is the future unit normal of Sigma inside C and N the outward unit
    normal of Sigma inside S (the coordinate form of the time-vector
    decomposition, valid in any chart).
    """
    Xc = grid.coords_corner()
    g = bg.metric(*Xc)
    ginv = inverse_metric(g)
    bg.validate_signature(*Xc)
    nu_s = unit_normal_s(g, ginv)
    nu_c = unit_normal_c(g, ginv)
    alpha = np.einsum("...ab,...a,...b->...", g, nu_s, nu_c)
    d = bg.d

    # N: tangent to S, orthogonal to the ring, outward unit
    gs = g[..., 1:, 1:]
    gs_inv = np.linalg.inv(gs)
    N = np.zeros_like(nu_s)
    N[..., 1:] = gs_inv[..., :, 0] / np.sqrt(gs_inv[..., 0, 0])[..., None]

    # u: tangent to C, orthogonal to the ring, future unit
    idx = boundary_indices(d)
    gc = restrict(g, idx)
    gc_inv = np.linalg.inv(gc)
    u_c = -gc_inv[..., :, 0] / np.sqrt(-gc_inv[..., 0, 0])[..., None]
    u = np.zeros_like(nu_s)
    for k, a in enumerate(idx):
        u[..., a] = u_c[..., k]

    recon = np.sqrt(1.0 + alpha**2)[..., None] * nu_s - alpha[..., None] * N
    residual = float(np.max(np.abs(u - recon)))
    return {
        "nu_s": nu_s,
        "nu_c": nu_c,
        "alpha": alpha,
        "tc_residual": residual,
        "norm_nu_s": np.einsum("...ab,...a,...b->...", g, nu_s, nu_s),
        "norm_nu_c": np.einsum("...ab,...a,...b->...", g, nu_c, nu_c),
    }
