"""Trace splitting, eta, and boundary-condition assembly tests."""

import numpy as np
import pytest
import sympy as sp

from cornerlab import boundary as bd
from cornerlab import gauge
from cornerlab import geometry as geo
from cornerlab.grid import build_grid


@pytest.fixture(scope="module")
def grid2():
    return build_grid(2, None, 16, 16, T=0.5, c_max=3.5)


@pytest.fixture(scope="module")
def hyp(grid2):
    return geo.BoundaryGeometry.of(geo.catalog("hyperboloid_boundary", r0=2.0), grid2)


def _random_trace(bgeo, seed=0):
    rng = np.random.default_rng(seed)
    hT = rng.normal(size=bgeo.A.shape)
    return 0.5 * (hT + np.swapaxes(hT, -1, -2))


def test_split_trace_trivial_and_reconstruction(hyp):
    h_A, f = bd.split_trace(hyp.A, hyp.A, hyp.gamma)
    assert np.max(np.abs(h_A)) == 0.0
    assert np.allclose(f, 1.0)

    hT = _random_trace(hyp)
    h_A, f = bd.split_trace(hT, hyp.A, hyp.gamma)
    rec = h_A + f[..., None, None] * hyp.A
    assert np.max(np.abs(rec - hT)) < 1e-12
    gamma_inv = np.linalg.inv(hyp.gamma)
    assert np.max(np.abs(bd.sym_inner(gamma_inv, h_A, hyp.A))) < 1e-12

    # idempotence: splitting the A-free part again returns (itself, 0)
    h_A2, f2 = bd.split_trace(h_A, hyp.A, hyp.gamma)
    assert np.max(np.abs(h_A2 - h_A)) < 1e-12
    assert np.max(np.abs(f2)) < 1e-12


def test_split_trace_refuses_null_second_form(grid2, hyp):
    flat = geo.BoundaryGeometry.of(geo.catalog("flat_corner"), grid2, lam=1.0)
    with pytest.raises(bd.BoundaryError, match="non-null"):
        bd.split_trace(_random_trace(hyp), flat.A, flat.gamma)


def test_modified_data_validates_orthogonality(hyp):
    h_A, _ = bd.split_trace(_random_trace(hyp), hyp.A, hyp.gamma)
    z = np.zeros(hyp.H.shape)
    bd.ModifiedBoundaryData.of(hyp, h_A, z, np.zeros(hyp.H.shape + (3,)))
    with pytest.raises(bd.BoundaryError, match="orthogonal"):
        bd.ModifiedBoundaryData.of(hyp, hyp.A, z, np.zeros(hyp.H.shape + (3,)))


def test_eta_trivial_and_mixed_component(grid2):
    bg = geo.catalog("flat_corner")
    h = np.zeros(grid2.shape + (3, 3))
    assert np.max(np.abs(bd.eta_of(bg, grid2, h))) == 0.0
    h[..., 0, 1] = h[..., 1, 0] = 0.7
    assert np.allclose(bd.eta_of(bg, grid2, h), 0.7, atol=1e-14)


def test_eta_contraction_oracle_rindler(grid2):
    bg = geo.catalog("rindler_slab", z_c=2.0)
    rng = np.random.default_rng(5)
    h = rng.normal(size=grid2.shape + (3, 3))
    h = 0.5 * (h + np.swapaxes(h, -1, -2))
    nu = bd.normal_field(bg, grid2)[:, -1]
    hb = h[:, -1]
    oracle = np.einsum("...b,...b->...", hb[..., 0, :], nu)
    oracle += np.einsum("...a,...b,...ab->...", nu, nu, hb)
    assert np.max(np.abs(bd.eta_of(bg, grid2, h) - oracle)) < 1e-12


def _zero_target(bgeo):
    z = np.zeros(bgeo.H.shape)
    return bd.ModifiedBoundaryData.of(
        bgeo, np.zeros_like(bgeo.A), z, np.zeros(bgeo.H.shape + (3,))
    )


def test_f_equation_trivial(hyp):
    rhs, qs, qv = bd.f_equation_rhs(hyp, _zero_target(hyp))
    assert np.max(np.abs(rhs)) == 0.0
    assert np.all(np.isfinite(qs)) and np.all(np.isfinite(qv))


def test_f_equation_q_coefficients_umbilic(hyp):
    # A-hat is parallel and H-hat constant on the umbilic boundary, so the
    # q-terms collapse to the curvature pairing <Ric_C, A-hat> = K / lam
    _, qs, qv = bd.f_equation_rhs(hyp, _zero_target(hyp))
    interior = (slice(2, -2),)
    assert np.max(np.abs(qs[interior] - 0.25 / hyp.lam)) < 2e-3
    assert np.max(np.abs(qv[interior])) < 2e-3


def test_f_equation_rhs_is_linearized_face_curvature(grid2):
    # on a flat face the assembled target part is R'_{h_A} alone
    flat = geo.BoundaryGeometry.of(geo.catalog("flat_corner"), grid2, lam=1.0)
    t, th = sp.symbols("t th", real=True)
    S_sym = sp.Matrix(
        [[sp.sin(t) * sp.cos(th), sp.cos(t + th) / 5], [sp.cos(t + th) / 5, sp.sin(t + th)]]
    )
    etainv = sp.diag(-1, 1)
    tr = sum(etainv[a, b] * S_sym[a, b] for a in range(2) for b in range(2))
    co = (t, th)
    box_tr = -sp.diff(tr, t, 2) + sp.diff(tr, th, 2)
    divdiv = sum(
        etainv[a, c] * etainv[b, d] * sp.diff(S_sym[c, d], co[a], co[b])
        for a in range(2)
        for b in range(2)
        for c in range(2)
        for d in range(2)
    )
    oracle_sym = -box_tr + divdiv
    errs = []
    for N in (32, 64):
        grid = build_grid(2, None, N, N, T=0.5, c_max=1.2)
        fb = geo.BoundaryGeometry.of(geo.catalog("flat_corner"), grid, lam=1.0)
        tt, _, thh = grid.coords_boundary()
        S = np.zeros(fb.A.shape)
        for a in range(2):
            for b in range(2):
                S[..., a, b] = sp.lambdify(co, S_sym[a, b], "numpy")(tt, thh)
        calc = bd.FaceCalculus(fb)
        got = calc.linearized_scalar_curvature(S)
        oracle = sp.lambdify(co, oracle_sym, "numpy")(tt, thh)
        # composed one-sided stencils at the first and last time rows are
        # first order; measure on the time interior
        errs.append(np.max(np.abs(got - oracle)[3:-3]))
    order = np.log2(errs[0] / errs[1])
    assert 1.8 <= order <= 2.2, (errs, order)


def test_f_initial_trivial_and_construction(hyp):
    grid = hyp.grid
    nang = grid.shape[2]
    zero_face = np.zeros(hyp.H.shape)
    z22 = np.zeros((nang, 2, 2))
    f0, ft, resid = bd.f_initial(hyp, z22, z22, np.zeros(hyp.A.shape))
    assert np.max(np.abs(f0)) == 0.0 and np.max(np.abs(ft)) == 0.0 and resid < 1e-14

    # data induced by h^T = f A with f = t * phi(theta)
    th = grid.axes[2]
    phi = np.cos(th)
    dt_hT = phi[:, None, None] * hyp.A[0]
    f0, ft, resid = bd.f_initial(hyp, z22, dt_hT, np.zeros(hyp.A.shape))
    assert np.max(np.abs(f0)) < 1e-13
    assert np.max(np.abs(ft - phi)) < 1e-12
    assert resid < 1e-12

    # injected noise leaves a reported least-squares residual
    rng = np.random.default_rng(9)
    noisy = dt_hT + 0.1 * rng.normal(size=dt_hT.shape)
    _, _, resid = bd.f_initial(hyp, z22, noisy, np.zeros(hyp.A.shape))
    assert resid > 1e-3
    del zero_face


def test_sommerfeld_rhs_trivial_and_eta_term(hyp):
    f0 = np.zeros(hyp.H.shape)
    assert np.max(np.abs(bd.sommerfeld_rhs_h0nu(hyp, _zero_target(hyp), f0))) == 0.0
    t = hyp.grid.coords_boundary()[0]
    tgt = bd.ModifiedBoundaryData.of(
        hyp, np.zeros_like(hyp.A), t, np.zeros(hyp.H.shape + (3,))
    )
    out = bd.sommerfeld_rhs_h0nu(hyp, tgt, f0)
    assert np.max(np.abs(out - 0.5)) < 1e-12


def test_neumann_rhs_trivial_and_hnunu_term(hyp):
    f0 = np.zeros(hyp.H.shape)
    out = bd.neumann_rhs_hnua(hyp, _zero_target(hyp), f0, np.zeros(hyp.H.shape))
    assert out.shape == hyp.H.shape + (1,)
    assert np.max(np.abs(out)) == 0.0

    th = hyp.grid.coords_boundary()[2]
    out = bd.neumann_rhs_hnua(hyp, _zero_target(hyp), f0, np.sin(th))
    errs = np.abs(out[..., 0] - 0.5 * np.cos(th))
    assert np.max(errs) < 0.04


def test_assembly_is_triangular(hyp):
    # the h_{0 nu} data never reads h_nunu or h_{nu a}; the h_{nu a} data
    # reads only f and h_nunu of the later fields
    rng = np.random.default_rng(2)
    f = rng.normal(size=hyp.H.shape)
    tgt = _zero_target(hyp)
    base = bd.sommerfeld_rhs_h0nu(hyp, tgt, f)
    again = bd.sommerfeld_rhs_h0nu(hyp, tgt, f)
    assert np.array_equal(base, again)
    hnunu1 = rng.normal(size=hyp.H.shape)
    hnunu2 = rng.normal(size=hyp.H.shape)
    n1 = bd.neumann_rhs_hnua(hyp, tgt, f, hnunu1)
    n2 = bd.neumann_rhs_hnua(hyp, tgt, f, hnunu2)
    assert not np.array_equal(n1, n2)


def _smooth_h(grid):
    t, x1, th = grid.coords()
    h = np.zeros(grid.shape + (3, 3))
    h[..., 0, 0] = np.sin(t + x1) * np.cos(th)
    h[..., 0, 1] = h[..., 1, 0] = 0.3 * np.cos(t) * np.sin(x1 + th)
    h[..., 1, 1] = np.cos(2 * th) * np.sin(x1)
    h[..., 1, 2] = h[..., 2, 1] = 0.2 * np.sin(t) * np.cos(x1)
    h[..., 2, 2] = 0.4 * np.sin(t + th)
    h[..., 0, 2] = h[..., 2, 0] = 0.1 * np.cos(x1 + t)
    return h


def test_linearized_A_matches_metric_perturbation_oracle():
    bg = geo.catalog("hyperboloid_boundary", r0=2.0)
    t, x1, th = bg.coords
    h_sym = sp.Matrix(
        [
            [sp.sin(t) * sp.cos(th), 3 * sp.cos(t + x1) / 10, sp.sin(th) / 10],
            [3 * sp.cos(t + x1) / 10, sp.cos(th) * sp.sin(x1 + 1), sp.cos(t) / 5],
            [sp.sin(th) / 10, sp.cos(t) / 5, sp.sin(t + th)],
        ]
    )
    eps = 1e-6
    errs = []
    for N in (16, 32):
        grid = build_grid(2, None, N, N, T=0.5, c_max=3.5)
        X = grid.coords()
        h = np.zeros(grid.shape + (3, 3))
        for a in range(3):
            for b in range(3):
                h[..., a, b] = sp.lambdify((t, x1, th), h_sym[a, b], "numpy")(*X) + 0.0 * X[0]
        A_p = bd.linearized_A(bg, grid, h)
        two_sided = []
        for s in (1, -1):
            pert = geo.BackgroundMetric(
                tag="pert", n=2, g_sym=bg.g_sym + s * eps * h_sym, coords=bg.coords
            )
            two_sided.append(geo.second_form_boundary(pert, grid)[0])
        oracle = (two_sided[0] - two_sided[1]) / (2 * eps)
        errs.append(np.max(np.abs(A_p - oracle)))
    order = np.log2(errs[0] / errs[1])
    assert 1.8 <= order <= 2.2, (errs, order)


def test_linearized_A_conformal_direction(grid2):
    bg = geo.catalog("hyperboloid_boundary", r0=2.0)
    g = bg.metric(*grid2.coords())
    A_p = bd.linearized_A(bg, grid2, 0.5 * g)
    eps = 1e-6
    plus = geo.BackgroundMetric(tag="p", n=2, g_sym=bg.g_sym * (1 + eps / 2), coords=bg.coords)
    minus = geo.BackgroundMetric(tag="m", n=2, g_sym=bg.g_sym * (1 - eps / 2), coords=bg.coords)
    oracle = (
        geo.second_form_boundary(plus, grid2)[0] - geo.second_form_boundary(minus, grid2)[0]
    ) / (2 * eps)
    assert np.max(np.abs(A_p - oracle)) < 0.01


def test_normal_gauge_identity(grid2):
    bg = geo.catalog("flat_corner")
    z = np.zeros(grid2.shape + (3, 3))
    res = bd.normal_gauge_residual(bg, grid2, z, np.zeros(grid2.shape + (3,)))
    assert np.max(np.abs(res)) == 0.0

    h = _smooth_h(grid2)
    V_h = gauge.linearized_gauge(bg, grid2, h).V
    res = bd.normal_gauge_residual(bg, grid2, h, V_h)
    assert np.max(np.abs(res)) < 1e-12

    errs = []
    for N in (16, 32):
        grid = build_grid(2, None, N, N, T=0.5, c_max=3.5)
        bgh = geo.catalog("hyperboloid_boundary")
        h = _smooth_h(grid)
        V_h = gauge.linearized_gauge(bgh, grid, h).V
        errs.append(np.max(np.abs(bd.normal_gauge_residual(bgh, grid, h, V_h))))
    order = np.log2(errs[0] / errs[1])
    assert 1.8 <= order <= 2.2, (errs, order)

    # a gauge field inconsistent with h leaves an order-one residual (reported)
    rng = np.random.default_rng(4)
    noise = rng.normal(size=grid2.shape + (3, 3))
    noise = 0.5 * (noise + np.swapaxes(noise, -1, -2))
    res = bd.normal_gauge_residual(bg, grid2, noise, np.zeros(grid2.shape + (3,)))
    assert np.max(np.abs(res)) > 0.1


def test_extend_ahat_profile(hyp):
    ext = bd.extend_ahat(hyp)
    assert ext.shape == (hyp.grid.shape[0],) + hyp.grid.shape[1:] + (2, 2)
    assert np.max(np.abs(ext[:, -1] - hyp.Ahat)) < 1e-14
    assert np.max(np.abs(ext[:, 0])) == 0.0
    x1 = hyp.grid.axes[1]
    chi = bd._cutoff(x1)
    assert np.all(np.diff(chi) >= -1e-14)
    assert chi[0] == 0.0 and abs(chi[-1] - 1.0) < 1e-14


def test_e_coupling_scales_with_localization():
    # the E couplings shrink roughly linearly with the background scale
    grid = build_grid(2, None, 16, 16, T=0.5, c_max=3.5)
    h = _smooth_h(grid)
    maxima = {}
    for lam in (1.0, 0.5):
        bg = geo.catalog("hyperboloid_boundary", r0=2.0).rescaled(lam)
        bgeo = geo.BoundaryGeometry.of(bg, grid)
        rhs, _, _ = bd.f_equation_rhs(bgeo, _zero_target(bgeo), h=h)
        maxima[lam] = np.max(np.abs(rhs))
    ratio = maxima[0.5] / maxima[1.0]
    assert 0.4 <= ratio <= 0.6, maxima
