"""Constraint rows and corner-matching residuals."""

import dataclasses

import numpy as np
import pytest
import sympy as sp

from cornerlab import compat
from cornerlab import geometry as geo
from cornerlab.grid import build_grid


def _perturbed_flat_2d(ring_angular=False):
    """Normalized chart, right angle at the ring, generic interior wiggles.

    With ``ring_angular`` the angular metric varies along the ring itself,
    which exercises the tangential gauge entry away from zero.
    """
    t, x1, th = sp.symbols("t x1 th", real=True)
    co = (t, x1, th)
    gtt = sp.Rational(3, 10) * sp.sin(t + x1)
    if ring_angular:
        gthth = (1 + gtt) * (2 + sp.cos(th)) / 2
    else:
        gthth = 1 + gtt * (2 + sp.cos(th))
    g = sp.Matrix(
        [
            [
                -1 + x1 * sp.Rational(3, 10) * sp.sin(t + th) * sp.cos(x1),
                t * x1 * sp.Rational(1, 5) * sp.cos(t + 2 * th),
                x1 * sp.Rational(1, 5) * sp.sin(2 * th) * sp.cos(t),
            ],
            [0, 1 + t * sp.Rational(1, 4) * sp.sin(x1 + th), t * sp.Rational(1, 5) * sp.cos(th) * sp.cos(x1)],
            [0, 0, gthth],
        ]
    )
    g[1, 0] = g[0, 1]
    g[2, 0] = g[0, 2]
    g[2, 1] = g[1, 2]
    return geo.BackgroundMetric(tag="wiggle2", n=2, g_sym=g, coords=co)


def _perturbed_flat_3d():
    t, x1, th, ph = sp.symbols("t x1 th ph", real=True)
    co = (t, x1, th, ph)
    g = sp.zeros(4, 4)
    g[0, 0] = -1 + x1 * sp.Rational(1, 5) * sp.sin(t + th) * sp.cos(x1 + ph)
    g[0, 1] = t * x1 * sp.Rational(1, 5) * sp.cos(t + th)
    g[0, 2] = x1 * sp.Rational(1, 10) * sp.sin(th + ph) * sp.cos(t)
    g[0, 3] = x1 * sp.Rational(1, 10) * sp.cos(2 * ph)
    g[1, 1] = 1 + t * sp.Rational(1, 4) * sp.sin(x1 + th)
    g[1, 2] = t * sp.Rational(1, 10) * sp.cos(ph) * sp.cos(x1)
    g[1, 3] = t * sp.Rational(1, 10) * sp.sin(th)
    g[2, 2] = (1 + sp.Rational(1, 5) * sp.sin(t + x1)) * (2 + sp.cos(th + ph)) / 2
    g[2, 3] = sp.Rational(1, 10) * sp.sin(th) * sp.cos(ph) * (1 + t * x1)
    g[3, 3] = 1 + sp.Rational(1, 5) * sp.cos(t + x1) * sp.sin(th)
    for a in range(4):
        for b in range(a):
            g[a, b] = g[b, a]
    return geo.BackgroundMetric(tag="wiggle3", n=3, g_sym=g, coords=co)


@pytest.fixture(scope="module")
def grid2():
    return build_grid(2, None, 16, 16, T=0.5, c_max=1.2)


@pytest.fixture(scope="module")
def bg2():
    return _perturbed_flat_2d()


# ---------------------------------------------------------------------------
# constraint rows


def test_constraint_flat_restriction_is_exactly_zero(grid2):
    sl = compat.slice_data_from_metric(geo.catalog("flat_corner"), grid2)
    res = compat.constraint_residual(
        grid2, sl["gamma_S"], sl["kappa"], sl["nu_S"], Q=sl["Q"], deltastar_V=sl["deltastar_V"]
    )
    assert res.max_hamiltonian == 0.0
    assert res.max_momentum == 0.0


def test_constraint_vacuum_restriction_converges():
    bg = geo.catalog("hyperboloid_boundary")
    errs = []
    for N in (16, 32):
        grid = build_grid(2, None, N, N, T=0.5, c_max=3.5)
        sl = compat.slice_data_from_metric(bg, grid)
        res = compat.constraint_residual(grid, sl["gamma_S"], sl["kappa"], sl["nu_S"])
        # the momentum row vanishes identically for this time-symmetric slice
        assert res.max_momentum < 1e-12
        errs.append(res.max_hamiltonian)
    order = np.log2(errs[0] / errs[1])
    assert 1.8 <= order <= 2.6, (errs, order)


def test_constraint_sourced_restriction_converges(bg2):
    errs_h, errs_m = [], []
    for N in (16, 32):
        grid = build_grid(2, None, N, N, T=0.5, c_max=1.2)
        sl = compat.slice_data_from_metric(bg2, grid)
        res = compat.constraint_residual(
            grid, sl["gamma_S"], sl["kappa"], sl["nu_S"], Q=sl["Q"], deltastar_V=sl["deltastar_V"]
        )
        errs_h.append(res.max_hamiltonian)
        errs_m.append(res.max_momentum)
    assert 1.8 <= np.log2(errs_h[0] / errs_h[1]) <= 2.2, errs_h
    assert 1.5 <= np.log2(errs_m[0] / errs_m[1]) <= 2.2, errs_m


def test_constraint_momentum_is_linear_in_kappa(grid2, bg2):
    sl = compat.slice_data_from_metric(bg2, grid2)
    x1, th = np.meshgrid(grid2.axes[1], grid2.axes[2], indexing="ij")
    bump = np.sin(2 * th) * np.cos(x1)
    dk = np.zeros_like(sl["kappa"])
    dk[..., 0, 1] = bump
    dk[..., 1, 0] = bump

    def mom(kap):
        return compat.constraint_residual(grid2, sl["gamma_S"], kap, sl["nu_S"]).momentum

    base = mom(sl["kappa"])
    d1 = mom(sl["kappa"] + 0.1 * dk) - base
    d2 = mom(sl["kappa"] + 0.2 * dk) - base
    assert np.max(np.abs(d2 - 2.0 * d1)) < 1e-10


def test_constraint_rejects_non_finite_rows():
    with pytest.raises(ValueError, match="non-finite"):
        compat.ConstraintResidual(np.array([np.nan]), np.zeros((1, 2)))


# ---------------------------------------------------------------------------
# order 0


def test_order0_restriction_is_trivial(grid2, bg2):
    data = compat.corner_data_from_metric(bg2, grid2)
    rep = compat.compat_residual(0, data)
    assert rep.maxima["metric_match"] == 0.0
    assert rep.maxima["gauge_match"] == 0.0
    assert not rep.skipped


def test_order0_reports_an_injected_gap_exactly(grid2, bg2):
    data = compat.corner_data_from_metric(bg2, grid2)
    eps = 3.25e-5
    gamma_C = data.gamma_C.copy()
    gamma_C[..., 1, 1] += eps
    gapped = dataclasses.replace(data, gamma_C=gamma_C)
    rep = compat.compat_residual(0, gapped)
    assert abs(rep.maxima["metric_match"] - eps) < 1e-14


def test_order0_normal_match_converges(bg2):
    errs = []
    for N in (16, 32):
        grid = build_grid(2, None, N, N, T=0.5, c_max=1.2)
        data = compat.corner_data_from_metric(bg2, grid)
        errs.append(compat.compat_residual(0, data).maxima["normal_match"])
    order = np.log2(errs[0] / errs[1])
    assert 1.8 <= order <= 2.4, (errs, order)


# ---------------------------------------------------------------------------
# order 1


def test_order1_restriction_metric_and_velocity_are_round_off(grid2, bg2):
    rep = compat.compat_residual(1, compat.corner_data_from_metric(bg2, grid2))
    assert rep.maxima["first_order_metric"] < 1e-13
    assert rep.maxima["velocity"] < 1e-13


def test_order1_tangential_gauge_converges():
    bg = _perturbed_flat_2d(ring_angular=True)
    errs = []
    for N in (16, 32):
        grid = build_grid(2, None, N, N, T=0.5, c_max=1.2)
        data = compat.corner_data_from_metric(bg, grid)
        errs.append(compat.compat_residual(1, data).maxima["tangential_gauge"])
    order = np.log2(errs[0] / errs[1])
    assert 1.6 <= order <= 2.4, (errs, order)


def test_order1_trace_of_metric_entry_reproduces_velocity():
    # the half gamma-trace of the first-order metric residual equals minus
    # the velocity residual, an identity that survives incompatible data;
    # with one angular direction the solved angle absorbs any gap, so the
    # off-diagonal injection needs two
    grid = build_grid(3, None, 12, 12, T=0.4, c_max=1.2)
    data = compat.corner_data_from_metric(_perturbed_flat_3d(), grid)
    t = grid.axes[0][:, None, None]
    th = grid.axes[2][None, :, None]
    gamma_C = data.gamma_C.copy()
    gamma_C[..., 1, 2] += 0.05 * np.sin(t + th) * t + 0.0 * gamma_C[..., 0, 0]
    gamma_C[..., 2, 1] = gamma_C[..., 1, 2]
    gapped = dataclasses.replace(data, gamma_C=gamma_C)
    rep = compat.compat_residual(1, gapped)
    lh = rep.entries["first_order_metric"]
    assert np.max(np.abs(lh)) > 1e-3
    gamma_ring_inv = np.linalg.inv(gapped.gamma_S[-1][..., 1:, 1:])
    half_trace = 0.5 * np.einsum("...AB,...AB->...", gamma_ring_inv, lh)
    assert np.max(np.abs(half_trace + rep.entries["velocity"])) < 1e-12


# ---------------------------------------------------------------------------
# order 2


def test_order2_restriction_converges(bg2):
    errs = {k: [] for k in ("second_order_metric", "second_order_mixed", "second_order_corner_normal", "second_order_gauge_rate")}
    for N in (16, 32):
        grid = build_grid(2, None, N, N, T=0.5, c_max=1.2)
        rep = compat.compat_residual(2, compat.corner_data_from_metric(bg2, grid))
        assert not rep.skipped
        for k in errs:
            errs[k].append(rep.maxima[k])
    for k, lo in (
        ("second_order_metric", 1.7),
        ("second_order_mixed", 1.7),
        ("second_order_corner_normal", 1.7),
        # composes one-sided edge stencils, which costs an order
        ("second_order_gauge_rate", 0.8),
    ):
        order = np.log2(errs[k][0] / errs[k][1])
        assert lo <= order <= 2.4, (k, errs[k], order)


def test_order2_three_dimensional_restriction_converges():
    bg = _perturbed_flat_3d()
    maxima = []
    for N in (12, 24):
        grid = build_grid(3, None, N, N, T=0.4, c_max=1.2)
        rep = compat.compat_residual(2, compat.corner_data_from_metric(bg, grid))
        assert not rep.skipped
        maxima.append(rep.maxima)
    for k in maxima[0]:
        order = np.log2(maxima[0][k] / maxima[1][k])
        assert order >= 1.3, (k, maxima, order)


def test_order2_flat_restriction_is_exactly_zero(grid2):
    rep = compat.compat_residual(2, compat.corner_data_from_metric(geo.catalog("flat_corner"), grid2))
    assert rep.max_abs == 0.0
    assert not rep.skipped


# ---------------------------------------------------------------------------
# gating and validation


def test_tilted_corner_skips_right_angle_entries(grid2, bg2):
    t, x1, th = bg2.coords
    g = bg2.g_sym.copy()
    g[0, 1] = g[0, 1] - sp.Rational(3, 10)
    g[1, 0] = g[0, 1]
    tilted = geo.BackgroundMetric(tag="tilted", n=2, g_sym=g, coords=(t, x1, th))
    rep = compat.compat_residual(2, compat.corner_data_from_metric(tilted, grid2))
    assert set(rep.entries) == {"second_order_metric"}
    for name in ("second_order_mixed", "second_order_corner_normal", "second_order_gauge_rate"):
        assert "right-angle" in rep.skipped[name]
    # the order-1 entries do not need the right angle
    rep1 = compat.compat_residual(1, compat.corner_data_from_metric(tilted, grid2))
    assert not rep1.skipped


def test_missing_gauge_rate_data_skips_dependent_entries(grid2, bg2):
    data = dataclasses.replace(compat.corner_data_from_metric(bg2, grid2), dt_V=None)
    rep = compat.compat_residual(2, data)
    assert set(rep.entries) == {"second_order_metric", "second_order_mixed"}
    for name in ("second_order_corner_normal", "second_order_gauge_rate"):
        assert "gauge one-form" in rep.skipped[name]


def test_unnormalized_chart_skips_higher_orders(grid2, bg2):
    t, x1, th = bg2.coords
    scaled = geo.BackgroundMetric(tag="scaled", n=2, g_sym=2 * bg2.g_sym, coords=(t, x1, th))
    data = compat.corner_data_from_metric(scaled, grid2)
    assert not data.chart_normalized()
    for order in (1, 2):
        rep = compat.compat_residual(order, data)
        assert not rep.entries
        assert all("normalized" in note for note in rep.skipped.values())


def test_compat_rejects_unknown_order(grid2, bg2):
    with pytest.raises(ValueError, match="orders above two"):
        compat.compat_residual(3, compat.corner_data_from_metric(bg2, grid2))


def test_corner_data_validation(grid2, bg2):
    data = compat.corner_data_from_metric(bg2, grid2)
    bad = data.kappa.copy()
    bad[..., 0, 1] += 1e-3
    with pytest.raises(ValueError, match="not symmetric"):
        dataclasses.replace(data, kappa=bad)
    with pytest.raises(ValueError, match="shape"):
        dataclasses.replace(data, nu_S=data.nu_S[..., :2])
