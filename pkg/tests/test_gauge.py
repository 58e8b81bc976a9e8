"""Gauge field, linearized gauge, and split-propagation tests."""

import numpy as np
import pytest
import sympy as sp

from cornerlab import gauge
from cornerlab import geometry as geo
from cornerlab.grid import build_grid


@pytest.fixture(scope="module")
def grid2():
    return build_grid(2, None, 16, 16, T=0.5, c_max=1.2)


def test_gauge_field_matches_coordinate_boxes(grid2):
    for tag in ("flat_corner", "rindler_slab", "minkowski_product_disk", "hyperboloid_boundary"):
        bg = geo.catalog(tag)
        gf = gauge.gauge_field(bg, grid2)
        oracle = bg.gauge_vector(*grid2.coords())
        assert np.max(np.abs(gf.V - oracle)) < 1e-13, tag
    assert gauge.gauge_field(geo.catalog("flat_corner"), grid2).max_abs == 0.0


def test_gauge_field_polar_and_rindler_oracles(grid2):
    _, x1, _ = grid2.coords()
    disk = gauge.gauge_field(geo.catalog("minkowski_product_disk", r0=2.0), grid2)
    assert np.allclose(disk.V[..., 1], 1.0 / (2.0 + x1), atol=1e-13)
    rind = gauge.gauge_field(geo.catalog("rindler_slab", z_c=2.0), grid2)
    # on the boundary face z = z_c the slab gauge field is V^z = 1/z_c
    assert np.allclose(rind.V[:, -1, :, 1], 0.5, atol=1e-13)


def test_linearized_gauge_trivial_directions(grid2):
    bg = geo.catalog("flat_corner")
    z = np.zeros(grid2.shape + (3, 3))
    assert gauge.linearized_gauge(bg, grid2, z).max_abs == 0.0
    g = bg.metric(*grid2.coords())
    assert gauge.linearized_gauge(bg, grid2, 0.7 * g).max_abs < 1e-13


def _symbolic_direction():
    t, x1, th = sp.symbols("t x1 th", real=True)
    co = (t, x1, th)
    hs = sp.Matrix(
        [
            [sp.sin(t + x1), sp.cos(th) / 10, 0],
            [sp.cos(th) / 10, sp.cos(t) * sp.sin(x1), sp.sin(th + x1) / 5],
            [0, sp.sin(th + x1) / 5, sp.cos(2 * th)],
        ]
    )
    etainv = sp.diag(-1, 1, 1)
    div = [
        sum(-etainv[m, n] * sp.diff(hs[n, a], co[m]) for m in range(3) for n in range(3))
        for a in range(3)
    ]
    tr = sum(etainv[a, b] * hs[a, b] for a in range(3) for b in range(3))
    beta = [div[a] + sp.diff(tr, co[a]) / 2 for a in range(3)]
    Vsym = [sum(etainv[a, b] * beta[b] for b in range(3)) for a in range(3)]
    return co, hs, Vsym


def _sample_sym2(grid, co, hs):
    X = grid.coords()
    h = np.zeros(grid.shape + (3, 3))
    for a in range(3):
        for b in range(3):
            h[..., a, b] = sp.lambdify(co, hs[a, b], "numpy")(*X) + 0.0 * X[0]
    return h


def test_linearized_gauge_symbolic_oracle_second_order():
    co, hs, Vsym = _symbolic_direction()
    fV = sp.lambdify(co, Vsym, "numpy")
    errs = []
    for N in (16, 32):
        grid = build_grid(2, None, N, N, T=0.5, c_max=1.2)
        X = grid.coords()
        h = _sample_sym2(grid, co, hs)
        Vn = gauge.linearized_gauge(geo.catalog("flat_corner"), grid, h).V
        Vo = np.stack([np.asarray(v) + 0.0 * X[0] for v in fV(*X)], axis=-1)
        errs.append(np.max(np.abs(Vn - Vo)))
    order = np.log2(errs[0] / errs[1])
    assert 1.8 <= order <= 2.2, (errs, order)


def test_linearized_gauge_is_linear(grid2):
    co, hs, _ = _symbolic_direction()
    bg = geo.catalog("hyperboloid_boundary")
    h1 = _sample_sym2(grid2, co, hs)
    rng = np.random.default_rng(11)
    h2 = rng.normal(size=grid2.shape + (3, 3))
    h2 = 0.5 * (h2 + np.swapaxes(h2, -1, -2))
    a, b = 1.3, -0.4
    lhs = gauge.linearized_gauge(bg, grid2, a * h1 + b * h2).V
    rhs = a * gauge.linearized_gauge(bg, grid2, h1).V + b * gauge.linearized_gauge(bg, grid2, h2).V
    assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_split_gauge_trivial(grid2):
    bg = geo.catalog("flat_corner")
    z = np.zeros(grid2.shape + (3, 3))
    VF, WH = gauge.split_gauge(bg, grid2, None, z)
    assert VF.max_abs == 0.0
    assert WH.max_abs == 0.0
    assert VF.provenance == "split_F"
    assert WH.provenance == "split_W"


def _plane_wave(grid):
    """Exact solution of the flat reduced wave equation box h = 0, with its V'_h."""
    t, x1, th = grid.coords()
    k = np.array([np.sqrt(2.0), 1.0, 1.0])
    phase = k[0] * t + k[1] * x1 + k[2] * th
    e = np.array([[0.3, 0.1, 0.0], [0.1, -0.2, 0.4], [0.0, 0.4, 0.25]])
    h = np.cos(phase)[..., None, None] * e
    eta = np.diag([-1.0, 1.0, 1.0])
    s = -np.sin(phase)
    dh = np.einsum("m,ab,...->...mab", k, e, s)
    beta = -np.einsum("mn,...mna->...a", eta, dh)
    beta += 0.5 * np.einsum("a,...->...a", k, s * np.einsum("ab,ab->", eta, e))
    V_exact = np.einsum("ab,...b->...a", eta, beta)
    return h, V_exact


def test_split_gauge_reproduces_linearized_gauge_under_refinement():
    # flat vacuum, h an exact reduced solution with F = 0: W'_h vanishes and
    # V'_F propagates the V'_h data, so the sum converges to V'_h at order 2
    bg = geo.catalog("flat_corner")
    errs = []
    for N in (16, 32):
        grid = build_grid(2, None, N, N, T=0.5, c_max=2.0)
        h, V_exact = _plane_wave(grid)
        VF, WH = gauge.split_gauge(bg, grid, None, h)
        assert WH.max_abs == 0.0
        errs.append(np.max(np.abs(VF.V + WH.V - V_exact)))
    order = np.log2(errs[0] / errs[1])
    assert 1.8 <= order <= 2.2, (errs, order)


def test_gauge_field_validation(grid2):
    with pytest.raises(ValueError, match="non-finite"):
        gauge.GaugeField(np.full((2, 3), np.nan), "background")
    with pytest.raises(ValueError, match="provenance"):
        gauge.GaugeField(np.zeros((2, 3)), "mystery")
