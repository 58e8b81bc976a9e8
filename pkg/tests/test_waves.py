"""Bulk and boundary wave solver tests: convergence, closures, refusals."""

import numpy as np
import pytest
import sympy as sp

from cornerlab import geometry as geo
from cornerlab import waves
from cornerlab.grid import build_grid, slice_norm


def _manufactured_flat():
    """Exact solution on the flat corner background with vanishing inner trace.

    v* = sin(t) cos(th) cos^2(pi x1 / 2) vanishes with its normal derivative
    at the inner edge x1 = -1, so the localization convention is exact.
    """
    t, x1, th = sp.symbols("t x1 th", real=True)
    v = sp.sin(t) * sp.cos(th) * sp.cos(sp.pi * x1 / 2) ** 2
    box = -sp.diff(v, t, 2) + sp.diff(v, x1, 2) + sp.diff(v, th, 2)
    phi = -box / 2
    lam = lambda e: sp.lambdify((t, x1, th), e, "numpy")
    return {
        "v": lam(v),
        "w": lam(sp.diff(v, t)),
        "phi": lam(phi),
        "dv1": lam(sp.diff(v, x1)),
    }


def _solve_flat(kind, N, c_max=1.2):
    bg = geo.catalog("flat_corner")
    grid = build_grid(2, None, N, N, T=0.5, c_max=c_max)
    ex = _manufactured_flat()
    t0, x1, th = grid.coords()
    v0 = ex["v"](0.0, x1[0], th[0])
    w0 = ex["w"](0.0, x1[0], th[0])
    thb = grid.axes[2]

    if kind == "dirichlet":
        data = lambda tt: ex["v"](tt, 0.0, thb)
        bc = waves.BoundaryConditionSpec("dirichlet", data)
    elif kind == "neumann":
        # flat outward normal is d/dx1, so the data is the normal derivative
        data = lambda tt: ex["dv1"](tt, 0.0, thb)
        bc = waves.BoundaryConditionSpec("neumann", data)
    else:
        a, b = 0.5, 1.0
        data = lambda tt: a * ex["w"](tt, 0.0, thb) + b * ex["dv1"](tt, 0.0, thb)
        bc = waves.BoundaryConditionSpec("sommerfeld", data, a=a, b=b)

    phi = lambda tt: ex["phi"](tt, x1[0], th[0])
    vh, wh = waves.solve_ibvp(bg, grid, phi, bc, v0, w0)
    exact = ex["v"](t0, x1, th)
    err = np.max(np.abs(vh - exact))
    return grid, vh, wh, bc, phi, err


@pytest.mark.parametrize(
    "kind,sizes",
    [
        ("dirichlet", (16, 32, 64)),
        ("sommerfeld", (16, 32, 64)),
        ("neumann", (32, 64)),
    ],
)
def test_bulk_convergence_second_order(kind, sizes):
    errs = [_solve_flat(kind, N)[-1] for N in sizes]
    orders = [np.log2(errs[i] / errs[i + 1]) for i in range(len(errs) - 1)]
    assert 1.8 <= orders[-1] <= 2.2, (kind, errs, orders)


def test_zero_data_gives_zero_solution():
    bg = geo.catalog("hyperboloid_boundary")
    grid = build_grid(2, None, 16, 16, T=0.5, c_max=3.5)
    z = np.zeros(grid.shape[1:])
    for kind in ("dirichlet", "sommerfeld", "neumann"):
        vh, wh = waves.solve_ibvp(bg, grid, None, waves.BoundaryConditionSpec(kind), z, z)
        assert np.max(np.abs(vh)) == 0.0
        assert np.max(np.abs(wh)) == 0.0


def test_solver_is_linear_and_deterministic():
    bg = geo.catalog("flat_corner")
    grid = build_grid(2, None, 16, 16, T=0.5, c_max=1.2)
    _, x1, th = grid.coords()
    rng = np.random.default_rng(3)
    bump = np.exp(-60.0 * (x1[0] + 0.5) ** 2) * np.cos(th[0])
    z = np.zeros(grid.shape[1:])
    bc = waves.BoundaryConditionSpec("sommerfeld")

    va, _ = waves.solve_ibvp(bg, grid, None, bc, bump, z)
    vb, _ = waves.solve_ibvp(bg, grid, None, bc, z, bump)
    vab, _ = waves.solve_ibvp(bg, grid, None, bc, bump, bump)
    assert np.max(np.abs(vab - va - vb)) < 1e-12

    again, _ = waves.solve_ibvp(bg, grid, None, bc, bump, z)
    assert np.array_equal(va, again)
    del rng


def test_finite_propagation_speed():
    # a bump at x1 = -0.6 cannot reach the boundary face within t = 0.25
    bg = geo.catalog("flat_corner")
    grid = build_grid(2, None, 64, 16, T=0.25, c_max=1.2)
    _, x1, th = grid.coords()
    bump = np.exp(-300.0 * (x1[0] + 0.6) ** 2)
    z = np.zeros(grid.shape[1:])
    vh, _ = waves.solve_ibvp(bg, grid, None, waves.BoundaryConditionSpec("dirichlet"), bump, z)
    assert np.max(np.abs(vh[0])) > 0.5
    assert np.max(np.abs(vh[:, -1])) < 1e-8


def test_component_axis_matches_scalar_solves():
    bg = geo.catalog("flat_corner")
    grid = build_grid(2, None, 16, 16, T=0.5, c_max=1.2)
    _, x1, th = grid.coords()
    f0 = np.exp(-40.0 * (x1[0] + 0.5) ** 2)
    f1 = np.sin(th[0]) * np.exp(-40.0 * (x1[0] + 0.4) ** 2)
    z = np.zeros(grid.shape[1:])
    bc = waves.BoundaryConditionSpec("dirichlet")

    v0 = np.stack([f0, f1], axis=-1)
    vh, _ = waves.solve_ibvp(bg, grid, None, bc, v0, np.zeros_like(v0))
    s0, _ = waves.solve_ibvp(bg, grid, None, bc, f0, z)
    s1, _ = waves.solve_ibvp(bg, grid, None, bc, f1, z)
    assert np.array_equal(vh[..., 0], s0)
    assert np.array_equal(vh[..., 1], s1)


def test_cfl_mismatch_raises():
    # grid stepped for slow characteristics rejects a faster background
    bg = geo.catalog("flat_corner")
    grid = build_grid(2, None, 16, 16, T=0.5, c_max=0.5)
    z = np.zeros(grid.shape[1:])
    with pytest.raises(waves.WaveError, match="CFL"):
        waves.solve_ibvp(bg, grid, None, waves.BoundaryConditionSpec("dirichlet"), z, z)


def test_boundary_wave_refuses_without_convexity():
    grid = build_grid(2, None, 16, 16, T=0.5, c_max=1.5)
    bgeo = geo.BoundaryGeometry.of(geo.catalog("rindler_slab"), grid)
    face = grid.shape[:1] + grid.shape[2:]
    with pytest.raises(waves.ConvexityRefusal, match="degenerate"):
        waves.solve_boundary_wave_f(bgeo, None, np.zeros(face[1:]), np.zeros(face[1:]))


def test_boundary_wave_trivial_solution():
    grid = build_grid(2, None, 16, 16, T=0.5, c_max=1.5)
    bgeo = geo.BoundaryGeometry.of(geo.catalog("hyperboloid_boundary"), grid)
    z = np.zeros(grid.shape[2:])
    fh = waves.solve_boundary_wave_f(bgeo, None, z, z)
    assert np.max(np.abs(fh)) == 0.0


def test_boundary_wave_convergence_product_background():
    # On the 3d product background the face metric is diag(-1, r0^2, r0^2)
    # with Pi-hat = diag(-1/2, r0^2/4 * id), so f* = sin(t) cos(th) solves
    # the equation with rhs = (1/2 - 1/16) f* (r0 = 2, constant frame).
    errs = []
    for N in (8, 16, 32):
        grid = build_grid(3, None, N, N, T=0.25, c_max=1.5)
        bgeo = geo.BoundaryGeometry.of(geo.catalog("product_convex_3d", r0=2.0), grid)
        th = grid.axes[2][:, None] + 0.0 * grid.axes[3][None, :]
        f0 = np.zeros(grid.shape[2:])
        ft0 = np.cos(th)
        rhs = lambda tt: (0.5 - 1.0 / 16.0) * np.sin(tt) * np.cos(th)
        fh = waves.solve_boundary_wave_f(bgeo, rhs, f0, ft0)
        exact = np.sin(grid.t)[:, None, None] * np.cos(th)[None]
        errs.append(np.max(np.abs(fh - exact)))
    orders = [np.log2(errs[i] / errs[i + 1]) for i in range(len(errs) - 1)]
    assert 1.8 <= orders[-1] <= 2.2, (errs, orders)


def test_energy_trace_ratios_and_csv(tmp_path):
    grid, vh, wh, bc, phi, _ = _solve_flat("dirichlet", 16)
    bg = geo.catalog("flat_corner")
    trace = waves.check_energy_estimate(bg, grid, vh, wh, phi, bc, s=1)
    assert np.isfinite(trace.max_ratio)
    assert trace.max_ratio > 0

    out = tmp_path / "trace.csv"
    trace.to_csv(out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "t,kind,s,lhs,rhs,ratio"
    assert len(lines) == grid.shape[0]

    # zero solution with zero data: the ratio column is all-NaN by convention
    z = np.zeros(grid.shape)
    zero_trace = waves.check_energy_estimate(
        bg, grid, z, z, None, waves.BoundaryConditionSpec("dirichlet")
    )
    assert np.all(np.isnan(zero_trace.ratios))


def test_energy_trace_bounded_under_refinement():
    # the Sommerfeld ratio stays of order one as the mesh refines
    maxima = []
    for N in (16, 32):
        grid, vh, wh, bc, phi, _ = _solve_flat("sommerfeld", N)
        trace = waves.check_energy_estimate(geo.catalog("flat_corner"), grid, vh, wh, phi, bc)
        maxima.append(trace.max_ratio)
    assert all(np.isfinite(m) for m in maxima)
    assert maxima[1] < 2.0 * maxima[0]


def test_norms_of_history_slices_are_finite():
    grid, vh, wh, *_ = _solve_flat("dirichlet", 16)
    for k in (0, grid.shape[0] // 2, grid.shape[0] - 1):
        val = slice_norm(grid, vh, k, 1, "H")
        assert np.isfinite(val)
