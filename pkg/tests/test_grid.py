import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phasefield.grid import (
    BC,
    FieldFormatError,
    ScalarField2D,
    grad_sq,
    gradient,
    gradient_matrices,
    hessian,
    hessian_matrices,
    laplacian,
    laplacian_matrix,
    make_grid,
    read_field,
    write_field,
)


def test_spacing_arithmetic():
    g = make_grid(9, 9, (-1, 1, -1, 1))
    assert g.hx == g.hy == 0.25
    g = make_grid(257, 257, (-1, 1, -1, 1), BC.DIRICHLET1)
    assert g.hx == 0.0078125
    assert g.bc is BC.DIRICHLET1


def test_periodic_spacing_drops_end_node():
    g = make_grid(16, 16, (0, 1, 0, 1), "periodic")
    assert g.hx == 1 / 16
    assert g.extent == (0.0, 1.0, 0.0, 1.0)


@pytest.mark.parametrize(
    "nx, ny, extent",
    [(8, 8, (0, 0, 0, 1)), (8, 8, (0, 1, 1, 1)), (7, 9, (0, 1, 0, 1)), (9, 3, (0, 1, 0, 1))],
)
def test_grid_preconditions(nx, ny, extent):
    with pytest.raises(ValueError):
        make_grid(nx, ny, extent)


def test_field_validation(unit_grid):
    with pytest.raises(ValueError):
        ScalarField2D(unit_grid, np.zeros(10))
    bad = np.zeros(unit_grid.shape)
    bad[3, 3] = np.nan
    with pytest.raises(ValueError):
        ScalarField2D(unit_grid, bad)
    u = ScalarField2D(unit_grid, np.zeros(unit_grid.nx * unit_grid.ny))
    assert u.values.shape == unit_grid.shape
    with pytest.raises(ValueError):
        u.values[0, 0] = 1.0


def test_trapezoid_weights(unit_grid):
    assert unit_grid.integrate(np.ones(unit_grid.shape)) == pytest.approx(4.0, abs=1e-14)
    X, Y = unit_grid.mesh()
    # trapezoid is exact for bilinear integrands
    assert unit_grid.integrate(X * Y + X) == pytest.approx(0.0, abs=1e-14)


def test_linear_gradient_exact(unit_grid):
    u = ScalarField2D.from_function(unit_grid, lambda X, Y: 3 * X + 2 * Y)
    g = gradient(u)
    assert np.allclose(g.x, 3.0, atol=1e-12) and np.allclose(g.y, 2.0, atol=1e-12)


def test_quadratic_hessian_exact(unit_grid):
    u = ScalarField2D.from_function(unit_grid, lambda X, Y: X * X + Y * Y + 0.5 * X * Y)
    H = hessian(u)
    inner = (slice(1, -1), slice(1, -1))
    assert np.allclose(H.xx[inner], 2.0, atol=1e-10)
    assert np.allclose(H.yy[inner], 2.0, atol=1e-10)
    assert np.allclose(H.xy[inner], 0.5, atol=1e-10)
    assert np.allclose(H.as_array(), np.swapaxes(H.as_array(), -1, -2))


def test_gradient_second_order():
    errs = []
    for n in (33, 65, 129):
        g = make_grid(n, n, (-1, 1, -1, 1))
        u = ScalarField2D.from_function(g, lambda X, Y: np.sin(np.pi * X) * np.sin(np.pi * Y))
        X, Y = g.mesh()
        ex = np.pi * np.cos(np.pi * X) * np.sin(np.pi * Y)
        gx = gradient(u).x
        errs.append(np.abs(gx - ex)[1:-1, 1:-1].max())
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    assert all(3.6 <= r <= 4.4 for r in ratios), ratios


def test_laplacian_is_hessian_trace(rng):
    for bc in ("neumann", "periodic", "dirichlet1"):
        g = make_grid(24, 20, (0, 1, 0, 2), bc)
        u = ScalarField2D(g, rng.standard_normal(g.shape))
        assert np.allclose(laplacian(u), hessian(u).trace(), atol=1e-9)


def test_periodic_laplacian_integrates_to_zero(rng):
    g = make_grid(32, 40, (0, 2, 0, 1), "periodic")
    u = ScalarField2D(g, rng.standard_normal(g.shape))
    assert abs(g.integrate(laplacian(u))) <= 1e-10 * np.abs(laplacian(u)).max()


def test_dirichlet_one_reflects_about_one():
    g = make_grid(17, 17, (-1, 1, -1, 1), "dirichlet1")
    u = ScalarField2D(g, np.ones(g.shape))
    assert np.allclose(laplacian(u), 0.0)
    assert np.allclose(gradient(u).norm(), 0.0)


def test_flat_profile_neumann_edges_exact():
    # a field depending on x only keeps zero y-derivatives on the top/bottom rows
    g = make_grid(33, 17, (-1, 1, -1, 1))
    u = ScalarField2D.from_function(g, lambda X, Y: np.tanh(3 * X))
    assert np.all(hessian(u).yy == 0.0)
    assert np.abs(gradient(u).y).max() <= 1e-12


@pytest.mark.parametrize("bc", ["neumann", "periodic"])
def test_sparse_operators_match_stencils(bc, rng):
    g = make_grid(12, 10, (0, 1.1, 0, 0.9), bc)
    v = rng.standard_normal(g.shape)
    u = ScalarField2D(g, v)
    flat = v.ravel()
    assert np.allclose(laplacian_matrix(g) @ flat, laplacian(u).ravel())
    Hxx, Hyy, Hxy = hessian_matrices(g)
    H = hessian(u)
    assert np.allclose(Hxx @ flat, H.xx.ravel())
    assert np.allclose(Hyy @ flat, H.yy.ravel())
    assert np.allclose(Hxy @ flat, H.xy.ravel())
    Gx, Gy = gradient_matrices(g)
    G = gradient(u)
    assert np.allclose(Gx @ flat, G.x.ravel()) and np.allclose(Gy @ flat, G.y.ravel())


def test_grad_sq_is_one_sided_mean(unit_grid):
    u = ScalarField2D.from_function(unit_grid, lambda X, Y: 3 * X - Y)
    assert np.allclose(grad_sq(u)[1:-1, 1:-1], 10.0)


def test_pf2d_round_trip(tmp_path, rng):
    g = make_grid(21, 13, (-0.5, 1.5, 2, 3), "periodic")
    u = ScalarField2D(g, rng.standard_normal(g.shape))
    p = tmp_path / "u.pf2d"
    write_field(u, p, comment="random")
    v = read_field(p)
    assert v.grid == g
    assert v.values.tobytes() == u.values.tobytes()


def test_pf2d_bad_magic(tmp_path, unit_grid):
    p = tmp_path / "u.pf2d"
    write_field(ScalarField2D(unit_grid, np.zeros(unit_grid.shape)), p)
    raw = p.read_bytes()
    p.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FieldFormatError, match="magic"):
        read_field(p)


def test_pf2d_length_mismatch(tmp_path, unit_grid):
    p = tmp_path / "u.pf2d"
    write_field(ScalarField2D(unit_grid, np.zeros(unit_grid.shape)), p)
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(FieldFormatError, match="payload"):
        read_field(p)


@settings(max_examples=25, deadline=None)
@given(
    a=st.floats(-5, 5), b=st.floats(-5, 5), c=st.floats(-5, 5),
    nx=st.integers(8, 30), ny=st.integers(8, 30),
)
def test_linear_fields_exact_any_grid(a, b, c, nx, ny):
    g = make_grid(nx, ny, (-1, 2, 0, 1))
    u = ScalarField2D.from_function(g, lambda X, Y: a * X + b * Y + c)
    G = gradient(u)
    assert np.allclose(G.x, a, atol=1e-9) and np.allclose(G.y, b, atol=1e-9)
    assert np.allclose(laplacian(u)[1:-1, 1:-1], 0.0, atol=1e-7)
