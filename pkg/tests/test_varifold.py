import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phasefield.energy import evaluate_energies
from phasefield.grid import ScalarField2D, make_grid
from phasefield.pde import (
    blow_down,
    blow_down_grid,
    flat_profile_field,
    saddle_solution,
)
from phasefield.shapes import C0, Circle, CuspDumbbell, optimal_profile, recovery_field
from phasefield.varifold import (
    Curve,
    DiffuseVarifold,
    PolylineVarifold,
    TangentProbeReport,
    Verdict,
    angle_bin,
    blow_up_probe,
    bump_matrix_test_function,
    bump_vector_field,
    circle_polyline,
    curvature_proxy,
    density_ratio,
    diffuse_varifold,
    elastica_energy,
    extract_level_set,
    first_variation_diffuse,
    hutchinson_residual,
    linear_vector_field,
    polyline_first_variation,
    read_polylines,
    segment_polyline,
    select_good_level,
    write_polylines,
    zero_test_function,
)


@pytest.fixture(scope="module")
def circle_field():
    eps = 0.04
    grid = make_grid(401, 401, (-1, 1, -1, 1))
    return recovery_field(Circle((0.0, 0.0), 0.5), eps, grid), eps


def _chord_ratio(R, rho):
    # arc of a radius-R circle inside B_rho(x) for x on the circle, over 2 rho
    return 4 * R * np.arcsin(rho / (2 * R)) / (2 * rho)


# ---------------------------------------------------------------- diffuse


def test_flat_profile_mass_in_vertical_bin():
    eps = 0.05
    grid = make_grid(257, 257, (-1, 1, -1, 1))
    u = flat_profile_field(grid, eps)
    V = diffuse_varifold(u, eps)
    vertical = int(angle_bin(np.pi / 2, 36))
    assert vertical == 18
    bins = V.bin_masses
    assert bins[vertical] == pytest.approx(V.total_mass - V.undirected_mass, rel=1e-12)
    assert abs(V.total_mass - 2.0) <= 0.02


def test_circle_bins_uniform(circle_field):
    u, eps = circle_field
    V = diffuse_varifold(u, eps)
    b = V.bin_masses
    assert (b.max() - b.min()) / b.mean() <= 0.05
    assert abs(V.total_mass - np.pi) / np.pi <= 0.02


def test_constant_field_has_no_mass():
    grid = make_grid(33, 33, (0, 1, 0, 1))
    V = diffuse_varifold(ScalarField2D(grid, np.full(grid.shape, 0.3)), 0.1)
    assert V.total_mass == 0.0
    assert isinstance(V, DiffuseVarifold)


def test_mass_consistency(circle_field):
    u, eps = circle_field
    rep = evaluate_energies(u, eps)
    assert diffuse_varifold(u, eps).total_mass == pytest.approx(rep.mu_tilde_mass / C0, rel=1e-13)


def test_too_few_bins_rejected(circle_field):
    u, eps = circle_field
    with pytest.raises(ValueError):
        diffuse_varifold(u, eps, n_bins=12)


def test_first_variation_constant_field(circle_field):
    u, eps = circle_field
    Y = linear_vector_field(np.zeros((2, 2)), (1.0, 0.0))
    # a constant Y has zero Jacobian; cut-off is irrelevant since grad u is small at the boundary
    with pytest.warns(RuntimeWarning, match="does not vanish"):
        lhs, _ = first_variation_diffuse(u, eps, Y)
    assert lhs == 0.0
    bump = bump_vector_field((0.0, 0.0), 0.9, (1.0, 0.0))
    lhs, rhs = first_variation_diffuse(u, eps, bump)
    # the circle is symmetric under x -> -x, so pushing it sideways is stationary
    assert abs(lhs) <= 1e-10 and abs(rhs) <= 1e-10


def test_first_variation_circle_matches_polyline(circle_field):
    u, eps = circle_field
    Y = bump_vector_field((0.5, 0.0), 0.25, (1.0, 0.0))
    lhs, rhs = first_variation_diffuse(u, eps, Y)
    oracle = polyline_first_variation(extract_level_set(u, 0.0), Y).delta_v
    assert oracle > 0
    assert abs(lhs - rhs) <= 0.02 * abs(rhs)
    assert abs(lhs - oracle) <= 0.05 * abs(oracle)
    assert abs(rhs - oracle) <= 0.05 * abs(oracle)


def test_first_variation_flat_profile_vanishes():
    eps = 0.05
    grid = make_grid(257, 257, (-1, 1, -1, 1))
    u = flat_profile_field(grid, eps)
    for c, d in [((0.0, 0.1), (1.0, 0.0)), ((0.05, -0.2), (0.6, 0.8))]:
        lhs, rhs = first_variation_diffuse(u, eps, bump_vector_field(c, 0.5, d))
        assert abs(lhs) <= 1e-6 and abs(rhs) <= 1e-6


def test_first_variation_boundary_warning():
    grid = make_grid(33, 33, (-1, 1, -1, 1))
    u = flat_profile_field(grid, 0.2)
    with pytest.warns(RuntimeWarning):
        first_variation_diffuse(u, 0.2, bump_vector_field((0.9, 0.0), 0.5))


# ---------------------------------------------------------------- polylines


def test_curve_validation():
    with pytest.raises(ValueError):
        Curve(np.array([[0.0, 0.0]]))
    with pytest.raises(ValueError):
        Curve(np.array([[0.0, 0.0], [1.0, 0.0]]), closed=True)
    with pytest.raises(ValueError):
        Curve(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [2.0, 1.0]]))
    with pytest.raises(ValueError):
        Curve(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]]), closed=True)
    with pytest.raises(ValueError):
        Curve(np.array([[0.0, 0.0], [1.0, 0.0]]), theta=0)
    with pytest.raises(ValueError):
        Curve(np.array([[0.0, 0.0], [1.0, 0.0]]), theta=1.5)


def test_circle_dilation_first_variation():
    pv = circle_polyline((0.0, 0.0), 1.0, 512)
    fv = polyline_first_variation(pv, linear_vector_field(np.eye(2)))
    # dilation grows length at unit rate: d/dt (2 pi (1 + t)) = 2 pi
    assert abs(fv.delta_v - 2 * np.pi) <= 1e-3
    assert abs(fv.curvature_term - 2 * np.pi) <= 1e-3
    assert fv.boundary_term == 0.0 and fv.atoms == []


def test_duality_order_on_circle():
    Y = bump_vector_field((0.6, 0.2), 0.5, (0.8, -0.6))
    gaps = []
    for n in (64, 128, 256):
        dv, hy = polyline_first_variation(circle_polyline((0.2, -0.1), 0.7, n), Y)
        gaps.append(abs(dv - hy))
    orders = np.log2(np.array(gaps[:-1]) / np.array(gaps[1:]))
    assert np.all(orders >= 1.0)


def test_segment_interior_is_stationary():
    pv = segment_polyline((-1.0, 0.0), (1.0, 0.0), 1001)
    fv = polyline_first_variation(pv, bump_vector_field((0.1, 0.0), 0.5, (0.3, 0.7)))
    assert abs(fv.delta_v) <= 1e-10
    assert abs(fv.curvature_term) <= 1e-10
    assert abs(fv.boundary_term) <= 1e-10


def test_segment_endpoint_atoms():
    pv = segment_polyline((-1.0, 0.0), (1.0, 0.0), 11, theta=3)
    fv = polyline_first_variation(pv, linear_vector_field(np.eye(2)))
    pts = {tuple(np.round(p, 12)): v for p, v in fv.atoms}
    assert np.allclose(pts[(-1.0, 0.0)], [-3.0, 0.0]) and np.allclose(pts[(1.0, 0.0)], [3.0, 0.0])
    assert fv.delta_v == pytest.approx(6.0, abs=1e-12)
    assert fv.delta_v == pytest.approx(fv.curvature_term + fv.boundary_term, abs=1e-12)


def test_cusp_atoms():
    cusp = CuspDumbbell(L=0.5)
    left, right = cusp.lobe_curves(2048)
    pv = PolylineVarifold([Curve(left), Curve(right)])
    Y = linear_vector_field([[1.0, 0.5], [-0.2, 0.7]], (0.3, -0.1))
    fv = polyline_first_variation(pv, Y)
    assert len(fv.atoms) == 2
    atoms = sorted(fv.atoms, key=lambda a: a[0][0])
    (p0, v0), (p1, v1) = atoms
    assert np.allclose(p0, [-0.25, 0.0]) and np.allclose(p1, [0.25, 0.0])
    assert np.allclose(v0, [2.0, 0.0], atol=1e-3) and np.allclose(v1, [-2.0, 0.0], atol=1e-3)
    # away from the atoms first variation is the curvature integral
    assert abs(fv.delta_v - fv.boundary_term - fv.curvature_term) <= 1e-3 * abs(fv.delta_v)


def test_multiplicity_scaling():
    pv = circle_polyline((0.1, 0.0), 0.6, 128)
    Y = bump_vector_field((0.5, 0.3), 0.4, (1.0, -0.5))
    pv2 = pv.scaled(2)
    assert pv2.total_mass == 2 * pv.total_mass
    assert polyline_first_variation(pv2, Y).delta_v == 2 * polyline_first_variation(pv, Y).delta_v
    assert elastica_energy(pv2) == 2 * elastica_energy(pv)


# ---------------------------------------------------------------- Hutchinson


def test_hutchinson_zero_test_function():
    assert hutchinson_residual(circle_polyline((0, 0), 1.0, 64), zero_test_function) == 0.0


def test_hutchinson_circle_refinement():
    phi = bump_matrix_test_function((0.8, 0.5), 0.6, 0, 0)
    r = [hutchinson_residual(circle_polyline((0, 0), 1.0, n), phi) for n in (256, 512)]
    assert r[1] < r[0]
    assert np.log2(r[0] / r[1]) >= 1.0


def test_hutchinson_straight_line():
    pv = segment_polyline((-1.0, 0.2), (1.0, -0.1), 97)
    for j, k in [(0, 0), (0, 1), (1, 1)]:
        assert hutchinson_residual(pv, bump_matrix_test_function((0.0, 0.0), 0.7, j, k)) <= 1e-8


# ---------------------------------------------------------------- density


def test_density_line_and_cross():
    line = segment_polyline((-1.0, 0.0), (1.0, 0.0), 3)
    for rho in (0.5, 0.1, 0.01):
        assert density_ratio(line, (0.0, 0.0), rho) == pytest.approx(1.0, abs=1e-12)
    cross = PolylineVarifold(
        [Curve([[-1.0, 0.0], [0.0, 0.0], [1.0, 0.0]]), Curve([[0.0, -1.0], [0.0, 0.0], [0.0, 1.0]])]
    )
    assert density_ratio(cross, (0.0, 0.0), 0.3) == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(ValueError):
        density_ratio(line, (0.0, 0.0), 0.0)


def test_density_circle_point():
    R = 0.5
    pv = circle_polyline((0.0, 0.0), R, 4096)
    for rho in (0.1, 0.05, 0.025):
        d = density_ratio(pv, (R, 0.0), rho)
        assert abs(d - _chord_ratio(R, rho)) <= 1e-4
        assert abs(d - 1.0) <= 0.02


def test_density_diffuse(circle_field):
    u, eps = circle_field
    V = diffuse_varifold(u, eps)
    d = density_ratio(V, (0.5, 0.0), 0.2)
    assert abs(d - _chord_ratio(0.5, 0.2)) <= 0.02
    with pytest.raises(ValueError, match="clipped"):
        density_ratio(V, (0.9, 0.0), 0.2)


# ---------------------------------------------------------------- tangent probe


def test_probe_circle_unique(circle_field):
    u, eps = circle_field
    V = diffuse_varifold(u, eps)
    rep = blow_up_probe(V, (0.0, 0.5), [0.4, 0.2, 0.1])
    assert rep.verdict is Verdict.UNIQUE
    assert abs(rep.directions[0] - 0.0) <= np.pi / 36 or abs(rep.directions[0] - np.pi) <= np.pi / 36


def test_probe_cross_non_unique():
    cross = PolylineVarifold(
        [Curve([[-1.0, 0.0], [0.0, 0.0], [1.0, 0.0]]), Curve([[0.0, -1.0], [0.0, 0.0], [0.0, 1.0]])]
    )
    rep = blow_up_probe(cross, (0.0, 0.0), [0.5, 0.25, 0.125])
    assert rep.verdict is Verdict.NON_UNIQUE
    d = sorted(rep.directions)
    assert len(d) == 2 and d[0] == pytest.approx(0.0, abs=1e-12) and d[1] == pytest.approx(np.pi / 2)


def test_probe_line_unique_and_mass():
    ang = 0.3
    a, b = np.array([-np.cos(ang), -np.sin(ang)]), np.array([np.cos(ang), np.sin(ang)])
    rep = blow_up_probe(segment_polyline(a, b, 41), (0.0, 0.0), [0.5, 0.2, 0.05])
    assert rep.verdict is Verdict.UNIQUE
    assert abs(rep.directions[0] - ang) <= np.pi / 36
    assert abs(rep.rescaled_mass[-1] - 2.0) <= 0.04
    rows = list(rep.csv_rows())
    assert len(rows) == 3 and len(rows[0]) == len(TangentProbeReport.CSV_HEADER)


def test_probe_small_mass_inconclusive():
    far = segment_polyline((-1.0, 0.9), (1.0, 0.9), 5)
    rep = blow_up_probe(far, (0.0, 0.0), [0.5, 0.25])
    assert rep.verdict is Verdict.INCONCLUSIVE and rep.directions == []
    with pytest.raises(ValueError):
        blow_up_probe(far, (0.0, 0.0), [0.25, 0.5])


# ---------------------------------------------------------------- level sets


def test_circle_zero_level(circle_field):
    u, _ = circle_field
    pv = extract_level_set(u, 0.0)
    assert len(pv.curves) == 1 and pv.curves[0].closed
    r = np.hypot(*pv.curves[0].points.T)
    assert np.abs(r - 0.5).max() <= u.grid.hx


@settings(max_examples=20, deadline=None)
@given(s=st.floats(-0.95, 0.95))
def test_monotone_field_level_is_vertical_segment(s):
    grid = make_grid(41, 41, (-1, 1, -1, 1))
    X, _ = grid.mesh()
    pv = extract_level_set(ScalarField2D(grid, X), s)
    assert len(pv.curves) == 1
    c = pv.curves[0]
    assert not c.closed
    assert np.allclose(c.points[:, 0], s, atol=1e-12)
    assert c.length() == pytest.approx(2.0, abs=1e-12)


def test_empty_level():
    grid = make_grid(17, 17, (0, 1, 0, 1))
    u = ScalarField2D(grid, np.full(grid.shape, -1.0))
    assert extract_level_set(u, 0.0).empty
    gl = select_good_level(u, 0.1, 0.5)
    assert gl.empty and gl.proxy == 0.0 and gl.varifold.empty
    with pytest.raises(ValueError):
        select_good_level(u, 0.1, 1.0)


def test_two_interface_parity():
    # u goes -1 -> 1 -> -1 across x; the phase {u > 0} is a band with two boundary lines
    eps = 0.05
    grid = make_grid(201, 201, (-1, 1, -1, 1))
    X, _ = grid.mesh()
    q1, _ = optimal_profile((X + 0.4) / eps)
    q2, _ = optimal_profile((0.4 - X) / eps)
    u = ScalarField2D(grid, np.minimum(q1, q2))
    pv = extract_level_set(u, 0.0)
    assert len(pv.curves) == 2
    for c in pv.curves:
        assert c.theta % 2 == 1
        assert np.abs(np.abs(c.points[:, 0]) - 0.4).max() <= 1e-6
    # the two interfaces are distinct, so the diffuse mass is twice the extent
    assert abs(diffuse_varifold(u, eps).total_mass - 4.0) <= 0.04


def test_good_level_on_saddle():
    sol = saddle_solution(R=8.0, n=129, tol=1e-10)
    eps, delta = 0.1, 0.5
    grid = blow_down_grid(sol, eps, 0.7, stride=2)
    u = blow_down(sol, eps, grid=grid, stride=2).field
    gl = select_good_level(u, eps, delta)
    assert not gl.empty and -1 + delta <= gl.level <= 1 - delta
    assert gl.proxy == pytest.approx(np.nanmin(gl.proxies))
    # every level in I_delta is a pair of hyperbola-like branches turning by pi/2 each
    assert np.all(np.abs(gl.proxies - np.pi) <= 0.2)
    pts = np.vstack([c.points for c in gl.varifold.curves])
    far = np.max(np.abs(pts), axis=1) >= 0.5
    assert np.min(np.abs(pts[far]), axis=1).max() <= 2 * grid.hx


def test_curvature_proxy_circle():
    assert curvature_proxy(circle_polyline((0, 0), 0.37, 256)) == pytest.approx(2 * np.pi, rel=1e-4)
    assert curvature_proxy(segment_polyline((0, 0), (1, 2), 9)) == 0.0


# ---------------------------------------------------------------- elastica


def test_elastica_values():
    assert abs(elastica_energy(circle_polyline((0, 0), 1.0, 1024)) - 4 * np.pi) <= 1e-3
    assert abs(elastica_energy(segment_polyline((-1, 0), (1, 0), 16)) - 2.0) <= 1e-12
    assert abs(elastica_energy(circle_polyline((0.3, 0.1), 0.5, 1024)) - 5 * np.pi) <= 1e-3
    with pytest.raises(ValueError):
        elastica_energy(circle_polyline((0, 0), 1.0, 6))


# ---------------------------------------------------------------- I/O


def test_polyline_round_trip(tmp_path):
    pv = PolylineVarifold(
        [
            circle_polyline((0.1, -0.2), 0.3, 17, theta=2).curves[0],
            segment_polyline((0, 0), (1.0 / 3, 2.0 / 7), 5).curves[0],
        ]
    )
    path = tmp_path / "curves.txt"
    write_polylines(pv, path)
    assert path.read_text().splitlines()[0] == "CURVE closed=1 theta=2 n=17"
    back = read_polylines(path)
    assert len(back.curves) == 2
    for a, b in zip(pv.curves, back.curves):
        assert a.closed == b.closed and a.theta == b.theta
        assert np.array_equal(a.points, b.points)
    write_polylines(PolylineVarifold([]), path)
    assert read_polylines(path).empty


def test_polyline_read_errors(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("0 0\n1 1\n")
    with pytest.raises(ValueError, match="CURVE"):
        read_polylines(path)
    path.write_text("CURVE closed=0 theta=1 n=3\n0 0\n1 1\n")
    with pytest.raises(ValueError, match="ends early"):
        read_polylines(path)
