import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phasefield import pde
from phasefield.energy import evaluate_energies
from phasefield.experiments import bandlimited_field
from phasefield.grid import ScalarField2D, make_grid
from phasefield.pde import (
    NumericalAbort,
    allen_cahn_flow,
    allen_cahn_newton,
    ball_measure,
    blow_down,
    discrete_half_profile,
    e_energy_and_gradient,
    e_eps_descent,
    flat_profile_field,
    monotonicity_check,
    residual_norm,
    saddle_energy_growth,
    saddle_solution,
    stable_dt,
)
from phasefield.shapes import C0, Circle, recovery_field
from phasefield.varifold import extract_level_set

# scipy solve_ivp (rtol 1e-12) of u' = (u - u^3)/eps^2, u(0) = 0.3, eps = 0.1, at t = 0.01
ODE_ORACLE = 0.6497905376003729
# scipy solve_bvp (tol 1e-10) of eps^2 u'' = u^3 - u, u(-1) = -1, u(1) = 1, eps = 0.1
BVP_X = (0.05, 0.1, 0.2, 0.9)
BVP_ORACLE = (0.3395231891263353, 0.6088594293725196, 0.8883855831629858, 0.9999944165490792)


@pytest.fixture(scope="module")
def small_saddle():
    return saddle_solution(R=8.0, n=129, tol=1e-10)


# ---------------------------------------------------------------- flow


def test_flow_keeps_discrete_flat_profile():
    g = make_grid(129, 17, (-1, 1, -0.125, 0.125))
    u0 = flat_profile_field(g, 0.1)
    u, rep = allen_cahn_flow(u0, 0.1, steps=1000, record_every=100)
    assert np.abs(u.values - u0.values).max() <= 1e-8
    assert rep.iterations == 1000


def test_flow_constant_follows_scalar_ode():
    g = make_grid(33, 33, (-1, 1, -1, 1))
    u0 = ScalarField2D(g, np.full(g.shape, 0.3))
    errs = []
    for dt, n in ((1e-4, 100), (5e-5, 200)):
        u, _ = allen_cahn_flow(u0, 0.1, dt=dt, steps=n)
        assert np.ptp(u.values) == 0.0
        errs.append(abs(u.values[0, 0] - ODE_ORACLE))
    assert errs[0] <= 5e-3
    assert 1.8 <= errs[0] / errs[1] <= 2.2  # explicit Euler, first order
    u, _ = allen_cahn_flow(u0, 0.1, steps=2000)
    assert np.abs(u.values - 1.0).max() <= 1e-10


def test_flow_circle_shrinks():
    g = make_grid(161, 161, (-1, 1, -1, 1))
    u = recovery_field(Circle((0, 0), 0.3), 0.05, g)
    radii = []
    for _ in range(6):
        u, _ = allen_cahn_flow(u, 0.05, steps=200)
        pts = np.vstack([c.points for c in extract_level_set(u, 0.0).curves])
        radii.append(np.hypot(pts[:, 0], pts[:, 1]).mean())
    assert all(b < a for a, b in zip(radii, radii[1:])), radii


@settings(max_examples=8, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), bc=st.sampled_from(["neumann", "periodic", "dirichlet1"]))
def test_flow_energy_monotone_and_bounded(seed, bc):
    g = make_grid(33, 33, (-1, 1, -1, 1), bc)
    u0 = ScalarField2D(g, np.random.default_rng(seed).uniform(-1, 1, g.shape))
    u, rep = allen_cahn_flow(u0, 0.15, steps=150)
    e = [v for _, v in rep.energy_trace]
    assert max(np.diff(e)) <= 1e-12
    assert np.abs(u.values).max() <= 1.0


def test_flow_rejects_bad_input(unit_grid):
    u0 = ScalarField2D(unit_grid, np.zeros(unit_grid.shape))
    with pytest.raises(ValueError, match="stable"):
        allen_cahn_flow(u0, 0.1, dt=2 * stable_dt(unit_grid, 0.1))
    with pytest.raises(ValueError):
        allen_cahn_flow(ScalarField2D(unit_grid, np.full(unit_grid.shape, 1.5)), 0.1)
    bad = np.zeros(unit_grid.shape)
    bad[1, 1] = np.nan
    with pytest.raises(ValueError):
        allen_cahn_flow(ScalarField2D(unit_grid, bad), 0.1)


def test_flow_nan_aborts(unit_grid, monkeypatch):
    monkeypatch.setattr(pde.kernels, "ac_steps", lambda v, *a: np.full_like(v, np.nan))
    with pytest.raises(NumericalAbort, match="non-finite"):
        allen_cahn_flow(ScalarField2D(unit_grid, np.zeros(unit_grid.shape)), 0.1, steps=3)


def test_solve_report_csv(unit_grid):
    _, rep = allen_cahn_flow(ScalarField2D(unit_grid, np.zeros(unit_grid.shape)), 0.2, steps=4, record_every=2)
    rows = list(rep.csv_rows())
    assert [r[0] for r in rows] == [0, 2, 4]
    assert len(rows[0]) == len(rep.CSV_HEADER)


# ---------------------------------------------------------------- Newton


def test_newton_on_flat_profiles():
    g = make_grid(161, 17, (-1, 1, -0.1, 0.1))
    _, rep = allen_cahn_newton(flat_profile_field(g, 0.05), 0.05)
    assert rep.iterations == 0 and rep.converged
    u, rep = allen_cahn_newton(flat_profile_field(g, 0.05, discrete=False), 0.05)
    assert rep.iterations <= 2 and rep.final_residual <= 1e-8
    assert residual_norm(u, 0.05) <= 1e-8


def test_newton_clamped_ramp_matches_bvp():
    errs = []
    for n in (201, 401):
        g = make_grid(n, 9, (-1, 1, -0.05, 0.05))
        X, _ = g.mesh()
        fixed = np.zeros(g.shape, dtype=bool)
        fixed[:, [0, -1]] = True
        u, rep = allen_cahn_newton(ScalarField2D(g, np.clip(X / 0.3, -1, 1)), 0.1, fixed=fixed)
        assert rep.converged and rep.final_residual <= 1e-8
        assert rep.quadratic_constant is not None and np.isfinite(rep.quadratic_constant)
        idx = [int(np.argmin(np.abs(g.x - x))) for x in BVP_X]
        errs.append(np.abs(u.values[4, idx] - BVP_ORACLE).max())
    assert errs[1] <= 1e-4
    assert errs[0] / errs[1] >= 3.5


def test_newton_iteration_cap():
    g = make_grid(65, 9, (-1, 1, -0.1, 0.1))
    X, _ = g.mesh()
    u, rep = allen_cahn_newton(ScalarField2D(g, 0.9 * np.sin(3 * X)), 0.05, max_iter=1)
    assert rep.iterations == 1 and not rep.converged
    assert np.isfinite(u.values).all()


def test_newton_dirichlet_one():
    g = make_grid(33, 33, (-1, 1, -1, 1), "dirichlet1")
    u, rep = allen_cahn_newton(ScalarField2D(g, np.full(g.shape, 0.5)), 0.2)
    assert rep.converged
    assert np.all(u.values[g.boundary_mask()] == 1.0)
    assert np.allclose(u.values, 1.0, atol=1e-9)


# ---------------------------------------------------------------- 1D profiles


def test_discrete_half_profile():
    q = discrete_half_profile(0.25, 30.0)
    assert q[0] == 0.0 and abs(q[-1] - 1.0) <= 1e-12
    assert np.all(np.diff(q) >= 0) and np.all(np.diff(q[:40]) > 0)
    # spacing 0.25 is close to the continuum heteroclinic
    s = 0.25 * np.arange(q.size)
    assert np.abs(q - np.tanh(s / np.sqrt(2))).max() <= 5e-3


# ---------------------------------------------------------------- saddle


def test_saddle_symmetries(small_saddle):
    U = small_saddle.field.values
    c = small_saddle.n - 1
    assert U[c, c] == 0.0
    assert np.all(U[c, :] == 0.0) and np.all(U[:, c] == 0.0)
    assert np.array_equal(U[:, ::-1], -U) and np.array_equal(U[::-1, :], -U)
    assert np.abs(U).max() <= 1 + 1e-8
    assert small_saddle.converged and small_saddle.residual <= 1e-9


def test_saddle_sign_pattern(small_saddle):
    t = np.linspace(0.05, 8.0, 50)
    ev = small_saddle.evaluate
    assert np.all(ev(t, t) > 0) and np.all(ev(-t, -t) > 0)
    assert np.all(ev(-t, t) < 0) and np.all(ev(t, -t) < 0)


def test_saddle_energy_grows_linearly(small_saddle):
    ratios = [r for _, r in saddle_energy_growth(small_saddle)]
    assert max(ratios) <= 4 * C0
    assert min(ratios) > 0


def test_saddle_cache_round_trip(small_saddle):
    files = os.listdir(os.environ["PF_CACHE_DIR"])
    assert any(f.startswith("saddle_R8_n129") for f in files)
    again = saddle_solution(R=8.0, n=129, tol=1e-10)
    assert np.array_equal(again.field.values, small_saddle.field.values)
    fresh = saddle_solution(R=8.0, n=129, tol=1e-10, use_cache=False)
    assert np.array_equal(fresh.field.values, small_saddle.field.values)


def test_saddle_preconditions():
    with pytest.raises(ValueError):
        saddle_solution(R=4.0)
    with pytest.raises(ValueError):
        saddle_solution(R=8.0, n=65)


def test_blow_down_requires_box_or_continuation(small_saddle):
    with pytest.raises(ValueError, match=r"R >= "):
        blow_down(small_saddle, 0.1)
    b = blow_down(small_saddle, 0.1, continuation=True)
    assert b.continued
    assert blow_down(small_saddle, 0.2, stride=2).continued is False


def test_blow_down_energies(small_saddle):
    b1 = blow_down(small_saddle, 0.2)
    b2 = blow_down(small_saddle, 0.15)
    assert b1.w_energy <= 1e-12 and b2.w_energy <= 1e-12
    assert b2.b_energy > b1.b_energy
    # off-cross mass falls as eps shrinks
    assert ball_measure(b2.field, 0.15, (0.5, 0.5), 0.2) < ball_measure(b1.field, 0.2, (0.5, 0.5), 0.2)


def test_monotonicity_check(small_saddle):
    b = blow_down(small_saddle, 0.2)
    for center in ((0.0, 0.0), (0.3, 0.0)):
        rep = monotonicity_check(b.field, 0.2, center, [0.2, 0.4, 0.6, 0.8])
        assert np.isfinite(rep.constant) and rep.constant >= 0
        for i, s in enumerate(rep.radii):
            for j in range(i + 1, len(rep.radii)):
                assert rep.ratios[j] >= rep.ratios[i] - rep.constant * rep.radii[j] - 1e-12


# ---------------------------------------------------------------- E_eps descent


def test_descent_keeps_flat_profile():
    g = make_grid(65, 17, (-1, 1, -0.25, 0.25))
    u0 = flat_profile_field(g, 0.1)
    u, rep = e_eps_descent(u0, 0.1, steps=100)
    assert np.abs(u.values - u0.values).max() <= 1e-6


def test_descent_gradient_matches_finite_differences(rng):
    g = make_grid(33, 33, (-1, 1, -1, 1))
    v = bandlimited_field(g, rng)
    u = ScalarField2D(g, v)
    from phasefield.energy import normal_field

    valid = normal_field(u).valid_mask
    _, grad = e_energy_and_gradient(u, 0.2, valid=valid)
    h = 1e-6
    errs = []
    for j, i in [(5, 5), (16, 16), (0, 12), (32, 32), (10, 27), (3, 0)]:
        vp, vm = v.copy(), v.copy()
        vp[j, i] += h
        vm[j, i] -= h
        ep, _ = e_energy_and_gradient(ScalarField2D(g, vp), 0.2, valid=valid)
        em, _ = e_energy_and_gradient(ScalarField2D(g, vm), 0.2, valid=valid)
        errs.append(abs((ep - em) / (2 * h) - grad[j, i]) / abs(grad[j, i]))
    assert max(errs) <= 1e-4


def test_descent_energy_matches_evaluate_energies(rng):
    g = make_grid(33, 33, (-1, 1, -1, 1))
    u = ScalarField2D(g, bandlimited_field(g, rng))
    E, _ = e_energy_and_gradient(u, 0.2)
    rep = evaluate_energies(u, 0.2)
    assert E == pytest.approx(rep.p_energy + rep.b_energy, rel=1e-12)


def test_descent_monotone_on_perturbed_circle(rng):
    g = make_grid(49, 49, (-1, 1, -1, 1))
    u0 = recovery_field(Circle((0, 0), 0.5), 0.15, g)
    u0 = u0.with_values(np.clip(u0.values + 0.05 * rng.standard_normal(g.shape), -1, 1))
    _, rep = e_eps_descent(u0, 0.15, steps=500)
    e = [v for _, v in rep.energy_trace]
    assert rep.converged and len(e) == 501
    assert all(b <= a for a, b in zip(e, e[1:]))
    assert e[-1] < e[0]
