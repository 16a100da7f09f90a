"""Allen-Cahn flows, Newton solves, the saddle solution and E_eps descent."""

from __future__ import annotations

import logging
import math
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla
from scipy.linalg import solve_banded

from . import kernels
from .energy import DEFAULT_TAU, W, d2W, dW, evaluate_energies, normal_field
from .grid import (
    BC,
    Grid2D,
    ScalarField2D,
    grad_sq,
    gradient_matrices,
    hessian_matrices,
    laplacian,
    laplacian_matrix,
    make_grid,
    read_field,
    read_field_header,
    write_field,
)
from .shapes import optimal_profile

log = logging.getLogger(__name__)

DT_SAFETY = 0.9
DIRECT_SOLVE_LIMIT = 250_000


class NumericalAbort(RuntimeError):
    """A solver produced non-finite values."""


@dataclass
class SolveReport:
    iterations: int
    final_residual: float
    converged: bool
    energy_trace: list[tuple[int, float]] = field(default_factory=list)
    residual_trace: list[float] = field(default_factory=list)
    note: str = ""
    quadratic_constant: float | None = None

    CSV_HEADER = ("step", "energy", "residual")

    def csv_rows(self):
        for (step, e), r in zip(self.energy_trace, self.residual_trace):
            yield (step, e, r)


def _check_field(u0: ScalarField2D):
    if not isinstance(u0, ScalarField2D):
        raise TypeError("expected a ScalarField2D")
    # ScalarField2D already refuses non-finite samples; this guards raw arrays reaching here
    if not np.all(np.isfinite(u0.values)):
        raise ValueError("initial field contains non-finite values")


def residual_field(u: ScalarField2D, eps: float) -> np.ndarray:
    """Pointwise eps*Lap(u) - W'(u)/eps."""
    return eps * laplacian(u) - dW(u.values) / eps


def residual_norm(u: ScalarField2D, eps: float, mask: np.ndarray | None = None) -> float:
    r = residual_field(u, eps)
    if mask is not None:
        r = np.where(mask, r, 0.0)
    return math.sqrt(u.grid.integrate(r * r))


def p_energy(u: ScalarField2D, eps: float) -> float:
    return u.grid.integrate(0.5 * eps * grad_sq(u) + W(u.values) / eps)


def stable_dt(grid: Grid2D, eps: float) -> float:
    """Largest dt for which the explicit step is monotone on [-1, 1].

    Monotonicity gives the maximum principle, and the same bound keeps the
    step below the inverse Lipschitz constant of the energy gradient, so the
    discrete P_eps cannot increase.
    """
    return 1.0 / (2.0 / grid.hx ** 2 + 2.0 / grid.hy ** 2 + 2.0 / eps ** 2)


def _pin_dirichlet(u: ScalarField2D) -> np.ndarray:
    v = np.array(u.values)
    if u.grid.bc is BC.DIRICHLET1:
        v[u.grid.boundary_mask()] = 1.0
    return v


def allen_cahn_flow(
    u0: ScalarField2D,
    eps: float,
    dt: float | None = None,
    steps: int = 1000,
    record_every: int = 1,
    tol: float | None = None,
) -> tuple[ScalarField2D, SolveReport]:
    """Explicit Euler for u_t = Lap(u) - W'(u)/eps^2.

    This is the L^2 gradient flow of P_eps run in the time variable t/eps,
    which keeps the stable step independent of eps at fixed resolution.
    """
    _check_field(u0)
    if eps <= 0:
        raise ValueError("eps must be positive")
    grid = u0.grid
    dt_max = stable_dt(grid, eps)
    if dt is None:
        dt = DT_SAFETY * dt_max
    if not (0 < dt <= dt_max * (1 + 1e-12)):
        raise ValueError(f"dt={dt} outside the stable range (0, {dt_max:.6g}]")
    if np.max(np.abs(u0.values)) > 1.0 + 1e-12:
        raise ValueError("initial field must satisfy |u0| <= 1")
    record_every = max(1, int(record_every))

    pinned = grid.bc is BC.DIRICHLET1
    v = _pin_dirichlet(u0)
    u = ScalarField2D(grid, v)
    energy = [(0, p_energy(u, eps))]
    resid = [residual_norm(u, eps, ~grid.boundary_mask() if pinned else None)]
    done = 0
    converged = tol is not None and resid[-1] <= tol
    while done < steps and not converged:
        n = min(record_every, steps - done)
        v = kernels.ac_steps(v, grid.hx, grid.hy, grid.periodic, pinned, eps, dt, n)
        done += n
        if not np.all(np.isfinite(v)):
            raise NumericalAbort(f"allen_cahn_flow: non-finite values after {done} steps")
        u = ScalarField2D(grid, v)
        energy.append((done, p_energy(u, eps)))
        resid.append(residual_norm(u, eps, ~grid.boundary_mask() if pinned else None))
        if tol is not None and resid[-1] <= tol:
            converged = True
    if tol is None:
        converged = True
    rep = SolveReport(
        iterations=done,
        final_residual=resid[-1],
        converged=converged,
        energy_trace=energy,
        residual_trace=resid,
        note=f"flow u_t = Lap u - W'(u)/eps^2, dt={dt:.6g} (dt_max={dt_max:.6g}); physical time = eps * t",
    )
    return u, rep


# --------------------------------------------------------------------------
# Newton
# --------------------------------------------------------------------------


def _solve_linear(J: sp.spmatrix, rhs: np.ndarray) -> np.ndarray:
    n = J.shape[0]
    if n <= DIRECT_SOLVE_LIMIT:
        return sla.spsolve(sp.csc_matrix(J), rhs)
    import pyamg

    A = sp.csr_matrix(-J)
    ml = pyamg.smoothed_aggregation_solver(A, symmetry="hermitian" if _is_symmetric(A) else "nonsymmetric")
    M = ml.aspreconditioner()
    tol = 1e-12
    if _is_symmetric(A):
        x, info = sla.cg(A, -rhs, M=M, rtol=tol, maxiter=400)
        if info == 0:
            return x
    x, info = sla.gmres(A, -rhs, M=M, rtol=tol, restart=50, maxiter=40)
    if info != 0:
        log.warning("iterative linear solve did not reach tolerance (info=%s)", info)
    return x


def _is_symmetric(A: sp.spmatrix) -> bool:
    d = A - A.T
    return d.nnz == 0 or abs(d).max() <= 1e-12 * abs(A).max()


def allen_cahn_newton(
    u0: ScalarField2D,
    eps: float,
    tol: float = 1e-8,
    max_iter: int = 50,
    fixed: np.ndarray | None = None,
) -> tuple[ScalarField2D, SolveReport]:
    """Damped Newton for Lap(u) = W'(u)/eps^2 on the free nodes.

    ``fixed`` marks nodes held at their initial values (Dirichlet data);
    DirichletOne grids also pin the boundary ring to 1. The reported residual
    is the L^2 norm of eps*Lap(u) - W'(u)/eps over the free nodes.
    """
    _check_field(u0)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if eps <= 0:
        raise ValueError("eps must be positive")
    grid = u0.grid
    v = _pin_dirichlet(u0).ravel()
    fixed_mask = np.zeros(grid.shape, dtype=bool) if fixed is None else np.asarray(fixed, dtype=bool).copy()
    if grid.bc is BC.DIRICHLET1:
        fixed_mask |= grid.boundary_mask()
    free = ~fixed_mask.ravel()
    wts = grid.weights().ravel()[free] * grid.cell_area

    L = laplacian_matrix(grid)
    Lff = L[free][:, free]
    inv_e2 = 1.0 / (eps * eps)

    def F(vals):
        return (L @ vals)[free] - dW(vals[free]) * inv_e2

    def norm(f):
        # eps * F is the reported residual
        return eps * math.sqrt(float(np.sum(wts * f * f)))

    f = F(v)
    r = norm(f)
    history = [r]
    it = 0
    while r > tol and it < max_iter:
        J = Lff - sp.diags(d2W(v[free]) * inv_e2)
        step = _solve_linear(J, -f)
        t = 1.0
        accepted = False
        for _ in range(30):
            trial = v.copy()
            trial[free] += t * step
            ft = F(trial)
            rt = norm(ft)
            if rt * rt <= (1.0 - 1e-4 * t) * r * r:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            log.warning("Newton line search stalled at residual %.3e", r)
            break
        v, f, r = trial, ft, rt
        if not np.all(np.isfinite(v)):
            raise NumericalAbort("allen_cahn_newton: non-finite iterate")
        it += 1
        history.append(r)
        log.debug("newton %d residual %.3e step %.3g", it, r, t)

    qc = None
    if len(history) >= 3:
        tail = history[-3:]
        ratios = [tail[k + 1] / tail[k] ** 2 for k in range(2) if tail[k] > 0]
        qc = max(ratios) if ratios else None
    u = ScalarField2D(grid, v.reshape(grid.shape))
    rep = SolveReport(
        iterations=it,
        final_residual=r,
        converged=r <= tol,
        energy_trace=[(k, float("nan")) for k in range(len(history))],
        residual_trace=history,
        note="damped Newton, line search on |F|^2",
        quadratic_constant=qc,
    )
    rep.energy_trace[-1] = (len(history) - 1, p_energy(u, eps))
    return u, rep


# --------------------------------------------------------------------------
# discrete 1D profiles
# --------------------------------------------------------------------------


def _newton_1d(q, h, eps, left, right, tol=1e-14, max_iter=60):
    """Solve eps^2 q'' = W'(q) on a uniform 1D grid.

    ``left``/``right`` are either ``"neumann"`` (reflected ghost) or a value
    for a Dirichlet end.
    """
    q = np.array(q, dtype=float)
    n = q.size
    c = eps * eps / (h * h)
    free = np.ones(n, dtype=bool)
    if left != "neumann":
        q[0] = left
        free[0] = False
    if right != "neumann":
        q[-1] = right
        free[-1] = False

    def residual(q):
        lap = np.empty(n)
        lap[1:-1] = q[2:] - 2 * q[1:-1] + q[:-2]
        lap[0] = 2 * (q[1] - q[0])
        lap[-1] = 2 * (q[-2] - q[-1])
        return c * lap - dW(q)

    for _ in range(max_iter):
        F = residual(q)
        F[~free] = 0.0
        if np.max(np.abs(F)) < tol:
            break
        ab = np.zeros((3, n))
        ab[1] = -2 * c - d2W(q)
        ab[0, 1:] = c
        ab[2, :-1] = c
        ab[0, 1] = 2 * c  # row 0 couples to q1 twice
        ab[2, n - 2] = 2 * c  # row n-1 couples to q[n-2] twice
        for k in np.flatnonzero(~free):
            ab[1, k] = 1.0
            if k + 1 < n:
                ab[0, k + 1] = 0.0
            if k - 1 >= 0:
                ab[2, k - 1] = 0.0
        dq = solve_banded((1, 1), ab, -F)
        dq[~free] = 0.0  # pivoting can leave round-off on the pinned rows
        q += dq
    return q


def discrete_half_profile(h: float, length: float) -> np.ndarray:
    """Discrete heteroclinic on [0, length] with q(0) = 0, spacing h, eps = 1.

    The far end is held at tanh(length/sqrt 2), which is 1 to round-off for
    the lengths used here.
    """
    n = int(round(length / h)) + 1
    s = h * np.arange(n)
    q0, _ = optimal_profile(s)
    return _newton_1d(q0, h, 1.0, 0.0, float(q0[-1]), tol=1e-15)


def flat_profile_field(grid: Grid2D, eps: float, discrete: bool = True, shift: float = 0.0) -> ScalarField2D:
    """u(x, y) = q((x - shift)/eps).

    With ``discrete=True`` the 1D profile solves the grid equation exactly, so
    the field is a critical point of the discrete P_eps and B_eps.
    """
    x = grid.x
    q, _ = optimal_profile((x - shift) / eps)
    if discrete:
        q = _newton_1d(q, grid.hx, eps, "neumann", "neumann")
    return ScalarField2D(grid, np.broadcast_to(q, grid.shape))


# --------------------------------------------------------------------------
# saddle solution
# --------------------------------------------------------------------------


@dataclass
class SaddleSolution:
    field: ScalarField2D
    R: float
    residual: float
    n: int = 0
    tol: float = 0.0
    converged: bool = True
    profile: np.ndarray | None = field(default=None, repr=False)

    @property
    def H(self) -> float:
        return self.R / (self.n - 1)

    def profile_value(self, s: np.ndarray) -> np.ndarray:
        """Signed discrete heteroclinic at |s|, 1 beyond its sampled range."""
        a = np.abs(s) / self.H
        q = self.profile
        k = np.minimum(np.floor(a).astype(np.int64), q.size - 1)
        t = a - k
        kp = np.minimum(k + 1, q.size - 1)
        val = (1.0 - t) * q[k] + t * q[kp]
        val = np.where(a >= q.size - 1, q[-1], val)
        return np.sign(s) * val

    def evaluate(self, X: np.ndarray, Y: np.ndarray, continuation: bool = False) -> np.ndarray:
        """U at arbitrary points: exact on nodes, bilinear between them.

        Outside [-R, R]^2 ``continuation`` extends U by the product of
        discrete profiles, which is also the far-edge boundary data.
        """
        from scipy.ndimage import map_coordinates

        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        n_full = 2 * self.n - 1
        fx = X / self.H + (self.n - 1)
        fy = Y / self.H + (self.n - 1)
        # snap to nodes so aligned grids sample the stored values exactly
        rx, ry = np.round(fx), np.round(fy)
        fx = np.where(np.abs(fx - rx) < 1e-9, rx, fx)
        fy = np.where(np.abs(fy - ry) < 1e-9, ry, fy)
        inside = (fx >= 0) & (fx <= n_full - 1) & (fy >= 0) & (fy <= n_full - 1)
        if not continuation and not inside.all():
            raise ValueError("points outside the saddle box")
        out = np.empty(X.shape)
        U = self.field.values
        on_node = inside & (fx == np.round(fx)) & (fy == np.round(fy))
        out[on_node] = U[fy[on_node].astype(np.int64), fx[on_node].astype(np.int64)]
        off = inside & ~on_node
        if off.any():
            out[off] = map_coordinates(U, np.vstack([fy[off], fx[off]]), order=1, mode="nearest")
        outside = ~inside
        if outside.any():
            out[outside] = self.profile_value(X[outside]) * self.profile_value(Y[outside])
        return out


def _cache_dir() -> Path | None:
    d = os.environ.get("PF_CACHE_DIR")
    return Path(d) if d else None


def _cache_key(R: float, n: int, tol: float) -> str:
    return f"saddle-v1 R={R!r} n={n} tol={tol!r}"


def _cache_path(cache: Path, R: float, n: int, tol: float) -> Path:
    return cache / f"saddle_R{R:g}_n{n}_tol{tol:g}.pf2d"


def _assemble_saddle(quad: np.ndarray, R: float, n: int, tol: float, residual_hint, profile, converged):
    """Odd reflections of the quadrant-I solution onto [-R, R]^2."""
    m = 2 * n - 1
    full = np.zeros((m, m))
    c = n - 1
    full[c:, c:] = quad
    full[c:, : c + 1] = -quad[:, ::-1]
    full[: c + 1, c:] = -quad[::-1, :]
    full[: c + 1, : c + 1] = quad[::-1, ::-1]
    # axes are exactly zero in the quadrant data, so the overlaps agree
    H = R / (n - 1)
    grid = Grid2D(m, m, H, H, (-R, -R), BC.NEUMANN)
    U = ScalarField2D(grid, full)
    lap = laplacian(U)
    res = lap - dW(full)
    res[grid.boundary_mask()] = 0.0
    resid = math.sqrt(grid.integrate(res * res))
    return SaddleSolution(U, float(R), resid, n, tol, converged, profile)


def saddle_solution(R: float = 24.0, n: int = 769, tol: float = 1e-8, use_cache: bool = True) -> SaddleSolution:
    """Saddle solution of Lap U = W'(U) on [-R, R]^2 (profile units, eps = 1).

    Quadrant I is solved with U = 0 on the axes and U = q_h(x) q_h(y) on the
    far edges, q_h being the discrete heteroclinic with the same spacing. The
    rest of the box follows by odd reflection, so the sign pattern and the
    zero set on the axes hold exactly.
    """
    if R < 8:
        raise ValueError("R must be at least 8 profile units")
    if n < 129:
        raise ValueError("n must be at least 129")
    H = R / (n - 1)
    # long enough for blow-downs that continue past the box
    profile = discrete_half_profile(H, max(2.0 * R, R + 48.0))

    cache = _cache_dir() if use_cache else None
    if cache is not None:
        path = _cache_path(cache, R, n, tol)
        if path.exists():
            keys, comment, _ = read_field_header(path)
            if comment and comment.startswith("key=" + _cache_key(R, n, tol)):
                quad = read_field(path).values
                conv = "converged=1" in comment
                return _assemble_saddle(quad, R, n, tol, None, profile, conv)

    grid = make_grid(n, n, (0.0, R, 0.0, R), BC.NEUMANN)
    q = profile[:n]
    init = np.outer(q, q)
    fixed = grid.boundary_mask()
    sol, rep = allen_cahn_newton(ScalarField2D(grid, init), 1.0, tol=tol, max_iter=30, fixed=fixed)
    if not rep.converged:
        warnings.warn(f"saddle Newton stopped at residual {rep.final_residual:.3e}", RuntimeWarning)
    quad = np.array(sol.values)

    if cache is not None:
        cache.mkdir(parents=True, exist_ok=True)
        path = _cache_path(cache, R, n, tol)
        tmp = path.with_suffix(f".tmp{os.getpid()}")
        comment = f"key={_cache_key(R, n, tol)}; converged={int(rep.converged)}"
        write_field(sol, tmp, comment=comment)
        os.replace(tmp, path)
    return _assemble_saddle(quad, R, n, tol, rep.final_residual, profile, rep.converged)


def saddle_energy_growth(sol: SaddleSolution, fractions=(0.25, 0.5, 1.0)) -> list[tuple[float, float]]:
    """(R', int_{B_R'} |grad U|^2/2 + W(U) / R') for R' = fraction * R."""
    U = sol.field
    dens = 0.5 * grad_sq(U) + W(U.values)
    X, Y = U.grid.mesh()
    r = np.hypot(X, Y)
    w = U.grid.weights() * U.grid.cell_area
    out = []
    for f in fractions:
        Rp = f * sol.R
        inside = r <= Rp
        out.append((Rp, float(np.sum(dens * w * inside)) / Rp))
    return out


@dataclass
class BlowDown:
    field: ScalarField2D
    eps: float
    w_energy: float
    b_energy: float
    p_energy: float
    continued: bool


def blow_down_grid(sol: SaddleSolution, eps: float, half_width: float = 1.0, pad: int = 2, stride: int = 1) -> Grid2D:
    """Grid on [-half_width, half_width]^2 (plus ``pad`` nodes) on every ``stride``-th saddle node."""
    h = eps * sol.H * stride
    k = int(math.ceil(half_width / h - 1e-9)) + pad
    return Grid2D(2 * k + 1, 2 * k + 1, h, h, (-k * h, -k * h), BC.NEUMANN)


def blow_down(
    sol: SaddleSolution,
    eps: float,
    grid: Grid2D | None = None,
    continuation: bool = False,
    radius: float = 1.0,
    tau: float = DEFAULT_TAU,
    stride: int = 1,
) -> BlowDown:
    """u_eps(x) = U(x/eps) on a grid covering the ball of radius ``radius``.

    Energies are integrated over the ball, so no boundary stencil enters.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if grid is None:
        grid = blow_down_grid(sol, eps, radius, stride=stride)
    x0, x1, y0, y1 = grid.extent
    reach = max(abs(x0), abs(x1), abs(y0), abs(y1)) / eps
    continued = reach > sol.R
    if continued and not continuation:
        raise ValueError(
            f"eps={eps} needs a saddle box of half-width R >= {reach:.4g} (have R={sol.R:g}); "
            "pass continuation=True to extend by the far-field profile"
        )
    X, Y = grid.mesh()
    u = ScalarField2D(grid, sol.evaluate(X / eps, Y / eps, continuation=continuation))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rep = evaluate_energies(u, eps, tau)
    ball = np.hypot(X, Y) <= radius
    w = grid.weights() * grid.cell_area * ball
    return BlowDown(
        field=u,
        eps=float(eps),
        w_energy=float(np.sum(rep.w_density * w)),
        b_energy=float(np.sum(rep.b_density * w)),
        p_energy=float(np.sum(rep.mu_density * w)),
        continued=continued,
    )


def ball_measure(u: ScalarField2D, eps: float, center, radius: float) -> float:
    """mu_eps(B_radius(center)) with the P_eps density, node-indicator quadrature."""
    X, Y = u.grid.mesh()
    inside = np.hypot(X - center[0], Y - center[1]) <= radius
    dens = 0.5 * eps * grad_sq(u) + W(u.values) / eps
    return float(np.sum(dens * u.grid.weights() * inside) * u.grid.cell_area)


@dataclass
class MonotonicityReport:
    center: tuple[float, float]
    radii: list[float]
    ratios: list[float]
    constant: float


def monotonicity_check(u: ScalarField2D, eps: float, center, radii) -> MonotonicityReport:
    """Fit the smallest c with ratio(rho) >= ratio(sigma) - c*rho for sigma < rho."""
    radii = sorted(float(r) for r in radii)
    ratios = [ball_measure(u, eps, center, r) / r for r in radii]
    c = 0.0
    for j, rho in enumerate(radii):
        for i in range(j):
            c = max(c, (ratios[i] - ratios[j]) / rho)
    return MonotonicityReport((float(center[0]), float(center[1])), radii, ratios, c)


# --------------------------------------------------------------------------
# E_eps = P_eps + B_eps descent
# --------------------------------------------------------------------------


class _EOperators:
    def __init__(self, grid: Grid2D):
        self.grid = grid
        self.Dxx, self.Dyy, self.Dxy = hessian_matrices(grid)
        self.Gx, self.Gy = gradient_matrices(grid)
        self.w = (grid.weights() * grid.cell_area).ravel()


def _b_energy_and_gradient(v: np.ndarray, eps: float, ops: _EOperators, valid: np.ndarray):
    """B_eps and its exact gradient, with the validity mask held fixed."""
    gx, gy = ops.Gx @ v, ops.Gy @ v
    gn = np.hypot(gx, gy)
    safe = np.where(valid, gn, 1.0)
    nx = np.where(valid, gx / safe, 1.0)
    ny = np.where(valid, gy / safe, 0.0)
    r = dW(v) / eps
    mxx = eps * (ops.Dxx @ v) - r * nx * nx
    myy = eps * (ops.Dyy @ v) - r * ny * ny
    mxy = eps * (ops.Dxy @ v) - r * nx * ny
    fro2 = mxx * mxx + myy * myy + 2.0 * mxy * mxy
    B = float(np.sum(ops.w * fro2) / eps)

    s = 2.0 * ops.w / eps
    cxx, cyy, cxy = s * mxx, s * myy, s * mxy
    grad = eps * (ops.Dxx.T @ cxx + ops.Dyy.T @ cyy + 2.0 * (ops.Dxy.T @ cxy))
    mnn = cxx * nx * nx + cyy * ny * ny + 2.0 * cxy * nx * ny
    grad -= (d2W(v) / eps) * mnn
    # d(nu) = P d(g) / |g|; contribution -2 r (P C nu) . d(g) / |g|
    cnx = cxx * nx + cxy * ny
    cny = cxy * nx + cyy * ny
    dot = nx * cnx + ny * cny
    pcx = cnx - nx * dot
    pcy = cny - ny * dot
    fac = np.where(valid, -2.0 * r / safe, 0.0)
    grad += ops.Gx.T @ (fac * pcx) + ops.Gy.T @ (fac * pcy)
    return B, grad


def _p_energy_and_gradient(v: np.ndarray, eps: float, grid: Grid2D):
    u = v.reshape(grid.shape)
    g2 = kernels.grad_sq(u, grid.hx, grid.hy, grid.periodic)
    P = float(np.sum(grid.weights() * (0.5 * eps * g2 + W(u) / eps)) * grid.cell_area)
    lap = kernels.laplacian(u, grid.hx, grid.hy, grid.periodic)
    grad = (grid.weights() * grid.cell_area * (-eps * lap + dW(u) / eps)).ravel()
    return P, grad


def e_energy_and_gradient(u: ScalarField2D, eps: float, tau: float = DEFAULT_TAU, valid=None, ops=None):
    """E_eps = P_eps + B_eps and its gradient with respect to nodal values."""
    grid = u.grid
    if ops is None:
        ops = _EOperators(grid)
    if valid is None:
        valid = normal_field(u, tau).valid_mask
    v = np.asarray(u.values, dtype=float).ravel()
    P, gP = _p_energy_and_gradient(v, eps, grid)
    B, gB = _b_energy_and_gradient(v, eps, ops, np.asarray(valid).ravel())
    return P + B, (gP + gB).reshape(grid.shape)


def e_eps_descent(
    u0: ScalarField2D,
    eps: float,
    dt: float | None = None,
    steps: int = 100,
    tau: float = DEFAULT_TAU,
    max_halvings: int = 40,
) -> tuple[ScalarField2D, SolveReport]:
    """Steepest descent on E_eps with Armijo backtracking.

    The search direction is the L^2 gradient (nodal gradient divided by the
    quadrature weight). ``dt`` caps the trial step; successful steps let the
    next trial grow up to that cap.
    """
    _check_field(u0)
    if eps <= 0:
        raise ValueError("eps must be positive")
    grid = u0.grid
    if dt is None:
        dt = stable_dt(grid, eps) * eps
    ops = _EOperators(grid)
    mass = grid.weights() * grid.cell_area
    pinned = grid.boundary_mask() if grid.bc is BC.DIRICHLET1 else np.zeros(grid.shape, dtype=bool)

    v = _pin_dirichlet(u0)

    def energy(vals, valid=None):
        if valid is None:
            valid = normal_field(ScalarField2D(grid, vals), tau).valid_mask
        return e_energy_and_gradient(ScalarField2D(grid, vals), eps, tau, valid, ops)

    E, g = energy(v)
    trace = [(0, E)]
    gnorms = [float(np.sqrt(np.sum(g * g / mass)))]
    t = dt
    ok = True
    k = 0
    for k in range(1, steps + 1):
        d = -g / mass
        d[pinned] = 0.0
        slope = float(np.sum(g * d))
        if slope >= 0 or not np.isfinite(slope):
            if slope == 0:
                trace.append((k, E))
                gnorms.append(0.0)
                continue
            ok = False
            break
        accepted = False
        for _ in range(max_halvings + 1):
            trial = v + t * d
            Et, gt = energy(trial)
            if Et <= E + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            ok = False
            log.warning("e_eps_descent: Armijo failed after %d halvings", max_halvings)
            break
        if not np.all(np.isfinite(trial)):
            raise NumericalAbort("e_eps_descent: non-finite iterate")
        v, E, g = trial, Et, gt
        trace.append((k, E))
        gnorms.append(float(np.sqrt(np.sum(g * g / mass))))
        t = min(dt, 2.0 * t)
    u = ScalarField2D(grid, v)
    rep = SolveReport(
        iterations=len(trace) - 1,
        final_residual=residual_norm(u, eps),
        converged=ok,
        energy_trace=trace,
        residual_trace=gnorms,
        note="Armijo steepest descent on E_eps; residual_trace holds |grad E|_L2",
    )
    return u, rep
