"""Cahn-Hilliard, De Giorgi and Hessian energies and level-set geometry.

All integrals use the trapezoidal weights of the grid. Matrices are measured
in the Frobenius norm, third-order tensors in the sum-of-squares norm.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .grid import (
    Grid2D,
    MatrixField2D,
    ScalarField2D,
    VectorField2D,
    grad_sq,
    gradient,
    hessian,
    laplacian,
)

DEFAULT_TAU = 1e-8


def W(s):
    """Double-well potential (1 - s^2)^2 / 4."""
    return 0.25 * (1.0 - s * s) ** 2


def dW(s):
    return s * s * s - s


def d2W(s):
    return 3.0 * s * s - 1.0


@dataclass
class LevelSetGeometry:
    normal: VectorField2D
    projection: MatrixField2D
    valid_mask: np.ndarray
    grad_norm: np.ndarray
    # B[..., i, j, k] = B^k_ij and A[..., i, j, k] = A_ijk; None until requested
    second_fundamental: np.ndarray | None = None
    a_tensor: np.ndarray | None = None
    interior_mask: np.ndarray | None = None

    def normal_array(self) -> np.ndarray:
        return np.stack([self.normal.x, self.normal.y], axis=-1)

    def projection_array(self) -> np.ndarray:
        return self.projection.as_array()


def normal_field(u: ScalarField2D, tau: float = DEFAULT_TAU) -> LevelSetGeometry:
    """Unit normal of the level lines, e1 where the gradient is negligible."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    g = gradient(u)
    norm = g.norm()
    gmax = float(norm.max())
    valid = norm > tau * gmax if gmax > 0 else np.zeros(norm.shape, dtype=bool)
    safe = np.where(valid, norm, 1.0)
    nx = np.where(valid, g.x / safe, 1.0)
    ny = np.where(valid, g.y / safe, 0.0)
    proj = MatrixField2D(u.grid, 1.0 - nx * nx, 1.0 - ny * ny, -nx * ny)
    return LevelSetGeometry(VectorField2D(u.grid, nx, ny), proj, valid, norm)


def level_set_tensors(u: ScalarField2D, tau: float = DEFAULT_TAU) -> LevelSetGeometry:
    """Add the second fundamental form B_u and the tensor A^u of the level lines."""
    geo = normal_field(u, tau)
    grid = u.grid
    nu = geo.normal_array()
    P = geo.projection_array()
    H = hessian(u).as_array()
    valid = geo.valid_mask

    S = np.einsum("...li,...lm,...mj->...ij", P, H, P)
    S /= np.where(valid, geo.grad_norm, 1.0)[..., None, None]
    B = S[..., :, :, None] * nu[..., None, None, :]

    # derivatives of the products nu_j nu_k, taken by applying the stencil to the nu field
    dN = np.empty(nu.shape[:-1] + (2, 2, 2))  # [..., l, j, k] = d_l (nu_j nu_k)
    for j in range(2):
        for k in range(j, 2):
            d = gradient(ScalarField2D(grid, nu[..., j] * nu[..., k]))
            dN[..., 0, j, k] = dN[..., 0, k, j] = d.x
            dN[..., 1, j, k] = dN[..., 1, k, j] = d.y
    A = -np.einsum("...il,...ljk->...ijk", P, dN)

    zero = ~valid
    B[zero] = 0.0
    A[zero] = 0.0
    geo.second_fundamental = B
    geo.a_tensor = A
    # reflected ghosts only represent fields with zero normal derivative, so
    # the boundary ring is not a faithful sample of a general field's Hessian
    geo.interior_mask = grid.interior_mask(2) if not grid.periodic else np.ones(grid.shape, dtype=bool)
    return geo


@dataclass
class ABResidual:
    value: float
    per_relation: tuple[float, float, float]
    empty: bool = False


def check_ab_residual(geo: LevelSetGeometry) -> ABResidual:
    """Max-norm residual of the three A <-> B relations over valid nodes.

    The relations are checked in the orientation where the curvature vector
    points to the concave side, i.e. with B replaced by -B_u; the displayed
    B_u carries the opposite sign. Norms are unaffected by the flip.
    """
    if geo.a_tensor is None or geo.second_fundamental is None:
        raise ValueError("geometry has no tensors; use level_set_tensors")
    mask = geo.valid_mask
    if geo.interior_mask is not None:
        mask = mask & geo.interior_mask
    if not mask.any():
        warnings.warn("check_ab_residual: no valid nodes", RuntimeWarning, stacklevel=2)
        return ABResidual(0.0, (0.0, 0.0, 0.0), empty=True)
    Bh = -geo.second_fundamental[mask]  # [n, i, j, k] = B^k_ij
    A = geo.a_tensor[mask]
    P = geo.projection_array()[mask]

    r1 = Bh - np.einsum("njl,nikl->nijk", P, A)
    r2 = A - (Bh + np.swapaxes(Bh, 2, 3))
    # mean curvature H_i = B^i_jj
    Hvec = np.einsum("njji->ni", Bh)
    r3 = Hvec - np.einsum("njij->ni", A)
    vals = tuple(float(np.abs(r).max()) for r in (r1, r2, r3))
    return ABResidual(max(vals), vals)


@dataclass
class EnergyReport:
    eps: float
    p_energy: float
    w_energy: float
    b_energy: float
    xi_l1: float
    resolved: bool
    mu_density: np.ndarray = field(repr=False)
    w_density: np.ndarray = field(repr=False)
    b_density: np.ndarray = field(repr=False)
    xi_density: np.ndarray = field(repr=False)
    mu_tilde_density: np.ndarray = field(repr=False)
    grid: Grid2D | None = field(default=None, repr=False)
    valid_fraction: float = 1.0

    @property
    def mu_tilde_mass(self) -> float:
        return self.grid.integrate(self.mu_tilde_density)

    CSV_HEADER = ("eps", "p_energy", "w_energy", "b_energy", "xi_l1", "resolved_flag")

    def csv_row(self) -> tuple:
        return (self.eps, self.p_energy, self.w_energy, self.b_energy, self.xi_l1, int(self.resolved))


def is_resolved(grid, eps: float) -> bool:
    return eps >= 2.0 * max(grid.hx, grid.hy)


def _defect_matrix(u: ScalarField2D, eps: float, geo: LevelSetGeometry):
    """M = eps * Hess(u) - (W'(u)/eps) nu (x) nu, by its three entries."""
    H = hessian(u)
    r = dW(u.values) / eps
    nx, ny = geo.normal.x, geo.normal.y
    return eps * H.xx - r * nx * nx, eps * H.yy - r * ny * ny, eps * H.xy - r * nx * ny


def evaluate_energies(u: ScalarField2D, eps: float, tau: float = DEFAULT_TAU) -> EnergyReport:
    if eps <= 0:
        raise ValueError("eps must be positive")
    grid = u.grid
    resolved = is_resolved(grid, eps)
    if not resolved:
        warnings.warn(
            f"eps={eps} is under-resolved by h={max(grid.hx, grid.hy)}", RuntimeWarning, stacklevel=2
        )
    v = u.values
    g2 = grad_sq(u)
    pot = W(v) / eps
    grad_part = 0.5 * eps * g2
    mu = grad_part + pot
    xi = grad_part - pot
    mu_tilde = eps * g2

    geo = normal_field(u, tau)
    mxx, myy, mxy = _defect_matrix(u, eps, geo)
    res = eps * laplacian(u) - dW(v) / eps
    w_dens = res * res / eps
    b_dens = (mxx * mxx + myy * myy + 2.0 * mxy * mxy) / eps

    rep = EnergyReport(
        eps=float(eps),
        p_energy=grid.integrate(mu),
        w_energy=grid.integrate(w_dens),
        b_energy=grid.integrate(b_dens),
        xi_l1=grid.integrate(np.abs(xi)),
        resolved=resolved,
        mu_density=mu,
        w_density=w_dens,
        b_density=b_dens,
        xi_density=xi,
        mu_tilde_density=mu_tilde,
        grid=grid,
        valid_fraction=float(geo.valid_mask.mean()),
    )
    return rep


def defect_inequality_report(
    u: ScalarField2D, eps: float, tau: float = DEFAULT_TAU, relative: bool = False
) -> tuple[float, float]:
    """Largest violations of (tr M)^2 <= 2|M|^2 and |B_u| eps|grad u| <= |M|.

    Both are pointwise algebra in two dimensions, so the returned numbers are
    round-off sized (non-positive up to float noise). With ``relative`` they
    are divided by the field maxima of 2|M|^2 and |M| respectively.
    """
    geo = level_set_tensors(u, tau)
    mxx, myy, mxy = _defect_matrix(u, eps, geo)
    fro2 = mxx * mxx + myy * myy + 2.0 * mxy * mxy
    trace_gap = float(np.max((mxx + myy) ** 2 - 2.0 * fro2))
    Bnorm = np.sqrt(np.sum(geo.second_fundamental ** 2, axis=(-3, -2, -1)))
    lhs = Bnorm * eps * geo.grad_norm
    gap = lhs - np.sqrt(fro2)
    equlo_gap = float(np.max(gap[geo.valid_mask])) if geo.valid_mask.any() else 0.0
    if relative:
        s2 = float(np.max(2.0 * fro2))
        trace_gap = trace_gap / s2 if s2 > 0 else trace_gap
        s1 = float(np.sqrt(np.max(fro2)))
        equlo_gap = equlo_gap / s1 if s1 > 0 else equlo_gap
    return trace_gap, equlo_gap


def projection_gap(P: np.ndarray, M: np.ndarray) -> np.ndarray:
    """|P^T M P| - |M| for stacks of 2x2 matrices (non-positive for projections)."""
    PMP = np.einsum("...li,...lm,...mj->...ij", P, M, P)
    return np.sqrt(np.sum(PMP ** 2, axis=(-2, -1))) - np.sqrt(np.sum(M ** 2, axis=(-2, -1)))


def p_energy_gradient(u: ScalarField2D, eps: float) -> np.ndarray:
    """Exact derivative of the discrete P_eps with respect to nodal values."""
    v = u.values
    return u.grid.weights() * u.grid.cell_area * (-eps * laplacian(u) + dW(v) / eps)
