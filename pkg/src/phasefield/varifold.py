"""Diffuse and polyline varifolds, first variations and tangent probes.

Vector fields Y are callables ``Y(X, Y) -> (values, jacobian)`` with
``values[i]`` the i-th component and ``jacobian[i, j] = d_j Y_i``, each with the
shape of ``X``. Hutchinson test functions are callables
``phi(X, Y, M) -> (value, d_x value, d_M value)`` where ``M`` stacks 2x2
projection matrices along the last two axes.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .energy import DEFAULT_TAU, dW, normal_field
from .grid import ScalarField2D, grad_sq, gradient, laplacian
from .shapes import C0

UNDIRECTED = -1


# --------------------------------------------------------------------------
# test fields
# --------------------------------------------------------------------------


def _bump(X, Y, center, radius):
    """C-infinity bump exp(1 - 1/(1 - r^2/radius^2)) and its gradient."""
    dx = (np.asarray(X, dtype=float) - center[0]) / radius
    dy = (np.asarray(Y, dtype=float) - center[1]) / radius
    r2 = dx * dx + dy * dy
    inside = r2 < 1.0
    val = np.zeros_like(r2)
    s = np.where(inside, 1.0 - r2, 1.0)
    val[inside] = np.exp(1.0 - 1.0 / s[inside])
    # d/dr2 of exp(1 - 1/(1 - r2)) = -val / (1 - r2)^2
    dr2 = np.where(inside, -val / (s * s), 0.0)
    gx = dr2 * 2.0 * dx / radius
    gy = dr2 * 2.0 * dy / radius
    return val, gx, gy


def bump_vector_field(center, radius: float, direction=(1.0, 0.0)):
    """Y = bump(x) * direction, compactly supported in B_radius(center)."""
    a = np.asarray(direction, dtype=float)

    def Y(X, Yc):
        b, gx, gy = _bump(X, Yc, center, radius)
        vals = np.stack([a[0] * b, a[1] * b])
        jac = np.stack([np.stack([a[0] * gx, a[0] * gy]), np.stack([a[1] * gx, a[1] * gy])])
        return vals, jac

    return Y


def linear_vector_field(A, b=(0.0, 0.0)):
    """Y(x) = A x + b."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)

    def Y(X, Yc):
        X = np.asarray(X, dtype=float)
        Yc = np.asarray(Yc, dtype=float)
        vals = np.stack([A[0, 0] * X + A[0, 1] * Yc + b[0], A[1, 0] * X + A[1, 1] * Yc + b[1]])
        one = np.ones_like(X)
        jac = np.stack([np.stack([A[0, 0] * one, A[0, 1] * one]), np.stack([A[1, 0] * one, A[1, 1] * one])])
        return vals, jac

    return Y


def bump_matrix_test_function(center, radius: float, j: int = 0, k: int = 0):
    """phi(x, M) = bump(x) * M_jk."""

    def phi(X, Yc, M):
        b, gx, gy = _bump(X, Yc, center, radius)
        m = M[..., j, k]
        dM = np.zeros(M.shape)
        dM[..., j, k] = b
        return b * m, np.stack([gx * m, gy * m], axis=-1), dM

    return phi


def zero_test_function(X, Yc, M):
    X = np.asarray(X, dtype=float)
    return np.zeros(X.shape), np.zeros(X.shape + (2,)), np.zeros(M.shape)


# --------------------------------------------------------------------------
# diffuse varifold
# --------------------------------------------------------------------------


def _line_angle(nx, ny):
    """Direction of the line perpendicular to nu, in [0, pi)."""
    return np.mod(np.arctan2(ny, nx) + 0.5 * np.pi, np.pi)


def angle_bin(theta, n_bins: int):
    """Bins are centred at k*pi/n_bins; antipodal directions coincide."""
    return np.mod(np.rint(np.asarray(theta) / (np.pi / n_bins)).astype(np.int64), n_bins)


def bin_centre(k, n_bins: int):
    return np.asarray(k) * (np.pi / n_bins)


@dataclass
class DiffuseVarifold:
    grid: object
    eps: float
    n_bins: int
    node_mass: np.ndarray = field(repr=False)
    node_bin: np.ndarray = field(repr=False)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.node_mass))

    @property
    def bin_masses(self) -> np.ndarray:
        directed = self.node_bin >= 0
        return np.bincount(self.node_bin[directed], weights=self.node_mass[directed], minlength=self.n_bins)

    @property
    def undirected_mass(self) -> float:
        return float(np.sum(self.node_mass[self.node_bin < 0]))

    def ball_bins(self, x, rho: float) -> np.ndarray:
        """Per-bin mass inside B_rho(x); the last entry is the undirected mass."""
        X, Y = self.grid.mesh()
        inside = np.hypot(X - x[0], Y - x[1]) <= rho
        b = np.where(self.node_bin >= 0, self.node_bin, self.n_bins)
        return np.bincount(b[inside], weights=self.node_mass[inside], minlength=self.n_bins + 1)

    def ball_mass(self, x, rho: float) -> float:
        return float(np.sum(self.ball_bins(x, rho)))

    def check_ball(self, x, rho: float) -> None:
        x0, x1, y0, y1 = self.grid.extent
        if x[0] - rho < x0 or x[0] + rho > x1 or x[1] - rho < y0 or x[1] + rho > y1:
            raise ValueError(f"ball B_{rho}({x[0]}, {x[1]}) is clipped by the domain")


def diffuse_varifold(u: ScalarField2D, eps: float, tau: float = DEFAULT_TAU, n_bins: int = 36) -> DiffuseVarifold:
    """Node masses eps|grad u|^2 * weight / c0, binned by level-line direction."""
    if n_bins < 18:
        raise ValueError("n_bins must be at least 18")
    grid = u.grid
    geo = normal_field(u, tau)
    mass = eps * grad_sq(u) * grid.weights() * grid.cell_area / C0
    bins = angle_bin(_line_angle(geo.normal.x, geo.normal.y), n_bins)
    bins = np.where(geo.valid_mask, bins, UNDIRECTED)
    return DiffuseVarifold(grid, float(eps), int(n_bins), mass, bins)


def first_variation_diffuse(u: ScalarField2D, eps: float, Y, tau: float = DEFAULT_TAU) -> tuple[float, float]:
    """(delta V_eps(Y), c0^-1 sum (eps Lap u - W'(u)/eps)(grad u . Y)).

    The two agree up to the discrepancy term and quadrature error.
    """
    grid = u.grid
    X, Yc = grid.mesh()
    vals, jac = Y(X, Yc)
    bnd = grid.boundary_mask()
    if np.any(np.abs(vals[:, bnd]) > 1e-12):
        warnings.warn("first_variation_diffuse: Y does not vanish on the boundary", RuntimeWarning, stacklevel=2)
    geo = normal_field(u, tau)
    P = geo.projection_array()
    trPY = (
        P[..., 0, 0] * jac[0, 0] + P[..., 0, 1] * jac[0, 1] + P[..., 1, 0] * jac[1, 0] + P[..., 1, 1] * jac[1, 1]
    )
    lhs = grid.integrate(trPY * eps * grad_sq(u)) / C0
    g = gradient(u)
    res = eps * laplacian(u) - dW(u.values) / eps
    rhs = grid.integrate(res * (g.x * vals[0] + g.y * vals[1])) / C0
    return lhs, rhs


# --------------------------------------------------------------------------
# polylines
# --------------------------------------------------------------------------


@dataclass
class Curve:
    points: np.ndarray
    closed: bool = False
    theta: int = 1

    def __post_init__(self):
        p = np.ascontiguousarray(self.points, dtype=float).reshape(-1, 2)
        if p.shape[0] < 2:
            raise ValueError("a curve needs at least two vertices")
        if self.closed and p.shape[0] < 3:
            raise ValueError("a closed curve needs at least three vertices")
        if int(self.theta) != self.theta or self.theta < 1:
            raise ValueError("multiplicity must be a positive integer")
        d = np.diff(p, axis=0)
        if self.closed:
            d = np.vstack([d, p[:1] - p[-1:]])
        if np.any(np.hypot(d[:, 0], d[:, 1]) == 0.0):
            raise ValueError("consecutive vertices must be distinct")
        self.points = p
        self.theta = int(self.theta)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        p = self.points
        if self.closed:
            return p, np.roll(p, -1, axis=0)
        return p[:-1], p[1:]

    def length(self) -> float:
        a, b = self.edges()
        return float(np.sum(np.hypot(*(b - a).T)))

    def menger(self) -> tuple[np.ndarray, np.ndarray]:
        """Curvature vector toward the circumcentre and vertex weights.

        Endpoints of open curves carry zero curvature and half their edge.
        """
        p = self.points
        n = p.shape[0]
        if self.closed:
            prev, nxt = np.roll(p, 1, axis=0), np.roll(p, -1, axis=0)
        else:
            prev = np.vstack([p[:1], p[:-1]])
            nxt = np.vstack([p[1:], p[-1:]])
        a = prev - p
        c = nxt - p
        la = np.hypot(a[:, 0], a[:, 1])
        lc = np.hypot(c[:, 0], c[:, 1])
        w = 0.5 * (la + lc)
        d = 2.0 * (a[:, 0] * c[:, 1] - a[:, 1] * c[:, 0])
        a2, c2 = la * la, lc * lc
        ok = np.abs(d) > 1e-300
        sd = np.where(ok, d, 1.0)
        ox = np.where(ok, (c[:, 1] * a2 - a[:, 1] * c2) / sd, 0.0)
        oy = np.where(ok, (a[:, 0] * c2 - c[:, 0] * a2) / sd, 0.0)
        r2 = ox * ox + oy * oy
        sr2 = np.where(ok & (r2 > 0), r2, 1.0)
        H = np.where((ok & (r2 > 0))[:, None], np.stack([ox, oy], axis=1) / sr2[:, None], 0.0)
        if not self.closed and n >= 2:
            H[0] = H[-1] = 0.0
        return H, w

    def curvature(self) -> np.ndarray:
        H, _ = self.menger()
        return np.hypot(H[:, 0], H[:, 1])


@dataclass
class PolylineVarifold:
    curves: list[Curve] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not self.curves

    @property
    def total_mass(self) -> float:
        return float(sum(c.theta * c.length() for c in self.curves))

    def scaled(self, factor: int) -> PolylineVarifold:
        return PolylineVarifold([Curve(c.points, c.closed, c.theta * factor) for c in self.curves])

    def all_edges(self):
        """Concatenated (a, b, theta) over every edge."""
        if not self.curves:
            z = np.zeros((0, 2))
            return z, z, np.zeros(0)
        A, B, T = [], [], []
        for c in self.curves:
            a, b = c.edges()
            A.append(a)
            B.append(b)
            T.append(np.full(a.shape[0], float(c.theta)))
        return np.vstack(A), np.vstack(B), np.concatenate(T)


def circle_polyline(center, radius: float, n: int, theta: int = 1) -> PolylineVarifold:
    t = 2.0 * np.pi * np.arange(n) / n
    pts = np.stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)], axis=1)
    return PolylineVarifold([Curve(pts, True, theta)])


def segment_polyline(a, b, n: int, theta: int = 1) -> PolylineVarifold:
    t = np.linspace(0.0, 1.0, n)[:, None]
    pts = (1 - t) * np.asarray(a, dtype=float) + t * np.asarray(b, dtype=float)
    return PolylineVarifold([Curve(pts, False, theta)])


@dataclass
class PolylineFirstVariation:
    delta_v: float
    curvature_term: float
    boundary_term: float = 0.0
    atoms: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    def __iter__(self):
        yield self.delta_v
        yield self.curvature_term


def _merge_atoms(atoms, tol=1e-9):
    merged: list[list] = []
    for p, v in atoms:
        for m in merged:
            if np.hypot(*(m[0] - p)) <= tol:
                m[1] = m[1] + v
                break
        else:
            merged.append([np.array(p, dtype=float), np.array(v, dtype=float)])
    return [(p, v) for p, v in merged]


def polyline_first_variation(pv: PolylineVarifold, Y) -> PolylineFirstVariation:
    """delta V(Y) = sum theta tr(P_e grad Y(mid)) |e| and int H.Y dmu.

    H is the generalized mean curvature, the density of delta V with respect
    to mass: for a curve it points away from the centre of curvature. Open
    curves add the endpoint atoms theta * eta, eta the outward unit tangent;
    ``boundary_term`` is their pairing with Y, so that
    ``delta_v = curvature_term + boundary_term`` up to discretization.
    """
    dv = 0.0
    hy = 0.0
    atoms = []
    for c in pv.curves:
        a, b = c.edges()
        e = b - a
        ln = np.hypot(e[:, 0], e[:, 1])
        t = e / ln[:, None]
        mid = 0.5 * (a + b)
        _, jac = Y(mid[:, 0], mid[:, 1])
        tr = t[:, 0] * (jac[0, 0] * t[:, 0] + jac[0, 1] * t[:, 1]) + t[:, 1] * (jac[1, 0] * t[:, 0] + jac[1, 1] * t[:, 1])
        dv += c.theta * float(np.sum(tr * ln))
        H, w = c.menger()
        vals, _ = Y(c.points[:, 0], c.points[:, 1])
        hy += c.theta * float(np.sum(-(H[:, 0] * vals[0] + H[:, 1] * vals[1]) * w))
        if not c.closed:
            atoms.append((c.points[0].copy(), -c.theta * t[0]))
            atoms.append((c.points[-1].copy(), c.theta * t[-1]))
    atoms = _merge_atoms(atoms)
    bnd = 0.0
    for p, v in atoms:
        vals, _ = Y(np.array([p[0]]), np.array([p[1]]))
        bnd += float(v[0] * vals[0][0] + v[1] * vals[1][0])
    return PolylineFirstVariation(dv, hy, bnd, atoms)


def hutchinson_residual(pv: PolylineVarifold, phi) -> float:
    """Max over i of the discrete Hutchinson identity residual.

    Edges carry the constant projection P_e; each vertex carries the atomic
    tensor A_ijk = tbar_i (P_+ - P_-)_jk, where tbar bisects the two edge
    directions, with phi's derivatives evaluated at the bisector projection.
    """
    res = np.zeros(2)
    for c in pv.curves:
        a, b = c.edges()
        e = b - a
        ln = np.hypot(e[:, 0], e[:, 1])
        t = e / ln[:, None]
        Pe = t[:, :, None] * t[:, None, :]
        # P_ij d_j phi = t_i d(phi)/ds, so each edge integrates exactly
        fa, _, _ = phi(a[:, 0], a[:, 1], Pe)
        fb, _, _ = phi(b[:, 0], b[:, 1], Pe)
        res += c.theta * np.einsum("ni,n->i", t, fb - fa)

        if c.closed:
            tm, tp = np.roll(t, 1, axis=0), t
            verts = c.points
        else:
            if c.n < 3:
                continue
            tm, tp = t[:-1], t[1:]
            verts = c.points[1:-1]
        tb = tm + tp
        nb = np.hypot(tb[:, 0], tb[:, 1])
        tb = tb / np.where(nb > 0, nb, 1.0)[:, None]
        Pv = tb[:, :, None] * tb[:, None, :]
        dP = tp[:, :, None] * tp[:, None, :] - tm[:, :, None] * tm[:, None, :]
        val, _, dM = phi(verts[:, 0], verts[:, 1], Pv)
        A_dm = np.einsum("ni,njk,njk->i", tb, dP, dM)
        A_jij = np.einsum("nj,nij,n->i", tb, dP, val)
        res += c.theta * (A_dm + A_jij)
    return float(np.max(np.abs(res)))


def _clip_lengths(a, b, x, rho):
    """Length of each segment [a, b] inside the closed ball B_rho(x)."""
    d = b - a
    f = a - np.asarray(x, dtype=float)
    A = np.sum(d * d, axis=1)
    B = 2.0 * np.sum(f * d, axis=1)
    C = np.sum(f * f, axis=1) - rho * rho
    disc = B * B - 4 * A * C
    ok = disc > 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    t0 = np.clip((-B - sq) / (2 * A), 0.0, 1.0)
    t1 = np.clip((-B + sq) / (2 * A), 0.0, 1.0)
    return np.where(ok, (t1 - t0) * np.sqrt(A), 0.0)


def _polyline_ball_bins(pv: PolylineVarifold, x, rho: float, n_bins: int) -> np.ndarray:
    a, b, th = pv.all_edges()
    out = np.zeros(n_bins + 1)
    if a.shape[0] == 0:
        return out
    ln = _clip_lengths(a, b, x, rho) * th
    d = b - a
    ang = np.mod(np.arctan2(d[:, 1], d[:, 0]), np.pi)
    out[:n_bins] = np.bincount(angle_bin(ang, n_bins), weights=ln, minlength=n_bins)
    return out


def _ball_bins(measure, x, rho, n_bins):
    if isinstance(measure, DiffuseVarifold):
        if n_bins != measure.n_bins:
            raise ValueError("n_bins must match the diffuse varifold's bins")
        return measure.ball_bins(x, rho)
    return _polyline_ball_bins(measure, x, rho, n_bins)


def density_ratio(measure, x, rho: float) -> float:
    """mu(B_rho(x)) / (2 rho): a multiplicity-one line has ratio one."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    if isinstance(measure, DiffuseVarifold):
        measure.check_ball(x, rho)
        return measure.ball_mass(x, rho) / (2.0 * rho)
    a, b, th = measure.all_edges()
    if a.shape[0] == 0:
        return 0.0
    return float(np.sum(_clip_lengths(a, b, x, rho) * th)) / (2.0 * rho)


# --------------------------------------------------------------------------
# tangent probe
# --------------------------------------------------------------------------


class Verdict(str, enum.Enum):
    UNIQUE = "UniqueTangent"
    NON_UNIQUE = "NonUnique"
    INCONCLUSIVE = "Inconclusive"


@dataclass
class TangentProbeReport:
    center: tuple[float, float]
    scales: list[float]
    histograms: list[np.ndarray]
    rescaled_mass: list[float]
    verdict: Verdict
    directions: list[float]
    n_bins: int

    CSV_HEADER = ("lambda", "rescaled_mass", "peak_angle", "n_clusters", "verdict")

    def csv_rows(self):
        for lam, h, m in zip(self.scales, self.histograms, self.rescaled_mass):
            cl = _clusters(h)
            peak = float(bin_centre(int(np.argmax(h)), self.n_bins)) if h.sum() > 0 else float("nan")
            yield (lam, m, peak, len(cl), self.verdict.value)


def _clusters(frac: np.ndarray, threshold: float = 0.03) -> list[np.ndarray]:
    """Circularly contiguous runs of bins above ``threshold``."""
    n = frac.size
    on = frac > threshold
    if not on.any():
        return []
    if on.all():
        return [np.arange(n)]
    start = int(np.argmin(on))
    out, cur = [], []
    for k in range(n):
        b = (start + k) % n
        if on[b]:
            cur.append(b)
        elif cur:
            out.append(np.array(cur))
            cur = []
    if cur:
        out.append(np.array(cur))
    return out


def _cluster_direction(frac, bins, n_bins):
    ang = 2.0 * bin_centre(bins, n_bins)
    w = frac[bins]
    return float(np.mod(0.5 * math.atan2(np.sum(w * np.sin(ang)), np.sum(w * np.cos(ang))), np.pi))


def _bin_distance(a: int, b: int, n: int) -> int:
    d = abs(a - b) % n
    return min(d, n - d)


def blow_up_probe(measure, x, lambdas, n_bins: int = 36, min_mass: float = 0.5) -> TangentProbeReport:
    """Direction histograms of mu restricted to B_lambda(x), rescaled by 1/lambda.

    UniqueTangent: one cluster with at least 95% of the mass at the two finest
    scales, peaks within one bin of each other. NonUnique: at least two
    clusters of 20% or more at both finest scales.
    """
    lambdas = [float(l) for l in lambdas]
    if len(lambdas) < 2 or any(b >= a for a, b in zip(lambdas, lambdas[1:])):
        raise ValueError("lambdas must be a strictly decreasing list of at least two scales")
    hists, masses = [], []
    for lam in lambdas:
        if isinstance(measure, DiffuseVarifold):
            measure.check_ball(x, lam)
        bins = _ball_bins(measure, x, lam, n_bins)
        total = float(bins.sum())
        masses.append(total / lam)
        hists.append(bins[:n_bins] / total if total > 0 else np.zeros(n_bins))

    verdict = Verdict.INCONCLUSIVE
    directions: list[float] = []
    if masses[-1] >= min_mass:
        fine = hists[-2:]
        cls = [_clusters(h) for h in fine]
        mass_of = [[float(h[c].sum()) for c in cl] for h, cl in zip(fine, cls)]
        if all(len(cl) == 1 and m[0] >= 0.95 for cl, m in zip(cls, mass_of)):
            p0, p1 = (int(np.argmax(h)) for h in fine)
            if _bin_distance(p0, p1, n_bins) <= 1:
                verdict = Verdict.UNIQUE
                directions = [_cluster_direction(fine[-1], cls[-1][0], n_bins)]
        elif all(sum(v >= 0.2 for v in m) >= 2 for m in mass_of):
            verdict = Verdict.NON_UNIQUE
            h = fine[-1]
            directions = [_cluster_direction(h, c, n_bins) for c, v in zip(cls[-1], mass_of[-1]) if v >= 0.2]
    return TangentProbeReport(
        (float(x[0]), float(x[1])), lambdas, hists, masses, verdict, directions, n_bins
    )


# --------------------------------------------------------------------------
# level sets
# --------------------------------------------------------------------------


def _edge_points(ids: np.ndarray, v: np.ndarray, level: float, grid) -> np.ndarray:
    ny, nx = v.shape
    node = ids // 2
    vert = (ids % 2).astype(bool)
    j, i = node // nx, node % nx
    j2 = np.where(vert, j + 1, j)
    i2 = np.where(vert, i, i + 1)
    a = v[j, i]
    b = v[j2, i2]
    t = (level - a) / (b - a)
    x = grid.origin[0] + grid.hx * (i + t * (i2 - i))
    y = grid.origin[1] + grid.hy * (j + t * (j2 - j))
    return np.stack([x, y], axis=1)


def _chain(ea: np.ndarray, eb: np.ndarray) -> list[tuple[list[int], bool]]:
    """Join segments sharing an edge id into open or closed chains."""
    adj: dict[int, list[int]] = {}
    for k, (a, b) in enumerate(zip(ea.tolist(), eb.tolist())):
        adj.setdefault(a, []).append(k)
        adj.setdefault(b, []).append(k)
    used = np.zeros(ea.size, dtype=bool)

    def walk(start_node, seg):
        nodes = [start_node]
        node = start_node
        while seg is not None and not used[seg]:
            used[seg] = True
            a, b = int(ea[seg]), int(eb[seg])
            node = b if a == node else a
            nodes.append(node)
            seg = next((s for s in adj[node] if not used[s]), None)
        return nodes

    chains = []
    # open chains start at edges touched by a single segment
    for node in sorted(adj):
        segs = adj[node]
        if len(segs) == 1 and not used[segs[0]]:
            chains.append((walk(node, segs[0]), False))
    for k in range(ea.size):
        if not used[k]:
            nodes = walk(int(ea[k]), k)
            closed = nodes[0] == nodes[-1]
            chains.append((nodes[:-1] if closed else nodes, closed))
    return chains


def _dedupe(points: np.ndarray, closed: bool) -> np.ndarray:
    keep = np.ones(points.shape[0], dtype=bool)
    keep[1:] = np.any(points[1:] != points[:-1], axis=1)
    p = points[keep]
    if closed and p.shape[0] > 1 and np.all(p[0] == p[-1]):
        p = p[:-1]
    return p


def extract_level_set(u: ScalarField2D, s: float) -> PolylineVarifold:
    """Marching-squares polylines of {u = s}, multiplicity one."""
    v = np.asarray(u.values, dtype=float)
    ea, eb = kernels.marching_squares(v, float(s))
    if ea.size == 0:
        return PolylineVarifold([])
    curves = []
    for nodes, closed in _chain(ea, eb):
        pts = _dedupe(_edge_points(np.array(nodes, dtype=np.int64), v, float(s), u.grid), closed)
        if closed and pts.shape[0] < 3:
            continue
        if pts.shape[0] < 2:
            continue
        curves.append(Curve(pts, closed, 1))
    return PolylineVarifold(curves)


def curvature_proxy(pv: PolylineVarifold) -> float:
    """sum over vertices of theta |kappa| * weight."""
    total = 0.0
    for c in pv.curves:
        H, w = c.menger()
        total += c.theta * float(np.sum(np.hypot(H[:, 0], H[:, 1]) * w))
    return total


@dataclass
class GoodLevel:
    level: float
    proxy: float
    varifold: PolylineVarifold
    empty: bool
    levels: np.ndarray = field(repr=False, default=None)
    proxies: np.ndarray = field(repr=False, default=None)

    def __iter__(self):
        yield self.level
        yield self.proxy


def select_good_level(u: ScalarField2D, eps: float, delta: float, n_levels: int = 32) -> GoodLevel:
    """Scan n_levels equispaced levels of [-1 + delta, 1 - delta] for the smallest |kappa| proxy."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    levels = np.linspace(-1.0 + delta, 1.0 - delta, n_levels)
    proxies = np.full(n_levels, np.inf)
    best = None
    for k, s in enumerate(levels):
        pv = extract_level_set(u, s)
        if pv.empty:
            continue
        proxies[k] = curvature_proxy(pv)
        if best is None or proxies[k] < proxies[best[0]]:
            best = (k, pv)
    if best is None:
        return GoodLevel(0.0, 0.0, PolylineVarifold([]), True, levels, proxies)
    k, pv = best
    return GoodLevel(float(levels[k]), float(proxies[k]), pv, False, levels, proxies)


def elastica_energy(pv: PolylineVarifold, min_vertices: int = 8) -> float:
    """sum theta (1 + kappa^2) * weight with Menger curvature."""
    total = 0.0
    for c in pv.curves:
        if c.n < min_vertices:
            raise ValueError(f"elastica_energy needs at least {min_vertices} vertices per curve")
        H, w = c.menger()
        k2 = H[:, 0] ** 2 + H[:, 1] ** 2
        total += c.theta * float(np.sum((1.0 + k2) * w))
    return total


# --------------------------------------------------------------------------
# text format
# --------------------------------------------------------------------------


def write_polylines(pv: PolylineVarifold, path) -> None:
    lines = []
    for c in pv.curves:
        lines.append(f"CURVE closed={int(c.closed)} theta={c.theta} n={c.n}")
        lines.extend(f"{x!r} {y!r}" for x, y in c.points.tolist())
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_polylines(path) -> PolylineVarifold:
    rows = Path(path).read_text().splitlines()
    curves = []
    k = 0
    while k < len(rows):
        line = rows[k].strip()
        k += 1
        if not line:
            continue
        parts = line.split()
        if parts[0] != "CURVE":
            raise ValueError(f"line {k}: expected CURVE header, got {line!r}")
        kv = dict(p.split("=", 1) for p in parts[1:])
        try:
            n = int(kv["n"])
            closed = bool(int(kv["closed"]))
            theta = int(kv["theta"])
        except (KeyError, ValueError) as exc:
            raise ValueError(f"line {k}: malformed CURVE header") from exc
        if k + n > len(rows):
            raise ValueError(f"line {k}: curve declares {n} vertices but the file ends early")
        pts = np.array([[float(t) for t in rows[k + m].split()] for m in range(n)])
        k += n
        curves.append(Curve(pts, closed, theta))
    return PolylineVarifold(curves)
