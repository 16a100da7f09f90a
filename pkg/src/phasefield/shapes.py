"""Optimal profile, signed distances and the cusp dumbbell family."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from ._accel import USE_NUMBA, njit
from .energy import W, is_resolved
from .grid import Grid2D, ScalarField2D

SQRT2 = np.sqrt(2.0)


def c0_constant() -> float:
    """Surface tension: integral of sqrt(2 W(s)) over [-1, 1]."""
    val, _ = integrate.quad(lambda s: np.sqrt(2.0 * W(s)), -1.0, 1.0, epsabs=1e-13, epsrel=1e-13)
    return val


C0 = 2.0 * SQRT2 / 3.0


def optimal_profile(s):
    """Heteroclinic q(s) = tanh(s / sqrt 2) and its derivative.

    q'' = W'(q) and q'^2 = 2 W(q) hold exactly for the quartic well.
    """
    q = np.tanh(np.asarray(s, dtype=float) / SQRT2)
    return q, (1.0 - q * q) / SQRT2


def profile_second_derivative(s):
    q, _ = optimal_profile(s)
    return -q * (1.0 - q * q)


# --------------------------------------------------------------------------
# polygon distance kernels
# --------------------------------------------------------------------------


def _polygon_sdf_np(px, py, vx, vy, chunk=4096):
    n = vx.size
    ax, ay = vx, vy
    bx, by = np.roll(vx, -1), np.roll(vy, -1)
    ex, ey = bx - ax, by - ay
    ee = ex * ex + ey * ey
    d2 = np.full(px.shape, np.inf)
    inside = np.zeros(px.shape, dtype=bool)
    for s in range(0, n, chunk):
        sl = slice(s, s + chunk)
        wx = px[:, None] - ax[None, sl]
        wy = py[:, None] - ay[None, sl]
        t = np.clip((wx * ex[None, sl] + wy * ey[None, sl]) / ee[None, sl], 0.0, 1.0)
        dx = wx - t * ex[None, sl]
        dy = wy - t * ey[None, sl]
        d2 = np.minimum(d2, np.min(dx * dx + dy * dy, axis=1))
        cond = (ay[None, sl] > py[:, None]) != (by[None, sl] > py[:, None])
        xint = ax[None, sl] + (py[:, None] - ay[None, sl]) * ex[None, sl] / np.where(
            ey[None, sl] == 0.0, 1.0, ey[None, sl]
        )
        crossings = np.sum(cond & (px[:, None] < xint), axis=1)
        inside ^= (crossings % 2) == 1
    d = np.sqrt(d2)
    return np.where(inside, d, -d)


@njit
def _polygon_sdf_nb(px, py, vx, vy):
    m = px.size
    n = vx.size
    out = np.empty(m)
    for p in range(m):
        x = px[p]
        y = py[p]
        best = np.inf
        inside = False
        for k in range(n):
            ax = vx[k]
            ay = vy[k]
            bx = vx[(k + 1) % n]
            by = vy[(k + 1) % n]
            ex = bx - ax
            ey = by - ay
            wx = x - ax
            wy = y - ay
            t = (wx * ex + wy * ey) / (ex * ex + ey * ey)
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
            dx = wx - t * ex
            dy = wy - t * ey
            d2 = dx * dx + dy * dy
            best = min(best, d2)
            if (ay > y) != (by > y):
                if x < ax + (y - ay) * ex / ey:
                    inside = not inside
        d = np.sqrt(best)
        out[p] = d if inside else -d
    return out


_polygon_sdf = _polygon_sdf_nb if USE_NUMBA else _polygon_sdf_np


# --------------------------------------------------------------------------
# shapes
# --------------------------------------------------------------------------


class Shape:
    """Base class; ``signed_distance`` is positive inside."""

    def signed_distance(self, X, Y):
        raise NotImplementedError

    def __call__(self, X, Y):
        return self.signed_distance(X, Y)


@dataclass(frozen=True)
class Circle(Shape):
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 0.5

    def signed_distance(self, X, Y):
        return self.radius - np.hypot(np.asarray(X) - self.center[0], np.asarray(Y) - self.center[1])


@dataclass(frozen=True)
class Ellipse(Shape):
    center: tuple[float, float] = (0.0, 0.0)
    a: float = 0.6
    b: float = 0.3
    root_iter: int = 100

    def signed_distance(self, X, Y):
        d, ok = self._distance(X, Y)
        if not np.all(ok):
            warnings.warn("ellipse projection: root solve failed, fell back to boundary sampling", RuntimeWarning)
        return d

    def _distance(self, X, Y):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        x = np.abs(X - self.center[0])
        y = np.abs(Y - self.center[1])
        a, b = self.a, self.b
        if a < b:
            x, y, a, b = y, x, b, a
        # closest point (r0 x / (u + r0 - 1), y / u) with u the root of the
        # decreasing function F(u) = (r0 z0 / (u + r0 - 1))^2 + (z1 / u)^2 - 1;
        # geometric bisection keeps relative accuracy when u is tiny
        r0 = (a / b) ** 2
        z0, z1 = x / a, y / b
        # below this the point is on the axis to within the distance's accuracy
        on_axis = z1 <= 1e-280
        lo = np.where(on_axis, 1.0, z1)
        hi = np.maximum(np.hypot(r0 * z0, z1), lo)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            for _ in range(self.root_iter):
                mid = np.sqrt(lo) * np.sqrt(hi)
                F = (r0 * z0 / (mid + (r0 - 1.0))) ** 2 + (z1 / mid) ** 2 - 1.0
                lo = np.where(F > 0, mid, lo)
                hi = np.where(F > 0, hi, mid)
            ubar = np.sqrt(lo) * np.sqrt(hi)
            px = r0 * x / (ubar + (r0 - 1.0))
            py = np.where(on_axis, 0.0, y / ubar)
            # on the major axis inside the evolute the foot point leaves the axis
            axis = on_axis & (x < (a * a - b * b) / a)
            px = np.where(axis, a * a * x / (a * a - b * b), px)
            py = np.where(axis, b * np.sqrt(np.clip(1.0 - (px / a) ** 2, 0.0, None)), py)
        axis_out = on_axis & ~axis
        px = np.where(axis_out, a, px)
        py = np.where(axis_out, 0.0, py)
        dist = np.hypot(x - px, y - py)
        ok = np.isfinite(dist) & (np.abs((px / a) ** 2 + (py / b) ** 2 - 1.0) <= 1e-9)
        if not np.all(ok):
            ts = np.linspace(0.0, 0.5 * np.pi, 20001)
            bad = ~ok
            dd = np.hypot(x[bad][..., None] - a * np.cos(ts), y[bad][..., None] - b * np.sin(ts))
            dist = np.array(dist, dtype=float)
            dist[bad] = dd.min(axis=-1)
        inside = z0 * z0 + z1 * z1 < 1.0
        return np.where(inside, dist, -dist), ok


@dataclass(frozen=True)
class Cross(Shape):
    """The coordinate axes; signed so that quadrants I and III are positive."""

    def signed_distance(self, X, Y):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        return np.sign(X * Y) * np.minimum(np.abs(X), np.abs(Y))


@dataclass(frozen=True)
class Polygon(Shape):
    vertices: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise ValueError("polygon needs an (n>=3, 2) vertex array")
        if np.allclose(v[0], v[-1]):
            v = v[:-1]
        object.__setattr__(self, "vertices", v)

    def signed_distance(self, X, Y):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        d = _polygon_sdf(
            np.ascontiguousarray(X.ravel()),
            np.ascontiguousarray(Y.ravel()),
            np.ascontiguousarray(self.vertices[:, 0]),
            np.ascontiguousarray(self.vertices[:, 1]),
        )
        return d.reshape(X.shape)

    def area(self) -> float:
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))

    def perimeter(self) -> float:
        return float(np.sum(np.linalg.norm(np.roll(self.vertices, -1, axis=0) - self.vertices, axis=1)))


@dataclass(frozen=True)
class PolygonSet(Shape):
    """Union of disjoint polygons."""

    polygons: tuple

    def signed_distance(self, X, Y):
        ds = [p.signed_distance(X, Y) for p in self.polygons]
        inside = np.any([d > 0 for d in ds], axis=0)
        dist = np.min([np.abs(d) for d in ds], axis=0)
        return np.where(inside, dist, -dist)

    def area(self) -> float:
        return sum(p.area() for p in self.polygons)


# --------------------------------------------------------------------------
# cusp dumbbell
# --------------------------------------------------------------------------


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)


@dataclass(frozen=True)
class CuspDumbbell(Shape):
    """Two mirror lobes whose tips p0 = (-L/2, 0), p1 = (L/2, 0) are cusps.

    The left lobe is the polynomial loop
        x(s) = -L/2 - T (1 - s^2),   y(s) = A s (1 - s^2)^3,   s in [-1, 1],
    smooth everywhere except at the tip s = +-1, where both branches arrive
    tangent to e1 (height ~ distance^3, so the curvature vanishes there).
    """

    L: float = 0.5
    T: float = 1.5
    A: float = 1.5
    lobe_vertices: int = 1024

    def __post_init__(self):
        if self.L <= 0 or self.T <= 0 or self.A <= 0:
            raise ValueError("cusp dumbbell parameters must be positive")

    @property
    def half_height(self) -> float:
        # max of s (1 - s^2)^3 is at s = 1/sqrt(7)
        s = 1.0 / np.sqrt(7.0)
        return self.A * s * (1.0 - s * s) ** 3

    def lobe_point(self, s):
        s = np.asarray(s, dtype=float)
        return -0.5 * self.L - self.T * (1.0 - s * s), self.A * s * (1.0 - s * s) ** 3

    def lobe_derivatives(self, s):
        """First and second derivatives of the left lobe parametrization."""
        s = np.asarray(s, dtype=float)
        dx = 2.0 * self.T * s
        ddx = 2.0 * self.T * np.ones_like(s)
        w = 1.0 - s * s
        dy = self.A * w * w * (1.0 - 7.0 * s * s)
        ddy = self.A * w * (42.0 * s ** 3 - 18.0 * s)
        return dx, dy, ddx, ddy

    def lobe_curves(self, n: int | None = None) -> list[np.ndarray]:
        """Both lobes as open arcs from tip to tip (endpoints coincide at the cusp)."""
        n = n or self.lobe_vertices
        s = np.linspace(-1.0, 1.0, n + 1)
        x, y = self.lobe_point(s)
        left = np.column_stack([x, y])
        right = np.column_stack([-x[::-1], y[::-1]])
        return [left, right]

    def polygons(self, n: int | None = None) -> PolygonSet:
        """Region E as two disjoint closed polygons (one per lobe)."""
        left, right = self.lobe_curves(n)
        return PolygonSet((Polygon(left[:-1]), Polygon(right[:-1])))

    def area(self) -> float:
        return 2.0 * 4.0 * self.A * self.T * 16.0 / 315.0

    def lobe_elastica(self) -> float:
        """Integral of 1 + kappa^2 over the smooth part of one lobe (quadrature)."""

        def integrand(s):
            dx, dy, ddx, ddy = self.lobe_derivatives(s)
            speed = np.hypot(dx, dy)
            kappa = (dx * ddy - dy * ddx) / speed ** 3
            return (1.0 + kappa * kappa) * speed

        val, _ = integrate.quad(integrand, -1.0, 1.0, epsabs=1e-12, epsrel=1e-12, limit=200)
        return val

    def limit_energy(self) -> float:
        """Elastica of the two lobes plus the 2L contribution of the collapsed tube."""
        return 2.0 * self.lobe_elastica() + 2.0 * self.L

    def signed_distance(self, X, Y):
        return self.polygons().signed_distance(X, Y)


@dataclass(frozen=True)
class TubeApproximant(Shape):
    """Smooth set E_h: the cusps replaced by a flat tube of height 1/h."""

    h: int
    base: CuspDumbbell = CuspDumbbell()
    blend: tuple[float, float] = (0.6, 0.8)

    def __post_init__(self):
        if self.h < 1:
            raise ValueError("h_index must be >= 1")
        if 1.0 / self.h >= 2.0 * self.base.half_height:
            raise ValueError(
                f"tube height 1/{self.h} is not smaller than the lobe height {2 * self.base.half_height:.3f}"
            )

    def boundary(self) -> np.ndarray:
        b = self.base
        c = 0.5 / self.h
        n = b.lobe_vertices
        s = np.linspace(-1.0, 1.0, n + 1)
        x, y = b.lobe_point(s)
        # y -> sign(s) sqrt(y^2 + c^2) near the tip; C^2 blend away from it
        chi = _smoothstep((np.abs(s) - self.blend[0]) / (self.blend[1] - self.blend[0]))
        lifted = np.sign(s) * np.sqrt(y * y + c * c)
        y = y + (lifted - y) * chi
        left = np.column_stack([x, y])
        right = np.column_stack([-x[::-1], y[::-1]])
        # tube sides sampled at the lobe spacing near the tip
        ds = float(np.hypot(*(left[-1] - left[-2])))
        m = max(2, int(np.ceil(b.L / ds)))
        t = np.linspace(-0.5 * b.L, 0.5 * b.L, m + 1)[1:-1]
        top = np.column_stack([t, np.full_like(t, c)])
        bottom = np.column_stack([t[::-1], np.full_like(t, -c)])
        return np.vstack([left, top, right, bottom])

    def polygon(self) -> Polygon:
        return Polygon(self.boundary())

    def signed_distance(self, X, Y):
        return self.polygon().signed_distance(X, Y)


def cusp_approximant(L: float, h_index: int, **lobe) -> Polygon:
    """Polygonal boundary of the smooth approximant E_h of the cusp dumbbell."""
    return TubeApproximant(h_index, CuspDumbbell(L=L, **lobe)).polygon()


def signed_distance(shape: Shape, X, Y):
    return shape.signed_distance(X, Y)


def recovery_field(shape: Shape, eps: float, grid: Grid2D) -> ScalarField2D:
    """u(x) = q(d(x)/eps) with d the signed distance to the shape."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not is_resolved(grid, eps):
        warnings.warn(f"recovery field: eps={eps} under-resolved on h={max(grid.hx, grid.hy)}", RuntimeWarning)
    X, Y = grid.mesh()
    d = shape.signed_distance(X, Y)
    q, _ = optimal_profile(d / eps)
    return ScalarField2D(grid, q)
