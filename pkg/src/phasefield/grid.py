"""Uniform node-centered grids, difference operators and the PF2D file format."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import kernels

MAGIC = "PF2D 1"
MIN_NODES = 8


class BC(str, enum.Enum):
    NEUMANN = "neumann"
    PERIODIC = "periodic"
    DIRICHLET1 = "dirichlet1"


class FieldFormatError(ValueError):
    """Malformed PF2D snapshot."""


@dataclass(frozen=True)
class Grid2D:
    nx: int
    ny: int
    hx: float
    hy: float
    origin: tuple[float, float] = (0.0, 0.0)
    bc: BC = BC.NEUMANN

    def __post_init__(self):
        if self.nx < MIN_NODES or self.ny < MIN_NODES:
            raise ValueError(f"grid needs at least {MIN_NODES} nodes per side, got {self.nx}x{self.ny}")
        if not (self.hx > 0 and self.hy > 0):
            raise ValueError("grid spacings must be positive")
        object.__setattr__(self, "bc", BC(self.bc))
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def periodic(self) -> bool:
        return self.bc is BC.PERIODIC

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def x(self) -> np.ndarray:
        return self.origin[0] + self.hx * np.arange(self.nx)

    @property
    def y(self) -> np.ndarray:
        return self.origin[1] + self.hy * np.arange(self.ny)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates as two ``(ny, nx)`` arrays."""
        return np.meshgrid(self.x, self.y)

    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights (without the cell area)."""
        wx = np.ones(self.nx)
        wy = np.ones(self.ny)
        if not self.periodic:
            wx[[0, -1]] = 0.5
            wy[[0, -1]] = 0.5
        return np.outer(wy, wx)

    def integrate(self, density: np.ndarray) -> float:
        return float(np.sum(self.weights() * density) * self.cell_area)

    def boundary_mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[0, :] = m[-1, :] = m[:, 0] = m[:, -1] = True
        return m

    def interior_mask(self, ring: int = 1) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[ring:-ring, ring:-ring] = True
        return m

    @property
    def extent(self) -> tuple[float, float, float, float]:
        x0, y0 = self.origin
        if self.periodic:
            return (x0, x0 + self.nx * self.hx, y0, y0 + self.ny * self.hy)
        return (x0, x0 + (self.nx - 1) * self.hx, y0, y0 + (self.ny - 1) * self.hy)


def make_grid(nx: int, ny: int, extent, bc=BC.NEUMANN) -> Grid2D:
    """Build a grid over ``extent = (xmin, xmax, ymin, ymax)``.

    Non-periodic grids put nodes on both ends, so ``hx = width / (nx - 1)``.
    Periodic grids drop the duplicated end node: ``hx = width / nx``.
    """
    xmin, xmax, ymin, ymax = map(float, extent)
    width, height = xmax - xmin, ymax - ymin
    if not (width > 0 and height > 0):
        raise ValueError(f"extent must have positive side lengths, got {width} x {height}")
    if nx < MIN_NODES or ny < MIN_NODES:
        raise ValueError(f"grid needs at least {MIN_NODES} nodes per side, got {nx}x{ny}")
    bc = BC(bc)
    if bc is BC.PERIODIC:
        hx, hy = width / nx, height / ny
    else:
        hx, hy = width / (nx - 1), height / (ny - 1)
    return Grid2D(int(nx), int(ny), hx, hy, (xmin, ymin), bc)


@dataclass(frozen=True)
class ScalarField2D:
    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.shape != self.grid.shape:
            if v.size != self.grid.nx * self.grid.ny:
                raise ValueError(f"expected {self.grid.nx * self.grid.ny} values, got {v.size}")
            v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid2D, func) -> ScalarField2D:
        X, Y = grid.mesh()
        return cls(grid, func(X, Y))

    def with_values(self, values) -> ScalarField2D:
        return ScalarField2D(self.grid, values)


@dataclass(frozen=True)
class VectorField2D:
    grid: Grid2D
    x: np.ndarray
    y: np.ndarray

    def norm(self) -> np.ndarray:
        return np.hypot(self.x, self.y)


@dataclass(frozen=True)
class MatrixField2D:
    """Symmetric 2x2 matrix per node, stored by its three distinct entries."""

    grid: Grid2D
    xx: np.ndarray
    yy: np.ndarray
    xy: np.ndarray

    def trace(self) -> np.ndarray:
        return self.xx + self.yy

    def as_array(self) -> np.ndarray:
        """Entries as an ``(ny, nx, 2, 2)`` array."""
        out = np.empty(self.xx.shape + (2, 2))
        out[..., 0, 0] = self.xx
        out[..., 1, 1] = self.yy
        out[..., 0, 1] = out[..., 1, 0] = self.xy
        return out


def gradient(u: ScalarField2D) -> VectorField2D:
    """Central differences; one-sided second order on non-periodic edges."""
    g = u.grid
    ux, uy = kernels.gradient(u.values, g.hx, g.hy, g.periodic)
    return VectorField2D(g, ux, uy)


def hessian(u: ScalarField2D) -> MatrixField2D:
    """Compact second differences with reflected ghosts on non-periodic edges."""
    g = u.grid
    uxx, uyy, uxy = kernels.hessian(u.values, g.hx, g.hy, g.periodic)
    return MatrixField2D(g, uxx, uyy, uxy)


def laplacian(u: ScalarField2D) -> np.ndarray:
    g = u.grid
    return kernels.laplacian(u.values, g.hx, g.hy, g.periodic)


def grad_sq(u: ScalarField2D) -> np.ndarray:
    """Nodal |grad u|^2 as the mean of squared one-sided differences.

    With trapezoidal weights this sums every grid edge exactly once, so the
    derivative of the discrete Dirichlet energy is the compact Laplacian.
    """
    g = u.grid
    return kernels.grad_sq(u.values, g.hx, g.hy, g.periodic)


# --------------------------------------------------------------------------
# sparse operators (same stencils as the kernels, used by solvers/adjoints)
# --------------------------------------------------------------------------


def _second_1d(n, h, periodic):
    main = -2.0 * np.ones(n)
    up = np.ones(n - 1)
    lo = np.ones(n - 1)
    if not periodic:
        up[0] = 2.0
        lo[-1] = 2.0
    m = sp.diags([lo, main, up], [-1, 0, 1], shape=(n, n), format="lil")
    if periodic:
        m[0, n - 1] = 1.0
        m[n - 1, 0] = 1.0
    return sp.csr_matrix(m) / (h * h)


def _central_1d(n, h, periodic):
    """Central first difference with the reflected ghost (zero at the ends)."""
    m = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [-1, 1], shape=(n, n), format="lil")
    if periodic:
        m[0, n - 1] = -1.0
        m[n - 1, 0] = 1.0
    else:
        m[0, 1] = 0.0
        m[n - 1, n - 2] = 0.0
    return sp.csr_matrix(m) / (2.0 * h)


def _gradient_1d(n, h, periodic):
    """Matches ``kernels.gradient``: one-sided second order at the ends."""
    if periodic:
        return _central_1d(n, h, True)
    m = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [-1, 1], shape=(n, n), format="lil")
    m[0, 0], m[0, 1], m[0, 2] = -3.0, 4.0, -1.0
    m[n - 1, n - 1], m[n - 1, n - 2], m[n - 1, n - 3] = 3.0, -4.0, 1.0
    return sp.csr_matrix(m) / (2.0 * h)


def laplacian_matrix(grid: Grid2D) -> sp.csr_matrix:
    Ix, Iy = sp.identity(grid.nx), sp.identity(grid.ny)
    Dxx = sp.kron(Iy, _second_1d(grid.nx, grid.hx, grid.periodic))
    Dyy = sp.kron(_second_1d(grid.ny, grid.hy, grid.periodic), Ix)
    return sp.csr_matrix(Dxx + Dyy)


def hessian_matrices(grid: Grid2D):
    """Sparse (Dxx, Dyy, Dxy) acting on row-major flattened values."""
    Ix, Iy = sp.identity(grid.nx), sp.identity(grid.ny)
    Dxx = sp.csr_matrix(sp.kron(Iy, _second_1d(grid.nx, grid.hx, grid.periodic)))
    Dyy = sp.csr_matrix(sp.kron(_second_1d(grid.ny, grid.hy, grid.periodic), Ix))
    Dxy = sp.csr_matrix(
        sp.kron(_central_1d(grid.ny, grid.hy, grid.periodic), _central_1d(grid.nx, grid.hx, grid.periodic))
    )
    return Dxx, Dyy, Dxy


def gradient_matrices(grid: Grid2D):
    Ix, Iy = sp.identity(grid.nx), sp.identity(grid.ny)
    Gx = sp.csr_matrix(sp.kron(Iy, _gradient_1d(grid.nx, grid.hx, grid.periodic)))
    Gy = sp.csr_matrix(sp.kron(_gradient_1d(grid.ny, grid.hy, grid.periodic), Ix))
    return Gx, Gy


# --------------------------------------------------------------------------
# PF2D snapshots
# --------------------------------------------------------------------------


def write_field(u: ScalarField2D, path, comment: str | None = None) -> None:
    g = u.grid
    lines = [MAGIC]
    if comment:
        lines.append("# " + comment.replace("\n", " "))
    lines += [
        f"nx={g.nx}",
        f"ny={g.ny}",
        f"hx={g.hx!r}",
        f"hy={g.hy!r}",
        f"ox={g.origin[0]!r}",
        f"oy={g.origin[1]!r}",
        f"bc={g.bc.value}",
        "data",
    ]
    header = ("\n".join(lines) + "\n").encode("ascii")
    payload = np.ascontiguousarray(u.values, dtype="<f8").tobytes()
    Path(path).write_bytes(header + payload)


def read_field_header(path) -> tuple[dict, str | None, int]:
    """Parse the header; return (keys, comment, payload offset)."""
    raw = Path(path).read_bytes()
    pos = 0
    keys: dict[str, str] = {}
    comment = None
    first = True
    while True:
        end = raw.find(b"\n", pos)
        if end < 0:
            raise FieldFormatError("unterminated header")
        try:
            line = raw[pos:end].decode("ascii")
        except UnicodeDecodeError as exc:
            raise FieldFormatError("non-ascii header") from exc
        pos = end + 1
        if first:
            if line != MAGIC:
                raise FieldFormatError(f"bad magic {line[:16]!r}, expected {MAGIC!r}")
            first = False
            continue
        if line == "data":
            break
        if line.startswith("#"):
            comment = line[1:].strip()
            continue
        if "=" not in line:
            raise FieldFormatError(f"malformed header line {line!r}")
        k, v = line.split("=", 1)
        keys[k.strip()] = v.strip()
    missing = {"nx", "ny", "hx", "hy", "ox", "oy", "bc"} - keys.keys()
    if missing:
        raise FieldFormatError(f"header missing {sorted(missing)}")
    return keys, comment, pos


def read_field(path) -> ScalarField2D:
    keys, _, pos = read_field_header(path)
    raw = Path(path).read_bytes()[pos:]
    try:
        grid = Grid2D(
            int(keys["nx"]),
            int(keys["ny"]),
            float(keys["hx"]),
            float(keys["hy"]),
            (float(keys["ox"]), float(keys["oy"])),
            BC(keys["bc"]),
        )
    except ValueError as exc:
        raise FieldFormatError(str(exc)) from exc
    n = grid.nx * grid.ny
    if len(raw) != 8 * n:
        raise FieldFormatError(f"payload holds {len(raw) // 8} values, header declares {n}")
    values = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(grid.shape)
    return ScalarField2D(grid, values)

