"""Finite-difference kernels on node-centered grids.

Every kernel comes in two flavours: a vectorized numpy version (``*_np``)
and a loop version compiled with numba (``*_nb``). The public names
(``laplacian``, ``hessian``, ...) point at one or the other depending on
``PF_USE_NUMBA``. Arrays are indexed ``[iy, ix]``.

Boundary handling is passed as a flag: ``periodic=False`` means even
reflection of ghost values (u[-1] = u[1]), which is how Neumann and
clamped-to-one boundaries are realized.
"""

import numpy as np

from ._accel import USE_NUMBA, njit


def _pad(u, periodic):
    return np.pad(u, 1, mode="wrap" if periodic else "reflect")


# --------------------------------------------------------------------------
# numpy path
# --------------------------------------------------------------------------


def laplacian_np(u, hx, hy, periodic):
    p = _pad(u, periodic)
    return (p[1:-1, 2:] - 2.0 * u + p[1:-1, :-2]) / (hx * hx) + (
        p[2:, 1:-1] - 2.0 * u + p[:-2, 1:-1]
    ) / (hy * hy)


def hessian_np(u, hx, hy, periodic):
    p = _pad(u, periodic)
    uxx = (p[1:-1, 2:] - 2.0 * u + p[1:-1, :-2]) / (hx * hx)
    uyy = (p[2:, 1:-1] - 2.0 * u + p[:-2, 1:-1]) / (hy * hy)
    uxy = (p[2:, 2:] - p[2:, :-2] - p[:-2, 2:] + p[:-2, :-2]) / (4.0 * hx * hy)
    return uxx, uyy, uxy


def _diff_axis_np(u, h, axis, periodic):
    if periodic:
        return (np.roll(u, -1, axis=axis) - np.roll(u, 1, axis=axis)) / (2.0 * h)
    v = np.moveaxis(u, axis, -1)
    d = np.empty_like(v)
    d[..., 1:-1] = (v[..., 2:] - v[..., :-2]) / (2.0 * h)
    d[..., 0] = (-3.0 * v[..., 0] + 4.0 * v[..., 1] - v[..., 2]) / (2.0 * h)
    d[..., -1] = (3.0 * v[..., -1] - 4.0 * v[..., -2] + v[..., -3]) / (2.0 * h)
    return np.moveaxis(d, -1, axis)


def gradient_np(u, hx, hy, periodic):
    return _diff_axis_np(u, hx, 1, periodic), _diff_axis_np(u, hy, 0, periodic)


def grad_sq_np(u, hx, hy, periodic):
    p = _pad(u, periodic)
    fx = (p[1:-1, 2:] - u) / hx
    bx = (u - p[1:-1, :-2]) / hx
    fy = (p[2:, 1:-1] - u) / hy
    by = (u - p[:-2, 1:-1]) / hy
    return 0.5 * (fx * fx + bx * bx) + 0.5 * (fy * fy + by * by)


def ac_steps_np(u, hx, hy, periodic, pinned, eps, dt, nsteps):
    u = u.copy()
    inv_e2 = 1.0 / (eps * eps)
    for _ in range(nsteps):
        du = laplacian_np(u, hx, hy, periodic) - (u * u * u - u) * inv_e2
        if pinned:
            du[0, :] = 0.0
            du[-1, :] = 0.0
            du[:, 0] = 0.0
            du[:, -1] = 0.0
        u += dt * du
    return u


# --------------------------------------------------------------------------
# numba path
# --------------------------------------------------------------------------


@njit
def _ix(i, n, periodic):
    if i < 0:
        return i + n if periodic else -i
    if i >= n:
        return i - n if periodic else 2 * n - 2 - i
    return i


@njit
def laplacian_nb(u, hx, hy, periodic):
    ny, nx = u.shape
    out = np.empty_like(u)
    cx = 1.0 / (hx * hx)
    cy = 1.0 / (hy * hy)
    for j in range(ny):
        jm = _ix(j - 1, ny, periodic)
        jp = _ix(j + 1, ny, periodic)
        for i in range(nx):
            im = _ix(i - 1, nx, periodic)
            ip = _ix(i + 1, nx, periodic)
            c = u[j, i]
            out[j, i] = (u[j, ip] - 2.0 * c + u[j, im]) * cx + (
                u[jp, i] - 2.0 * c + u[jm, i]
            ) * cy
    return out


@njit
def hessian_nb(u, hx, hy, periodic):
    ny, nx = u.shape
    uxx = np.empty_like(u)
    uyy = np.empty_like(u)
    uxy = np.empty_like(u)
    cx = 1.0 / (hx * hx)
    cy = 1.0 / (hy * hy)
    cxy = 1.0 / (4.0 * hx * hy)
    for j in range(ny):
        jm = _ix(j - 1, ny, periodic)
        jp = _ix(j + 1, ny, periodic)
        for i in range(nx):
            im = _ix(i - 1, nx, periodic)
            ip = _ix(i + 1, nx, periodic)
            c = u[j, i]
            uxx[j, i] = (u[j, ip] - 2.0 * c + u[j, im]) * cx
            uyy[j, i] = (u[jp, i] - 2.0 * c + u[jm, i]) * cy
            uxy[j, i] = (u[jp, ip] - u[jp, im] - u[jm, ip] + u[jm, im]) * cxy
    return uxx, uyy, uxy


@njit
def gradient_nb(u, hx, hy, periodic):
    ny, nx = u.shape
    ux = np.empty_like(u)
    uy = np.empty_like(u)
    for j in range(ny):
        for i in range(nx):
            if periodic or (0 < i < nx - 1):
                ux[j, i] = (u[j, (i + 1) % nx] - u[j, (i - 1) % nx]) / (2.0 * hx)
            elif i == 0:
                ux[j, i] = (-3.0 * u[j, 0] + 4.0 * u[j, 1] - u[j, 2]) / (2.0 * hx)
            else:
                ux[j, i] = (3.0 * u[j, i] - 4.0 * u[j, i - 1] + u[j, i - 2]) / (2.0 * hx)
            if periodic or (0 < j < ny - 1):
                uy[j, i] = (u[(j + 1) % ny, i] - u[(j - 1) % ny, i]) / (2.0 * hy)
            elif j == 0:
                uy[j, i] = (-3.0 * u[0, i] + 4.0 * u[1, i] - u[2, i]) / (2.0 * hy)
            else:
                uy[j, i] = (3.0 * u[j, i] - 4.0 * u[j - 1, i] + u[j - 2, i]) / (2.0 * hy)
    return ux, uy


@njit
def grad_sq_nb(u, hx, hy, periodic):
    ny, nx = u.shape
    out = np.empty_like(u)
    for j in range(ny):
        jm = _ix(j - 1, ny, periodic)
        jp = _ix(j + 1, ny, periodic)
        for i in range(nx):
            im = _ix(i - 1, nx, periodic)
            ip = _ix(i + 1, nx, periodic)
            c = u[j, i]
            fx = (u[j, ip] - c) / hx
            bx = (c - u[j, im]) / hx
            fy = (u[jp, i] - c) / hy
            by = (c - u[jm, i]) / hy
            out[j, i] = 0.5 * (fx * fx + bx * bx) + 0.5 * (fy * fy + by * by)
    return out


@njit
def ac_steps_nb(u, hx, hy, periodic, pinned, eps, dt, nsteps):
    ny, nx = u.shape
    a = u.copy()
    b = np.empty_like(u)
    inv_e2 = 1.0 / (eps * eps)
    cx = 1.0 / (hx * hx)
    cy = 1.0 / (hy * hy)
    for _ in range(nsteps):
        for j in range(ny):
            jm = _ix(j - 1, ny, periodic)
            jp = _ix(j + 1, ny, periodic)
            for i in range(nx):
                c = a[j, i]
                if pinned and (i == 0 or j == 0 or i == nx - 1 or j == ny - 1):
                    b[j, i] = c
                    continue
                im = _ix(i - 1, nx, periodic)
                ip = _ix(i + 1, nx, periodic)
                lap = (a[j, ip] - 2.0 * c + a[j, im]) * cx + (
                    a[jp, i] - 2.0 * c + a[jm, i]
                ) * cy
                b[j, i] = c + dt * (lap - (c * c * c - c) * inv_e2)
        a, b = b, a
    return a


# --------------------------------------------------------------------------
# marching squares
# --------------------------------------------------------------------------
# Edge ids: horizontal edge (j, i)-(j, i+1) -> 2*(j*nx + i);
#           vertical edge   (j, i)-(j+1, i) -> 2*(j*nx + i) + 1.
# Case table: bit0 = (j,i), bit1 = (j,i+1), bit2 = (j+1,i+1), bit3 = (j+1,i);
# a bit is set when the node value is above the level.


def _case_pairs():
    # cell edges: 0 bottom, 1 right, 2 top, 3 left
    table = {
        0: (),
        15: (),
        1: ((3, 0),),
        2: ((0, 1),),
        3: ((3, 1),),
        4: ((1, 2),),
        6: ((0, 2),),
        7: ((3, 2),),
        8: ((2, 3),),
        9: ((2, 0),),
        11: ((2, 1),),
        12: ((1, 3),),
        13: ((1, 0),),
        14: ((0, 3),),
    }
    return table


_CASES = _case_pairs()


def _cell_edge_ids(j, i, nx):
    return (
        2 * (j * nx + i),
        2 * (j * nx + i + 1) + 1,
        2 * ((j + 1) * nx + i),
        2 * (j * nx + i) + 1,
    )


def marching_squares_np(v, level):
    """Return (edge_a, edge_b) arrays of crossing-edge ids, one row per segment.

    Saddle cells (cases 5 and 10) are split according to the average of the
    four corner values.
    """
    ny, nx = v.shape
    above = v > level
    c = (
        above[:-1, :-1].astype(np.int64)
        | (above[:-1, 1:].astype(np.int64) << 1)
        | (above[1:, 1:].astype(np.int64) << 2)
        | (above[1:, :-1].astype(np.int64) << 3)
    )
    centre_above = (v[:-1, :-1] + v[:-1, 1:] + v[1:, 1:] + v[1:, :-1]) * 0.25 > level
    ea = []
    eb = []
    jj, ii = np.nonzero((c != 0) & (c != 15))
    for j, i in zip(jj.tolist(), ii.tolist()):
        case = int(c[j, i])
        ids = _cell_edge_ids(j, i, nx)
        if case == 5 or case == 10:
            # isolate corners 1 and 3, or corners 0 and 2
            if (case == 5) == bool(centre_above[j, i]):
                pairs = ((0, 1), (2, 3))
            else:
                pairs = ((3, 0), (1, 2))
        else:
            pairs = _CASES[case]
        for a, b in pairs:
            ea.append(ids[a])
            eb.append(ids[b])
    return np.array(ea, dtype=np.int64), np.array(eb, dtype=np.int64)


@njit
def marching_squares_nb(v, level):
    ny, nx = v.shape
    table = np.array(
        [
            [-1, -1, -1, -1],
            [3, 0, -1, -1],
            [0, 1, -1, -1],
            [3, 1, -1, -1],
            [1, 2, -1, -1],
            [-1, -1, -1, -1],
            [0, 2, -1, -1],
            [3, 2, -1, -1],
            [2, 3, -1, -1],
            [2, 0, -1, -1],
            [-1, -1, -1, -1],
            [2, 1, -1, -1],
            [1, 3, -1, -1],
            [1, 0, -1, -1],
            [0, 3, -1, -1],
            [-1, -1, -1, -1],
        ]
    )
    ea = np.empty(2 * (nx - 1) * (ny - 1), dtype=np.int64)
    eb = np.empty(2 * (nx - 1) * (ny - 1), dtype=np.int64)
    m = 0
    ids = np.empty(4, dtype=np.int64)
    for j in range(ny - 1):
        for i in range(nx - 1):
            case = 0
            if v[j, i] > level:
                case |= 1
            if v[j, i + 1] > level:
                case |= 2
            if v[j + 1, i + 1] > level:
                case |= 4
            if v[j + 1, i] > level:
                case |= 8
            if case == 0 or case == 15:
                continue
            ids[0] = 2 * (j * nx + i)
            ids[1] = 2 * (j * nx + i + 1) + 1
            ids[2] = 2 * ((j + 1) * nx + i)
            ids[3] = 2 * (j * nx + i) + 1
            if case == 5 or case == 10:
                centre = 0.25 * (v[j, i] + v[j, i + 1] + v[j + 1, i + 1] + v[j + 1, i])
                if (case == 5) == (centre > level):
                    p0, p1, p2, p3 = 0, 1, 2, 3
                else:
                    p0, p1, p2, p3 = 3, 0, 1, 2
                ea[m] = ids[p0]
                eb[m] = ids[p1]
                m += 1
                ea[m] = ids[p2]
                eb[m] = ids[p3]
                m += 1
            else:
                ea[m] = ids[table[case, 0]]
                eb[m] = ids[table[case, 1]]
                m += 1
    return ea[:m], eb[:m]


if USE_NUMBA:
    laplacian = laplacian_nb
    hessian = hessian_nb
    gradient = gradient_nb
    grad_sq = grad_sq_nb
    ac_steps = ac_steps_nb
    marching_squares = marching_squares_nb
else:
    laplacian = laplacian_np
    hessian = hessian_np
    gradient = gradient_np
    grad_sq = grad_sq_np
    ac_steps = ac_steps_np
    marching_squares = marching_squares_np
