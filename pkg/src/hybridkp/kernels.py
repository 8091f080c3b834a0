"""Hot numeric kernels, each in two flavours.

``*_loops`` functions are explicit-loop kernels compiled with numba when it is
available; ``*_numpy`` functions are vectorised numpy equivalents.  The public
names (``render_star``, ``local_maxima``, ``svd3``, ``geodesic_angles``) bind to
one or the other at import time, see :mod:`hybridkp._accel`.
"""
import math

import numpy as np

from ._accel import HAS_NUMBA, njit

# Jacobi stops once every column pair is orthogonal to this relative tolerance.
JACOBI_TOL = 1e-14
JACOBI_MAX_SWEEPS = 60


# --------------------------------------------------------------------------
# Gaussian StarMap rendering


# exp(-x) is exactly 0.0 in double precision for x >= 746, so pixels that far
# out (in units of 2 sigma^2) can be skipped without changing a single bit.
STAR_CUTOFF = 746.0


def star_radius(sigma):
    return int(math.sqrt(2.0 * STAR_CUTOFF) * sigma) + 1


@njit(cache=True)
def render_star_loops(rows, cols, height, width, sigma):
    out = np.zeros((height, width))
    inv = 1.0 / (2.0 * sigma * sigma)
    reach = int(math.sqrt(2.0 * STAR_CUTOFF) * sigma) + 1
    for k in range(rows.shape[0]):
        r0 = rows[k]
        c0 = cols[k]
        for r in range(max(r0 - reach, 0), min(r0 + reach + 1, height)):
            dr = (r - r0) * (r - r0)
            for c in range(max(c0 - reach, 0), min(c0 + reach + 1, width)):
                g = math.exp(-(dr + (c - c0) * (c - c0)) * inv)
                if g > out[r, c]:
                    out[r, c] = g
    return out


def render_star_numpy(rows, cols, height, width, sigma):
    out = np.zeros((height, width))
    inv = 1.0 / (2.0 * sigma * sigma)
    reach = star_radius(sigma)
    for r0, c0 in zip(np.asarray(rows).tolist(), np.asarray(cols).tolist()):
        r_lo, r_hi = max(r0 - reach, 0), min(r0 + reach + 1, height)
        c_lo, c_hi = max(c0 - reach, 0), min(c0 + reach + 1, width)
        dr = (np.arange(r_lo, r_hi, dtype=np.float64) - r0)[:, None] ** 2
        dc = (np.arange(c_lo, c_hi, dtype=np.float64) - c0)[None, :] ** 2
        window = out[r_lo:r_hi, c_lo:c_hi]
        np.maximum(window, np.exp(-(dr + dc) * inv), out=window)
    return out


# --------------------------------------------------------------------------
# 8-ring local maxima

# Row-major order of the 8 neighbours; the first four precede the centre.
_OFFSETS = np.array(
    [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)],
    dtype=np.int64,
)


@njit(cache=True)
def local_maxima_loops(grid, threshold):
    height, width = grid.shape
    found = np.empty((height * width, 2), dtype=np.int64)
    n = 0
    for r in range(height):
        for c in range(width):
            v = grid[r, c]
            if not v > threshold:
                continue
            ok = True
            strict = False
            for k in range(8):
                rr = r + _OFFSETS[k, 0]
                cc = c + _OFFSETS[k, 1]
                if rr < 0 or rr >= height or cc < 0 or cc >= width:
                    continue
                nv = grid[rr, cc]
                if nv > v:
                    ok = False
                    break
                if nv < v:
                    strict = True
                elif k < 4:
                    # equal earlier neighbour owns the plateau
                    ok = False
                    break
            if ok and strict:
                found[n, 0] = r
                found[n, 1] = c
                n += 1
    return found[:n].copy()


def local_maxima_numpy(grid, threshold):
    grid = np.asarray(grid, dtype=np.float64)
    height, width = grid.shape
    low = np.pad(grid, 1, constant_values=-np.inf)
    high = np.pad(grid, 1, constant_values=np.inf)
    nan = np.pad(grid, 1, constant_values=np.nan)
    ok = grid > threshold
    strict = np.zeros_like(ok)
    for k, (dr, dc) in enumerate(_OFFSETS):
        sl = (slice(1 + dr, 1 + dr + height), slice(1 + dc, 1 + dc + width))
        ok &= grid >= low[sl]
        strict |= grid > high[sl]
        if k < 4:
            ok &= ~(grid == nan[sl])
    r, c = np.nonzero(ok & strict)
    return np.stack([r, c], axis=1).astype(np.int64)


# --------------------------------------------------------------------------
# 3x3 SVD by one-sided (Hestenes) Jacobi


@njit(cache=True)
def _complete_basis(u):
    # columns 0..k of u are orthonormal where valid; fill the rest
    a = u[:, 0]
    if abs(a[0]) < 0.9:
        e = np.array([1.0, 0.0, 0.0])
    else:
        e = np.array([0.0, 1.0, 0.0])
    b = e - (e[0] * a[0] + e[1] * a[1] + e[2] * a[2]) * a
    return b / math.sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2])


@njit(cache=True)
def svd3_loops(m):
    # work on m / max|m| so Gram entries neither overflow nor underflow
    peak = 0.0
    for i in range(3):
        for j in range(3):
            peak = max(peak, abs(m[i, j]))
    if peak == 0.0:
        return np.eye(3), np.zeros(3), np.eye(3)
    a = m / peak
    v = np.eye(3)
    for _ in range(JACOBI_MAX_SWEEPS):
        rotated = False
        for p in range(2):
            for q in range(p + 1, 3):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for i in range(3):
                    alpha += a[i, p] * a[i, p]
                    beta += a[i, q] * a[i, q]
                    gamma += a[i, p] * a[i, q]
                if abs(gamma) <= JACOBI_TOL * math.sqrt(alpha * beta) or gamma == 0.0:
                    continue
                rotated = True
                # tan of the rotation angle, written without forming
                # (beta - alpha) / (2 gamma), which overflows for tiny gamma
                d = beta - alpha
                sgn = 1.0 if d >= 0.0 else -1.0
                t = sgn * 2.0 * gamma / (abs(d) + math.hypot(d, 2.0 * gamma))
                cs = 1.0 / math.sqrt(1.0 + t * t)
                sn = cs * t
                for i in range(3):
                    ap = a[i, p]
                    aq = a[i, q]
                    a[i, p] = cs * ap - sn * aq
                    a[i, q] = sn * ap + cs * aq
                    vp = v[i, p]
                    vq = v[i, q]
                    v[i, p] = cs * vp - sn * vq
                    v[i, q] = sn * vp + cs * vq
        if not rotated:
            break

    norms = np.empty(3)
    for k in range(3):
        norms[k] = math.sqrt(a[0, k] ** 2 + a[1, k] ** 2 + a[2, k] ** 2)
    order = np.argsort(-norms)
    s = norms[order]
    a = a[:, order]
    v = v[:, order]

    u = np.zeros((3, 3))
    u[:, 0] = a[:, 0] / s[0]
    if s[1] > 1e-15 * s[0]:
        col = a[:, 1] / s[1]
        d = col[0] * u[0, 0] + col[1] * u[1, 0] + col[2] * u[2, 0]
        col = col - d * u[:, 0]
        u[:, 1] = col / math.sqrt(col[0] ** 2 + col[1] ** 2 + col[2] ** 2)
    else:
        u[:, 1] = _complete_basis(u)
    c0 = u[1, 0] * u[2, 1] - u[2, 0] * u[1, 1]
    c1 = u[2, 0] * u[0, 1] - u[0, 0] * u[2, 1]
    c2 = u[0, 0] * u[1, 1] - u[1, 0] * u[0, 1]
    if c0 * a[0, 2] + c1 * a[1, 2] + c2 * a[2, 2] < 0.0:
        c0, c1, c2 = -c0, -c1, -c2
    u[0, 2] = c0
    u[1, 2] = c1
    u[2, 2] = c2
    return u, s * peak, v.T.copy()


def svd3_numpy(m):
    a = np.array(m, dtype=np.float64)
    peak = float(np.abs(a).max())
    if peak == 0.0:
        return np.eye(3), np.zeros(3), np.eye(3)
    a /= peak
    v = np.eye(3)
    for _ in range(JACOBI_MAX_SWEEPS):
        rotated = False
        for p, q in ((0, 1), (0, 2), (1, 2)):
            gram = a[:, [p, q]].T @ a[:, [p, q]]
            alpha, beta, gamma = float(gram[0, 0]), float(gram[1, 1]), float(gram[0, 1])
            if gamma == 0.0 or abs(gamma) <= JACOBI_TOL * math.sqrt(alpha * beta):
                continue
            rotated = True
            d = beta - alpha
            t = (1.0 if d >= 0.0 else -1.0) * 2.0 * gamma / (abs(d) + math.hypot(d, 2.0 * gamma))
            cs = 1.0 / np.sqrt(1.0 + t * t)
            rot = np.array([[cs, cs * t], [-cs * t, cs]])
            a[:, [p, q]] = a[:, [p, q]] @ rot
            v[:, [p, q]] = v[:, [p, q]] @ rot
        if not rotated:
            break

    norms = np.linalg.norm(a, axis=0)
    order = np.argsort(-norms, kind="stable")
    s, a, v = norms[order], a[:, order], v[:, order]
    u = np.zeros((3, 3))
    u[:, 0] = a[:, 0] / s[0]
    if s[1] > 1e-15 * s[0]:
        col = a[:, 1] / s[1]
        col -= (col @ u[:, 0]) * u[:, 0]
        u[:, 1] = col / np.linalg.norm(col)
    else:
        e = np.array([1.0, 0.0, 0.0]) if abs(u[0, 0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        b = e - (e @ u[:, 0]) * u[:, 0]
        u[:, 1] = b / np.linalg.norm(b)
    c = np.cross(u[:, 0], u[:, 1])
    u[:, 2] = -c if c @ a[:, 2] < 0 else c
    return u, s * peak, v.T.copy()


# --------------------------------------------------------------------------
# Batched geodesic angle on SO(3)


@njit(cache=True)
def geodesic_angles_loops(ra, rb):
    n = ra.shape[0]
    out = np.empty(n)
    for k in range(n):
        # relative rotation Ra^T Rb
        tr = 0.0
        w0 = 0.0
        w1 = 0.0
        w2 = 0.0
        rel = np.zeros((3, 3))
        for i in range(3):
            for j in range(3):
                acc = 0.0
                for m in range(3):
                    acc += ra[k, m, i] * rb[k, m, j]
                rel[i, j] = acc
        tr = rel[0, 0] + rel[1, 1] + rel[2, 2]
        w0 = rel[2, 1] - rel[1, 2]
        w1 = rel[0, 2] - rel[2, 0]
        w2 = rel[1, 0] - rel[0, 1]
        sin_part = 0.5 * math.sqrt(w0 * w0 + w1 * w1 + w2 * w2)
        out[k] = math.atan2(sin_part, 0.5 * (tr - 1.0))
    return out


def geodesic_angles_numpy(ra, rb):
    rel = np.einsum("nmi,nmj->nij", ra, rb)
    tr = np.trace(rel, axis1=1, axis2=2)
    w = np.stack(
        [
            rel[:, 2, 1] - rel[:, 1, 2],
            rel[:, 0, 2] - rel[:, 2, 0],
            rel[:, 1, 0] - rel[:, 0, 1],
        ],
        axis=1,
    )
    return np.arctan2(0.5 * np.linalg.norm(w, axis=1), 0.5 * (tr - 1.0))


if HAS_NUMBA:
    render_star = render_star_loops
    local_maxima = local_maxima_loops
    svd3 = svd3_loops
    geodesic_angles = geodesic_angles_loops
else:
    render_star = render_star_numpy
    local_maxima = local_maxima_numpy
    svd3 = svd3_numpy
    geodesic_angles = geodesic_angles_numpy
