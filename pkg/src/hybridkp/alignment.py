"""Viewpoint from decoded keypoints.

``solve_similarity`` is the closed-form weighted similarity fit
argmin_{s,R,t} sum_i w_i ||s R p_i + t - q_i||^2 mapping image-frame points p
onto canonical points q.  ``solve_weak_perspective_pnp`` is the depth-free
baseline: it only sees (u, v) and fills the depths in by alternation.
"""
from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from . import kernels
from .codec import DetectedKeypoint
from .errors import ConvergenceError, DegenerateConfigurationError, InsufficientKeypointsError
from .geometry import CameraModel, SimilarityTransform, backproject_full_perspective

RANK_TOL = 1e-12
PNP_MAX_ITER = 100
PNP_TOL = 1e-10


class Correspondence(NamedTuple):
    p: np.ndarray  # image-frame point (u - cx, v - cy, d)
    q: np.ndarray  # canonical point
    w: float = 1.0


def _as_arrays(p, q, w):
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 3 or q.shape != p.shape:
        raise ValueError(f"expected matching (N, 3) point sets, got {p.shape} and {q.shape}")
    w = np.ones(len(p)) if w is None else np.asarray(w, dtype=np.float64)
    if w.shape != (len(p),):
        raise ValueError("one weight per correspondence required")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    return p, q, w


def similarity_objective(transform: SimilarityTransform, p, q, w=None) -> float:
    p, q, w = _as_arrays(p, q, w)
    r = transform.apply(p) - q
    return float(np.sum(w * np.einsum("ij,ij->i", r, r)))


def solve_similarity(p, q, w=None) -> tuple[SimilarityTransform, float]:
    """Weighted closed-form similarity p -> q; returns (transform, objective).

    The rotation is V diag(1, 1, sign det(V U^T)) U^T for
    M = sum w (p - pbar)(q - qbar)^T = U S V^T, which keeps det R = +1 even when
    the unconstrained optimum would be a reflection.
    """
    p, q, w = _as_arrays(p, q, w)
    if len(p) < 3:
        raise InsufficientKeypointsError(len(p))
    wsum = w.sum()
    if not wsum > 0:
        raise DegenerateConfigurationError("total weight is zero", rank=0)
    pbar = w @ p / wsum
    qbar = w @ q / wsum
    pc = p - pbar
    qc = q - qbar
    m = (pc * w[:, None]).T @ qc

    u, sv, vt = kernels.svd3(np.ascontiguousarray(m))
    rank = int(np.sum(sv > RANK_TOL * sv[0])) if sv[0] > 0 else 0
    if rank < 2:
        raise DegenerateConfigurationError("correspondences are collinear or coincident", rank=rank)
    v = vt.T
    sign = 1.0 if np.linalg.det(v @ u.T) >= 0 else -1.0
    R = v @ np.diag([1.0, 1.0, sign]) @ u.T

    var_p = float(np.sum(w * np.einsum("ij,ij->i", pc, pc)))
    s = float(np.trace(R @ m)) / var_p
    if not s > 0:
        raise DegenerateConfigurationError("no positive scale aligns the point sets", rank=rank)
    t = qbar - s * R @ pbar
    transform = SimilarityTransform(s, R, t)
    return transform, similarity_objective(transform, p, q, w)


def solve_correspondences(corrs: Sequence[Correspondence]) -> tuple[SimilarityTransform, float]:
    if len(corrs) == 0:
        raise InsufficientKeypointsError(0)
    p = np.array([c.p for c in corrs], dtype=np.float64)
    q = np.array([c.q for c in corrs], dtype=np.float64)
    w = np.array([c.w for c in corrs], dtype=np.float64)
    return solve_similarity(p, q, w)


def _weighted_fit(design, target, w):
    sw = np.sqrt(w)[:, None]
    sol, *_ = np.linalg.lstsq(design * sw, target * sw, rcond=None)
    return sol


def _initial_depths(q, xy, w):
    """Candidate depth vectors from a closed-form scaled-orthographic fit.

    Spread-out canonical points give one candidate via an affine camera.  For
    coplanar points the two camera rows are completed out of plane, which has
    two mirror solutions; both are returned.  Falls back to zero depth.
    """
    live = w > 0
    if live.sum() < 3:
        return [np.zeros(len(q))]
    qbar = w @ q / w.sum()
    qc = q - qbar
    _, spread, basis = np.linalg.svd(qc[live] * np.sqrt(w[live])[:, None])
    if spread[1] <= 1e-9 * spread[0]:
        return [np.zeros(len(q))]
    ones = np.ones((len(q), 1))
    if spread[2] > 1e-9 * spread[0] and live.sum() >= 4:
        affine = _weighted_fit(np.hstack([qc, ones]), xy, w)[:3].T
        u, sv, vt = np.linalg.svd(affine, full_matrices=False)
        rows = u @ vt
        return [sv.mean() * (qc @ np.cross(rows[0], rows[1]))]

    plane = basis[:2]
    normal = basis[2]
    a = _weighted_fit(np.hstack([qc @ plane.T, ones]), xy, w)[:2].T  # (2, 2)
    diff = a[1] @ a[1] - a[0] @ a[0]
    prod = -(a[0] @ a[1])
    c1_sq = 0.5 * (diff + np.hypot(diff, 2.0 * prod))
    if c1_sq > 1e-24 * (a[0] @ a[0] + a[1] @ a[1]):
        c1 = np.sqrt(c1_sq)
        c2 = prod / c1
    else:
        c1, c2 = 0.0, np.sqrt(max(-diff, 0.0))
    candidates = []
    for sign in (1.0, -1.0):
        r1 = a[0] @ plane + sign * c1 * normal
        r2 = a[1] @ plane + sign * c2 * normal
        r3 = np.cross(r1, r2)
        norm = np.linalg.norm(r3)
        if norm == 0:
            continue
        scale = np.sqrt(norm)
        candidates.append(scale * (qc @ (r3 / norm)))
    return candidates or [np.zeros(len(q))]


def _pnp_descent(q, xy, w, depth, max_iter, tol):
    previous = np.inf
    for _ in range(max_iter):
        forward, _ = solve_similarity(q, np.column_stack([xy, depth]), w)
        fitted = forward.apply(q)
        r = fitted[:, :2] - xy
        residual = float(np.sum(w * np.einsum("ij,ij->i", r, r)))
        depth = fitted[:, 2]
        if abs(previous - residual) < tol * max(1.0, residual):
            return forward, residual, True
        previous = residual
    return forward, residual, False


def solve_weak_perspective_pnp(
    q3d,
    p2d,
    w=None,
    cam: CameraModel | None = None,
    max_iter: int = PNP_MAX_ITER,
    tol: float = PNP_TOL,
) -> tuple[SimilarityTransform, float]:
    """Fit canonical points to 2D keypoints without depth.

    Block-coordinate descent on sum w ||Pi(s R q + t) - (uv - c)||^2: solve the
    3D similarity q -> (u - cx, v - cy, d) in closed form, then reset each d to
    the third coordinate of the fitted point.  Depths are seeded from a
    closed-form scaled-orthographic fit (two mirror seeds for coplanar points;
    the lower residual wins).  Stops when the residual changes by less than
    ``tol`` (relative once it exceeds 1).

    Returns the image-frame -> canonical transform (same direction as
    :func:`solve_similarity`) and the final 2D residual.  Raises
    :class:`ConvergenceError` carrying the best iterate after ``max_iter``.
    """
    q = np.asarray(q3d, dtype=np.float64)
    uv = np.asarray(p2d, dtype=np.float64)
    if q.ndim != 2 or q.shape[1] != 3 or uv.shape != (len(q), 2):
        raise ValueError("expected (N, 3) canonical points and (N, 2) image points")
    if len(q) < 3:
        raise InsufficientKeypointsError(len(q))
    center = np.zeros(2) if cam is None else np.array([cam.cx, cam.cy])
    xy = uv - center
    w = np.ones(len(q)) if w is None else np.asarray(w, dtype=np.float64)
    if np.any(w < 0) or not w.sum() > 0:
        raise ValueError("weights must be non-negative with a positive sum")

    best = None
    for depth in _initial_depths(q, xy, w):
        forward, residual, converged = _pnp_descent(q, xy, w, depth, max_iter, tol)
        if best is None or residual < best[1]:
            best = (forward, residual, converged)
    forward, residual, converged = best
    if not converged:
        raise ConvergenceError(
            f"weak-perspective PnP did not converge in {max_iter} iterations",
            residual,
            transform=forward.inverse(),
            iterations=max_iter,
        )
    return forward.inverse(), residual


def image_points(dets: Sequence[DetectedKeypoint], cam: CameraModel) -> np.ndarray:
    """Lift detections to 3D: (u - cx, v - cy, d), or K^-1 (ud, vd, d) with intrinsics."""
    uvd = np.array([[k.u, k.v, k.d] for k in dets], dtype=np.float64).reshape(-1, 3)
    if cam.kind == "full_perspective":
        return backproject_full_perspective(uvd, cam)
    return uvd - np.array([cam.cx, cam.cy, 0.0])


def estimate_viewpoint(
    dets: Sequence[DetectedKeypoint], cam: CameraModel, use_depth: bool = True
) -> tuple[np.ndarray, float]:
    """Rotation taking the image frame to the canonical frame, plus residual.

    The object's viewpoint rotation (canonical -> camera) is its transpose;
    geodesic scoring is invariant to transposing both sides.
    """
    if len(dets) < 3:
        raise InsufficientKeypointsError(len(dets))
    q = np.array([k.canview for k in dets], dtype=np.float64)
    w = np.array([k.w for k in dets], dtype=np.float64)
    if use_depth:
        transform, residual = solve_similarity(image_points(dets, cam), q, w)
    else:
        uv = np.array([[k.u, k.v] for k in dets], dtype=np.float64)
        transform, residual = solve_weak_perspective_pnp(q, uv, w, cam)
    return transform.R, residual
