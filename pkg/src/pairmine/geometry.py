"""Homographies: point mapping, normalized DLT fitting and RANSAC."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (DegenerateConfiguration, InsufficientMatches, NoModelFound,
                     ProjectiveDegenerate)

W_EPS = 1e-12


def normalize_h(H) -> np.ndarray:
    """Scale so h33 = 1, or to unit Frobenius norm when h33 vanishes."""
    H = np.asarray(H, dtype=np.float64).reshape(3, 3)
    if abs(H[2, 2]) > 1e-12:
        return H / H[2, 2]
    return H / np.linalg.norm(H)


def translation(tx: float, ty: float) -> np.ndarray:
    return np.array([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]])


def scaling(s: float, center=(0.0, 0.0)) -> np.ndarray:
    cx, cy = center
    return np.array([[s, 0.0, cx - s * cx], [0.0, s, cy - s * cy], [0.0, 0.0, 1.0]])


def index_to_area(H) -> np.ndarray:
    """Re-express H for coordinates where pixel j spans [j, j+1) instead of centring on j."""
    return normalize_h(translation(0.5, 0.5) @ np.asarray(H, dtype=np.float64)
                       @ translation(-0.5, -0.5))


def invert(H) -> np.ndarray:
    H = np.asarray(H, dtype=np.float64)
    if not np.all(np.isfinite(H)) or abs(np.linalg.det(H)) <= 1e-12:
        raise DegenerateConfiguration("homography is singular")
    return normalize_h(np.linalg.inv(H))


def project(H, pts):
    """Map an (n, 2) array; returns (mapped, valid) with valid False where |w| < 1e-12."""
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    H = np.asarray(H, dtype=np.float64)
    x, y = pts[:, 0], pts[:, 1]
    w = H[2, 0] * x + H[2, 1] * y + H[2, 2]
    valid = np.abs(w) >= W_EPS
    ws = np.where(valid, w, 1.0)
    out = np.column_stack([(H[0, 0] * x + H[0, 1] * y + H[0, 2]) / ws,
                           (H[1, 0] * x + H[1, 1] * y + H[1, 2]) / ws])
    out[~valid] = np.nan
    return out, valid


def apply_homography(H, p):
    """Map a single point (x, y); raises ProjectiveDegenerate at infinity."""
    out, valid = project(H, [p])
    if not valid[0]:
        raise ProjectiveDegenerate(f"point {tuple(p)} maps to infinity")
    return float(out[0, 0]), float(out[0, 1])


def _hartley(pts: np.ndarray):
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    if d < 1e-12:
        raise DegenerateConfiguration("all points coincide")
    s = math.sqrt(2.0) / d
    T = np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])
    return (pts - c) * s, T


def _collinear(pts: np.ndarray, tol: float = 1e-9) -> bool:
    """True if any three of four points are (nearly) collinear."""
    scale = max(np.ptp(pts[:, 0]), np.ptp(pts[:, 1]), 1e-300) ** 2
    for i, j, k in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
        a, b, c = pts[i], pts[j], pts[k]
        cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if abs(cross) <= tol * scale:
            return True
    return False


def estimate_homography_dlt(pts1, pts2) -> np.ndarray:
    """Normalized DLT; exact for four non-degenerate correspondences."""
    pts1 = np.asarray(pts1, dtype=np.float64).reshape(-1, 2)
    pts2 = np.asarray(pts2, dtype=np.float64).reshape(-1, 2)
    n = len(pts1)
    if n != len(pts2) or n < 4:
        raise DegenerateConfiguration(f"need >= 4 equal-length point lists, got {n}/{len(pts2)}")
    if n == 4 and (_collinear(pts1) or _collinear(pts2)):
        raise DegenerateConfiguration("three of the four points are collinear")
    a, T1 = _hartley(pts1)
    b, T2 = _hartley(pts2)
    x, y = a[:, 0], a[:, 1]
    u, v = b[:, 0], b[:, 1]
    zeros, ones = np.zeros(n), np.ones(n)
    A = np.empty((2 * n, 9))
    A[0::2] = np.column_stack([-x, -y, -ones, zeros, zeros, zeros, u * x, u * y, u])
    A[1::2] = np.column_stack([zeros, zeros, zeros, -x, -y, -ones, v * x, v * y, v])
    _, sv, vt = np.linalg.svd(A)
    # rank 8 is required: the second-smallest singular value must not vanish
    if sv[7] <= 1e-10 * sv[0]:
        raise DegenerateConfiguration("design matrix is rank deficient")
    Hn = vt[-1].reshape(3, 3)
    H = np.linalg.inv(T2) @ Hn @ T1
    if not np.all(np.isfinite(H)) or abs(np.linalg.det(normalize_h(H))) <= 1e-12:
        raise DegenerateConfiguration("fitted homography is singular")
    return normalize_h(H)


def symmetric_error(H, Hinv, p1, p2) -> np.ndarray:
    """max(forward, backward) reprojection distance; inf where projection fails."""
    f, fv = project(H, p1)
    b, bv = project(Hinv, p2)
    ef = np.sqrt(((f - p2) ** 2).sum(axis=1))
    eb = np.sqrt(((b - p1) ** 2).sum(axis=1))
    err = np.maximum(ef, eb)
    err[~(fv & bv)] = np.inf
    err[~np.isfinite(err)] = np.inf
    return err


@dataclass
class RansacResult:
    homography: np.ndarray
    inlier_mask: np.ndarray
    iterations_run: int
    inlier_rmse: float

    @property
    def n_inliers(self) -> int:
        return int(self.inlier_mask.sum())


def _required_iters(w: float, confidence: float) -> float:
    if w >= 1.0:
        return 0
    p_good = w ** 4
    if p_good <= 0:
        return math.inf
    return math.log(1 - confidence) / math.log(1 - p_good)


def _score(H, p1, p2, threshold):
    Hinv = np.linalg.inv(H)
    err = symmetric_error(H, Hinv, p1, p2)
    mask = err <= threshold
    rmse = float(np.sqrt(np.mean(err[mask] ** 2))) if mask.any() else math.inf
    return mask, rmse


def ransac_points(p1, p2, threshold: float = 3.0, max_iters: int = 2000,
                  confidence: float = 0.999, rng_seed: int = 0) -> RansacResult:
    """RANSAC over explicit point correspondences."""
    p1 = np.asarray(p1, dtype=np.float64).reshape(-1, 2)
    p2 = np.asarray(p2, dtype=np.float64).reshape(-1, 2)
    n = len(p1)
    if n < 4:
        raise InsufficientMatches(f"need at least 4 matches, got {n}")
    rng = np.random.default_rng(rng_seed)
    best_H, best_mask, best_rmse, best_count = None, None, math.inf, 0
    it = 0
    needed = math.inf
    while it < max_iters and it < needed:
        it += 1
        idx = rng.choice(n, size=4, replace=False)
        try:
            H = estimate_homography_dlt(p1[idx], p2[idx])
        except DegenerateConfiguration:
            continue
        mask, rmse = _score(H, p1, p2, threshold)
        count = int(mask.sum())
        if count > best_count or (count == best_count and count > 0 and rmse < best_rmse):
            best_H, best_mask, best_rmse, best_count = H, mask, rmse, count
            needed = _required_iters(count / n, confidence)
    if best_H is None or best_count < 4:
        raise NoModelFound(f"no sample produced 4 inliers in {it} iterations")
    H, mask, rmse = best_H, best_mask, best_rmse
    try:
        Hr = estimate_homography_dlt(p1[best_mask], p2[best_mask])
        refit_mask, refit_rmse = _score(Hr, p1, p2, threshold)
        if refit_mask.sum() >= 4:
            H, mask, rmse = Hr, refit_mask, refit_rmse
    except DegenerateConfiguration:
        pass
    return RansacResult(H, mask, it, rmse)


def ransac_homography(matches, kps1, kps2, threshold: float = 3.0, max_iters: int = 2000,
                      confidence: float = 0.999, rng_seed: int = 0) -> RansacResult:
    """Robust view-1 to view-2 homography from descriptor matches."""
    if len(matches) < 4:
        raise InsufficientMatches(f"need at least 4 matches, got {len(matches)}")
    p1 = kps1.points[matches.src_idx]
    p2 = kps2.points[matches.dst_idx]
    return ransac_points(p1, p2, threshold, max_iters, confidence, rng_seed)
