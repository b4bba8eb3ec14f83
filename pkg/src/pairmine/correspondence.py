"""Patch-grid correspondences by point voting, and the overlap score.

Every source patch sends ``n_points`` random samples through the homography;
the destination patch collecting most of them is its match. Source patches
sharing a destination collapse to one survivor, so a zoomed view cannot
inflate its overlap by matching many small patches onto one large one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .errors import ParamError
from .seeding import derive_seed

REJECT_REASONS = ("none", "too_low", "too_high", "too_few_matches", "no_model")


@dataclass(frozen=True)
class PatchGrid:
    width: int
    height: int
    patch_size: int = 16

    def __post_init__(self):
        if self.patch_size < 1:
            raise ParamError("patch_size must be positive")
        if self.cols < 1 or self.rows < 1:
            raise ParamError(f"{self.width}x{self.height} holds no {self.patch_size}px patch")

    @property
    def cols(self) -> int:
        return self.width // self.patch_size

    @property
    def rows(self) -> int:
        return self.height // self.patch_size

    @property
    def size(self) -> int:
        return self.rows * self.cols

    def origin(self, index):
        index = np.asarray(index)
        return (index % self.cols) * self.patch_size, (index // self.cols) * self.patch_size

    def locate(self, pts: np.ndarray) -> np.ndarray:
        """Patch index of each point, -1 where it misses the grid."""
        x, y = pts[..., 0], pts[..., 1]
        with np.errstate(invalid="ignore"):
            inside = ((x >= 0) & (y >= 0) & (x < self.cols * self.patch_size)
                      & (y < self.rows * self.patch_size))
        col = np.where(inside, x, 0) // self.patch_size
        row = np.where(inside, y, 0) // self.patch_size
        return np.where(inside, row * self.cols + col, -1).astype(np.int64)

    @classmethod
    def for_image(cls, img, patch_size: int = 16) -> "PatchGrid":
        return cls(img.width, img.height, patch_size)


@dataclass
class CorrespondenceMap:
    src: np.ndarray
    dst: np.ndarray
    votes: np.ndarray
    direction: str = "1->2"

    def __len__(self):
        return len(self.src)

    @property
    def entries(self):
        return [(int(s), int(d)) for s, d in zip(self.src, self.dst)]


def _stratified_unit(rng, n_patches: int, n_points: int) -> np.ndarray:
    """Points in [0, 1)^2, each marginally uniform, jointly spread over a grid.

    Each point takes a distinct random cell of a ceil(sqrt(n))^2 grid and a
    uniform offset within it. With a perfect square every cell is used once,
    which keeps near-tie votes from flipping between neighbouring patches.
    """
    m = int(np.ceil(np.sqrt(n_points)))
    keys = rng.random((n_patches, m * m))
    cells = np.argsort(keys, axis=1)[:, :n_points]
    cell_xy = np.stack([cells % m, cells // m], axis=-1).astype(np.float64)
    return (cell_xy + rng.random((n_patches, n_points, 2))) / m


def patch_votes(H, src_grid: PatchGrid, dst_grid: PatchGrid, n_points: int, rng_seed):
    """Vote matrix (src patches x (dst patches + 1)); the last column is "outside"."""
    rng = np.random.default_rng(rng_seed)
    n = src_grid.size
    ps = src_grid.patch_size
    ox, oy = src_grid.origin(np.arange(n))
    origin = np.stack([ox, oy], axis=1).astype(np.float64)[:, None, :]
    u = _stratified_unit(rng, n, n_points)
    pts = origin + u * ps
    # keep samples strictly inside their own patch after rounding
    pts = np.minimum(pts, np.nextafter(origin + ps, -np.inf))
    mapped, valid = geometry.project(H, pts.reshape(-1, 2))
    labels = dst_grid.locate(mapped)
    labels[~valid] = -1
    labels = np.where(labels < 0, dst_grid.size, labels)
    flat = np.repeat(np.arange(n), n_points) * (dst_grid.size + 1) + labels
    return np.bincount(flat, minlength=n * (dst_grid.size + 1)).reshape(n, dst_grid.size + 1)


def winners_from_votes(votes: np.ndarray):
    """Apply the winner rule and the single-entity dedup to a vote matrix.

    Ties between patches go to the lower destination index; "outside" only
    wins with strictly more votes than every patch. Among sources sharing a
    destination, the most-voted survives (ties to the lower source index).
    """
    inside = votes[:, :-1]
    best = np.argmax(inside, axis=1)
    best_votes = inside[np.arange(len(votes)), best]
    keep = (best_votes > 0) & (best_votes >= votes[:, -1])
    src = np.flatnonzero(keep)
    dst, cnt = best[keep], best_votes[keep]
    order = np.lexsort((src, -cnt, dst))
    src, dst, cnt = src[order], dst[order], cnt[order]
    first = np.ones(len(dst), bool)
    first[1:] = dst[1:] != dst[:-1]
    src, dst, cnt = src[first], dst[first], cnt[first]
    order = np.argsort(src, kind="stable")
    return src[order], dst[order], cnt[order]


def correspond_patches(H, src_grid: PatchGrid, dst_grid: PatchGrid, n_points: int = 100,
                       rng_seed=0, direction: str = "1->2") -> CorrespondenceMap:
    if n_points < 1:
        raise ParamError("n_points must be >= 1")
    votes = patch_votes(H, src_grid, dst_grid, n_points, rng_seed)
    src, dst, cnt = winners_from_votes(votes)
    return CorrespondenceMap(src, dst, cnt, direction)


def directional_overlap(cmap: CorrespondenceMap, src_grid: PatchGrid) -> float:
    return len(cmap) / src_grid.size


@dataclass
class OverlapReport:
    overlap_12: float = 0.0
    overlap_21: float = 0.0
    overlap: float = 0.0
    accepted: bool = False
    reject_reason: str = "none"
    map_12: CorrespondenceMap | None = field(default=None, repr=False)
    map_21: CorrespondenceMap | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "overlap_12": self.overlap_12,
            "overlap_21": self.overlap_21,
            "overlap": self.overlap,
            "accepted": self.accepted,
            "reject_reason": self.reject_reason,
        }


def accept_pair(report: OverlapReport, lo: float = 0.50, hi: float = 0.75) -> bool:
    """Inclusive band test; records the verdict on ``report``."""
    if not (0 <= lo < hi <= 1):
        raise ParamError(f"invalid band [{lo}, {hi}]")
    if report.reject_reason in ("too_few_matches", "no_model"):
        report.accepted = False
        return False
    if report.overlap < lo:
        report.reject_reason = "too_low"
    elif report.overlap > hi:
        report.reject_reason = "too_high"
    else:
        report.reject_reason = "none"
    report.accepted = report.reject_reason == "none"
    return report.accepted


def symmetric_overlap(H, grid1: PatchGrid, grid2: PatchGrid, n_points: int = 100,
                      rng_seed=0, band=(0.50, 0.75)) -> OverlapReport:
    """Overlap in both directions; the pair score is the smaller one."""
    Hinv = geometry.invert(H)
    m12 = correspond_patches(H, grid1, grid2, n_points, derive_seed(rng_seed, "1->2"), "1->2")
    m21 = correspond_patches(Hinv, grid2, grid1, n_points, derive_seed(rng_seed, "2->1"), "2->1")
    o12 = directional_overlap(m12, grid1)
    o21 = directional_overlap(m21, grid2)
    report = OverlapReport(o12, o21, min(o12, o21), map_12=m12, map_21=m21)
    accept_pair(report, *band)
    return report
