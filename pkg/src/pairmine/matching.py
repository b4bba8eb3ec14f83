"""Exhaustive L2 descriptor matching with ratio test and mutual cross-check."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, ParamError


@dataclass
class MatchSet:
    src_idx: np.ndarray
    dst_idx: np.ndarray
    distance: np.ndarray

    def __len__(self):
        return len(self.src_idx)

    def __getitem__(self, idx):
        return MatchSet(self.src_idx[idx], self.dst_idx[idx], self.distance[idx])

    def as_tuples(self):
        return [(int(i), int(j), float(d))
                for i, j, d in zip(self.src_idx, self.dst_idx, self.distance)]


def pairwise_l2(d1: np.ndarray, d2: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix, computed through the Gram expansion."""
    sq = (np.einsum("ij,ij->i", d1, d1)[:, None]
          + np.einsum("ij,ij->i", d2, d2)[None, :]
          - 2.0 * d1 @ d2.T)
    return np.sqrt(np.maximum(sq, 0.0))


def exact_l2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise distance by direct differencing (no cancellation error)."""
    return np.sqrt(np.sum((a - b) ** 2, axis=-1))


def match_descriptors(d1, d2, ratio: float = 0.75) -> MatchSet:
    """Mutual nearest neighbours that also pass the nearest/second ratio test.

    Nearest-neighbour ties resolve to the lowest index. With a single
    descriptor in ``d2`` there is no second neighbour and the ratio test
    passes trivially. Output is sorted by (distance, src_idx, dst_idx).
    """
    d1 = np.asarray(d1, dtype=np.float64)
    d2 = np.asarray(d2, dtype=np.float64)
    if len(d1) == 0 or len(d2) == 0:
        raise EmptyInput("both descriptor sets must be non-empty")
    if not 0 < ratio <= 1:
        raise ParamError(f"ratio must lie in (0, 1], got {ratio}")
    dist = pairwise_l2(d1, d2)
    rows = np.arange(len(d1))
    nn12 = np.argmin(dist, axis=1)
    best = exact_l2(d1, d2[nn12])
    if dist.shape[1] > 1:
        masked = dist.copy()
        masked[rows, nn12] = np.inf
        second = exact_l2(d1, d2[np.argmin(masked, axis=1)])
        # best < ratio * second; a zero second distance rejects (ambiguous)
        keep = best < ratio * second
    else:
        keep = np.ones(len(d1), bool)
    nn21 = np.argmin(dist, axis=0)
    keep &= nn21[nn12] == rows
    src = rows[keep]
    dst = nn12[keep]
    dd = best[keep]
    order = np.lexsort((dst, src, dd))
    return MatchSet(src[order], dst[order], dd[order])
