"""Independent reference implementations the library is checked against.

Nothing here imports the code paths it verifies: loops and dicts instead of
vectorized numpy, full pixel enumeration instead of random sampling.
"""

import math

import numpy as np


def map_point(H, x, y):
    w = H[2][0] * x + H[2][1] * y + H[2][2]
    if abs(w) < 1e-12:
        return None
    return ((H[0][0] * x + H[0][1] * y + H[0][2]) / w,
            (H[1][0] * x + H[1][1] * y + H[1][2]) / w)


def dense_correspondences(H, width, height, patch=16, dst_width=None, dst_height=None):
    """Map every pixel centre of every source patch; same winner and dedup rules."""
    dst_width = dst_width or width
    dst_height = dst_height or height
    cols, rows = width // patch, height // patch
    dcols, drows = dst_width // patch, dst_height // patch
    H = np.asarray(H, dtype=float).tolist()
    winners = {}
    for r in range(rows):
        for c in range(cols):
            votes = {}
            outside = 0
            for py in range(patch):
                for px in range(patch):
                    m = map_point(H, c * patch + px + 0.5, r * patch + py + 0.5)
                    if m is None:
                        outside += 1
                        continue
                    dc, dr = math.floor(m[0] / patch), math.floor(m[1] / patch)
                    if 0 <= dc < dcols and 0 <= dr < drows:
                        k = dr * dcols + dc
                        votes[k] = votes.get(k, 0) + 1
                    else:
                        outside += 1
            if not votes:
                continue
            top = max(votes.values())
            best = min(k for k, v in votes.items() if v == top)
            if outside > top:
                continue
            winners[r * cols + c] = (best, top)
    survivors = {}
    for src in sorted(winners):
        dst, v = winners[src]
        if dst not in survivors or v > survivors[dst][1]:
            survivors[dst] = (src, v)
    return sorted((s, d) for d, (s, _) in survivors.items())


def dense_overlap(H, width=224, height=224, patch=16):
    Hinv = np.linalg.inv(np.asarray(H, dtype=float))
    n = (width // patch) * (height // patch)
    o12 = len(dense_correspondences(H, width, height, patch)) / n
    o21 = len(dense_correspondences(Hinv, width, height, patch)) / n
    return o12, o21, min(o12, o21)


def naive_match(d1, d2, ratio):
    """Double-loop brute force: ratio test, then mutual nearest neighbours."""
    d1 = [np.asarray(v, dtype=float) for v in d1]
    d2 = [np.asarray(v, dtype=float) for v in d2]

    def dist(a, b):
        return float(np.sqrt(np.sum((a - b) ** 2)))

    def nearest(q, pool):
        best, second, bi = math.inf, math.inf, -1
        for j, v in enumerate(pool):
            d = dist(q, v)
            if d < best:
                best, second, bi = d, best, j
            elif d < second:
                second = d
        return bi, best, second

    out = []
    for i, q in enumerate(d1):
        j, best, second = nearest(q, d2)
        if len(d2) > 1 and not best < ratio * second:
            continue
        back, _, _ = nearest(d2[j], d1)
        if back != i:
            continue
        out.append((i, j, best))
    out.sort(key=lambda t: (t[2], t[0], t[1]))
    return out


def dense_dog_extrema(img, sigma=1.6, k=2 ** (1 / 3)):
    """Brute-force DoG at one octave via direct 2D Gaussian sums (slow, small images)."""
    h, w = img.shape
    yy, xx = np.mgrid[0:h, 0:w]

    def blur(s):
        r = int(math.ceil(3 * s))
        ax = np.arange(-r, r + 1)
        g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2 * s * s))
        g /= g.sum()
        pad = np.pad(img, r, mode="reflect")
        out = np.zeros_like(img)
        for dy in range(2 * r + 1):
            for dx in range(2 * r + 1):
                out += g[dy, dx] * pad[dy:dy + h, dx:dx + w]
        return out

    levels = [blur(sigma * k ** i) for i in range(4)]
    return np.stack([levels[i + 1] - levels[i] for i in range(3)])
