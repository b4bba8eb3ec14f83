"""Scale-space keypoints and 128-dimensional gradient-histogram descriptors.

Difference-of-Gaussians extrema over an octave pyramid, refined to subpixel
and subscale accuracy, filtered by contrast and edge response, oriented by a
36-bin gradient histogram and described by a 4x4x8 histogram grid.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DimensionError
from .imgcore import RasterImage, blur_array, to_grayscale

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SiftParams:
    sigma: float = 1.6
    scales_per_octave: int = 3
    camera_sigma: float = 0.5
    contrast_threshold: float = 0.03
    edge_ratio: float = 10.0
    orientation_bins: int = 36
    orientation_peak: float = 0.8
    descriptor_width: int = 4
    descriptor_bins: int = 8
    descriptor_clamp: float = 0.2
    keypoint_cap: int = 2000
    border: int = 5
    min_octave_size: int = 16
    max_refine_steps: int = 5


@dataclass
class KeypointSet:
    """Struct-of-arrays keypoint container in original image coordinates."""

    x: np.ndarray = field(default_factory=lambda: np.zeros(0))
    y: np.ndarray = field(default_factory=lambda: np.zeros(0))
    scale: np.ndarray = field(default_factory=lambda: np.zeros(0))
    orientation: np.ndarray = field(default_factory=lambda: np.zeros(0))
    response: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        for name in ("x", "y", "scale", "orientation", "response"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64).reshape(-1))

    def __len__(self):
        return len(self.x)

    def __getitem__(self, idx):
        return KeypointSet(self.x[idx], self.y[idx], self.scale[idx],
                           self.orientation[idx], self.response[idx])

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([self.x, self.y])

    @classmethod
    def concat(cls, sets):
        sets = list(sets)
        if not sets:
            return cls()
        return cls(*(np.concatenate([getattr(s, n) for s in sets])
                     for n in ("x", "y", "scale", "orientation", "response")))

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["x", "y", "scale", "orientation", "response"])
            for row in zip(self.x, self.y, self.scale, self.orientation, self.response):
                w.writerow([f"{v:.6f}" for v in row])


class _Pyramid:
    """Gaussian and DoG stacks per octave, plus lazily computed gradients."""

    def __init__(self, gray: np.ndarray, p: SiftParams):
        self.p = p
        n = p.scales_per_octave
        k = 2.0 ** (1.0 / n)
        base_diff = math.sqrt(max(p.sigma ** 2 - p.camera_sigma ** 2, 0.01))
        incr = [math.sqrt((p.sigma * k ** i) ** 2 - (p.sigma * k ** (i - 1)) ** 2)
                for i in range(1, n + 3)]
        self.gauss = []
        self.dog = []
        cur = blur_array(gray, base_diff)
        while min(cur.shape) >= p.min_octave_size:
            levels = [cur]
            for s in incr:
                levels.append(blur_array(levels[-1], s))
            g = np.stack(levels)
            self.gauss.append(g)
            self.dog.append(g[1:] - g[:-1])
            cur = g[n][::2, ::2]
        self._grad = {}

    def gradient(self, octave: int, level: int):
        key = (octave, level)
        if key not in self._grad:
            img = self.gauss[octave][level]
            gy, gx = np.gradient(img)
            self._grad[key] = (np.hypot(gx, gy), np.arctan2(gy, gx))
        return self._grad[key]


def _octave_coords(kps: KeypointSet, p: SiftParams, n_octaves: int):
    """Recover (octave, fractional level, octave-relative sigma) from scale.

    Picks the finest octave whose levels 1..n (+-0.5) bracket the scale,
    which is the octave the detector found it in.
    """
    n = p.scales_per_octave
    rel = np.log2(np.maximum(kps.scale, 1e-12) / p.sigma)
    octave = np.clip(np.floor(rel - 0.5 / n), 0, n_octaves - 1).astype(int)
    level = (rel - octave) * n
    osigma = kps.scale / 2.0 ** octave
    return octave, level, osigma


def _check_size(gray: np.ndarray):
    if min(gray.shape) < 32:
        raise DimensionError(f"image {gray.shape[1]}x{gray.shape[0]} is smaller than 32 px")


def _as_gray(img) -> np.ndarray:
    if isinstance(img, RasterImage):
        return to_grayscale(img).data
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError("expected a single-channel image")
    return arr


def _refine(dog: np.ndarray, cand: np.ndarray, p: SiftParams):
    """Quadratic subpixel refinement of (level, y, x) extrema, vectorized."""
    S, h, w = dog.shape
    b = p.border
    pos = cand.astype(int).copy()
    alive = np.ones(len(pos), bool)
    done = np.zeros(len(pos), bool)
    offset = np.zeros((len(pos), 3))
    grad = np.zeros((len(pos), 3))
    for _ in range(p.max_refine_steps):
        idx = np.flatnonzero(alive & ~done)
        if idx.size == 0:
            break
        s, y, x = pos[idx].T
        v = dog[s, y, x]
        ds = (dog[s + 1, y, x] - dog[s - 1, y, x]) * 0.5
        dy = (dog[s, y + 1, x] - dog[s, y - 1, x]) * 0.5
        dx = (dog[s, y, x + 1] - dog[s, y, x - 1]) * 0.5
        dss = dog[s + 1, y, x] + dog[s - 1, y, x] - 2 * v
        dyy = dog[s, y + 1, x] + dog[s, y - 1, x] - 2 * v
        dxx = dog[s, y, x + 1] + dog[s, y, x - 1] - 2 * v
        dxy = (dog[s, y + 1, x + 1] - dog[s, y + 1, x - 1]
               - dog[s, y - 1, x + 1] + dog[s, y - 1, x - 1]) * 0.25
        dxs = (dog[s + 1, y, x + 1] - dog[s + 1, y, x - 1]
               - dog[s - 1, y, x + 1] + dog[s - 1, y, x - 1]) * 0.25
        dys = (dog[s + 1, y + 1, x] - dog[s + 1, y - 1, x]
               - dog[s - 1, y + 1, x] + dog[s - 1, y - 1, x]) * 0.25
        g = np.stack([dx, dy, ds], axis=1)
        H = np.empty((idx.size, 3, 3))
        H[:, 0] = np.stack([dxx, dxy, dxs], 1)
        H[:, 1] = np.stack([dxy, dyy, dys], 1)
        H[:, 2] = np.stack([dxs, dys, dss], 1)
        det = np.linalg.det(H)
        ok = np.abs(det) > 1e-15
        off = np.zeros((idx.size, 3))
        if ok.any():
            off[ok] = -np.linalg.solve(H[ok], g[ok][..., None])[..., 0]
        alive[idx[~ok | ~np.all(np.isfinite(off), 1)]] = False
        conv = np.all(np.abs(off) < 0.5, axis=1) & ok
        done[idx[conv]] = True
        offset[idx] = off
        grad[idx] = g
        moving = idx[~conv & ok]
        if moving.size:
            step = np.rint(offset[moving]).astype(int)
            newpos = pos[moving] + step[:, [2, 1, 0]]
            inb = ((newpos[:, 0] >= 1) & (newpos[:, 0] <= S - 2)
                   & (newpos[:, 1] >= b) & (newpos[:, 1] < h - b)
                   & (newpos[:, 2] >= b) & (newpos[:, 2] < w - b))
            pos[moving] = np.where(inb[:, None], newpos, pos[moving])
            alive[moving[~inb]] = False
    keep = np.flatnonzero(alive & done)
    pos, offset, grad = pos[keep], offset[keep], grad[keep]
    s, y, x = pos.T
    value = dog[s, y, x] + 0.5 * np.sum(grad * offset, axis=1)
    # edge response on the 2D spatial Hessian at the converged sample
    dxx = dog[s, y, x + 1] + dog[s, y, x - 1] - 2 * dog[s, y, x]
    dyy = dog[s, y + 1, x] + dog[s, y - 1, x] - 2 * dog[s, y, x]
    dxy = (dog[s, y + 1, x + 1] - dog[s, y + 1, x - 1]
           - dog[s, y - 1, x + 1] + dog[s, y - 1, x - 1]) * 0.25
    tr = dxx + dyy
    det = dxx * dyy - dxy ** 2
    r = p.edge_ratio
    good = ((np.abs(value) >= p.contrast_threshold) & (det > 0)
            & (tr ** 2 * r < (r + 1) ** 2 * det))
    return pos[good], offset[good], value[good]


def _orientations(pyr: _Pyramid, octave: int, level, xo, yo, osigma):
    """Dominant gradient directions for a batch of extrema in one octave.

    Returns (candidate index, angle) arrays; a candidate may appear several
    times, once per histogram peak, in ascending peak order.
    """
    p = pyr.p
    nb = p.orientation_bins
    lev = np.clip(np.rint(level), 0, p.scales_per_octave + 2).astype(int)
    sw = 1.5 * osigma
    rad = np.rint(3 * sw).astype(int)
    hists = np.zeros((len(xo), nb))
    groups = {}
    for i in range(len(xo)):
        groups.setdefault((lev[i], rad[i]), []).append(i)
    for (lv, r), members in groups.items():
        idx = np.asarray(members)
        mag, ang = pyr.gradient(octave, lv)
        h, w = mag.shape
        oy, ox = np.mgrid[-r:r + 1, -r:r + 1]
        yy = np.rint(yo[idx, None]).astype(int) + oy.ravel()[None]
        xx = np.rint(xo[idx, None]).astype(int) + ox.ravel()[None]
        inside = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        yy, xx = np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)
        s2 = 2 * sw[idx, None] ** 2
        wgt = np.exp(-((xx - xo[idx, None]) ** 2 + (yy - yo[idx, None]) ** 2) / s2)
        m = np.where(inside, mag[yy, xx] * wgt, 0.0)
        bins = np.rint(ang[yy, xx] * (nb / TWO_PI)).astype(int) % nb
        flat = np.arange(len(idx))[:, None] * nb + bins
        hists[idx] = np.bincount(flat.ravel(), weights=m.ravel(),
                                 minlength=len(idx) * nb).reshape(len(idx), nb)
    hist = (np.roll(hists, 2, 1) + np.roll(hists, -2, 1)
            + 4 * (np.roll(hists, 1, 1) + np.roll(hists, -1, 1)) + 6 * hists) / 16.0
    hmax = hist.max(axis=1, keepdims=True)
    left, right = np.roll(hist, 1, 1), np.roll(hist, -1, 1)
    peak = ((hist > left) & (hist > right) & (hist >= p.orientation_peak * hmax)
            & (hmax > 0))
    k, b = np.nonzero(peak)
    l, c, r = left[k, b], hist[k, b], right[k, b]
    denom = l - 2 * c + r
    safe = np.where(denom != 0, denom, 1.0)
    interp = np.where(denom != 0, 0.5 * (l - r) / safe, 0.0)
    return k, ((b + interp) * TWO_PI / nb) % TWO_PI


def _detect(pyr: _Pyramid, shape) -> KeypointSet:
    p = pyr.p
    n = p.scales_per_octave
    b = p.border
    prefilter = 0.5 * p.contrast_threshold
    height, width = shape
    xs, ys, scs, oris, resps = [], [], [], [], []
    for o, dog in enumerate(pyr.dog):
        S, h, w = dog.shape
        if h <= 2 * b or w <= 2 * b:
            continue
        mx = ndimage.maximum_filter(dog, size=3, mode="nearest")
        mn = ndimage.minimum_filter(dog, size=3, mode="nearest")
        ext = ((dog == mx) | (dog == mn)) & (np.abs(dog) > prefilter)
        ext[0] = ext[-1] = False
        ext[:, :b] = ext[:, h - b:] = False
        ext[:, :, :b] = ext[:, :, w - b:] = False
        cand = np.argwhere(ext)
        if cand.size == 0:
            continue
        pos, off, val = _refine(dog, cand, p)
        scale_o = 2.0 ** o
        level = pos[:, 0] + off[:, 2]
        yo, xo = pos[:, 1] + off[:, 1], pos[:, 2] + off[:, 0]
        osigma = p.sigma * 2.0 ** (level / n)
        X, Y = xo * scale_o, yo * scale_o
        ok = (X >= 0) & (X < width) & (Y >= 0) & (Y < height)
        level, xo, yo, osigma, val = level[ok], xo[ok], yo[ok], osigma[ok], val[ok]
        k, theta = _orientations(pyr, o, level, xo, yo, osigma)
        xs.append(xo[k] * scale_o)
        ys.append(yo[k] * scale_o)
        scs.append(osigma[k] * scale_o)
        oris.append(theta)
        resps.append(np.abs(val[k]))
    kps = KeypointSet(*(np.concatenate(v) if v else np.zeros(0)
                        for v in (xs, ys, scs, oris, resps)))
    if len(kps) == 0:
        return kps
    order = np.lexsort((kps.orientation, kps.scale, kps.x, kps.y, -kps.response))
    return kps[order[: p.keypoint_cap]]


def detect_keypoints(img, params: SiftParams | None = None) -> KeypointSet:
    """Detect oriented scale-space keypoints, strongest first."""
    p = params or SiftParams()
    gray = _as_gray(img)
    _check_size(gray)
    return _detect(_Pyramid(gray, p), gray.shape)


def _describe(pyr: _Pyramid, kps: KeypointSet):
    """4x4x8 descriptors; keypoints sharing a gradient image and window are batched."""
    p = pyr.p
    d, nb = p.descriptor_width, p.descriptor_bins
    octave, level, osigma = _octave_coords(kps, p, len(pyr.gauss))
    lev = np.clip(np.rint(level), 0, p.scales_per_octave + 2).astype(int)
    hist_w = 3.0 * osigma
    # bounding box of the rotated (d+1)-cell support, plus the centre rounding
    spread = np.abs(np.cos(kps.orientation)) + np.abs(np.sin(kps.orientation))
    rad = np.ceil(hist_w * (d + 1) * 0.5 * spread + 0.5).astype(int)
    hsize = (d + 2) * (d + 2) * nb
    hists = np.zeros((len(kps), hsize))
    groups = {}
    for i in range(len(kps)):
        groups.setdefault((octave[i], lev[i], rad[i]), []).append(i)
    for (o, lv, r), members in groups.items():
        idx = np.asarray(members)
        mag, ang = pyr.gradient(o, lv)
        h, w = mag.shape
        xo = kps.x[idx, None] / 2.0 ** o
        yo = kps.y[idx, None] / 2.0 ** o
        oy, ox = np.mgrid[-r:r + 1, -r:r + 1]
        yy = np.rint(yo).astype(int) + oy.ravel()[None]
        xx = np.rint(xo).astype(int) + ox.ravel()[None]
        inside = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        yy, xx = np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)
        theta = kps.orientation[idx, None]
        cos_t, sin_t = np.cos(theta), np.sin(theta)
        hw = hist_w[idx, None]
        dx, dy = xx - xo, yy - yo
        rx = (cos_t * dx + sin_t * dy) / hw
        ry = (-sin_t * dx + cos_t * dy) / hw
        rbin = ry + d / 2 - 0.5
        cbin = rx + d / 2 - 0.5
        sel = inside & (rbin > -1) & (rbin < d) & (cbin > -1) & (cbin < d)
        k, j = np.nonzero(sel)
        rx, ry, rbin, cbin = rx[k, j], ry[k, j], rbin[k, j], cbin[k, j]
        yy, xx = yy[k, j], xx[k, j]
        m = mag[yy, xx] * np.exp(-(rx ** 2 + ry ** 2) / (2 * (0.5 * d) ** 2))
        # bin centres sit half a bin off the reference axis, so the x/y and
        # diagonal directions split symmetrically between neighbouring bins
        obin = ((ang[yy, xx] - theta[k, 0]) % TWO_PI) * (nb / TWO_PI) - 0.5
        r0, c0, o0 = np.floor(rbin), np.floor(cbin), np.floor(obin)
        fr, fc, fo = rbin - r0, cbin - c0, obin - o0
        r0, c0, o0 = r0.astype(int) + 1, c0.astype(int) + 1, o0.astype(int)
        base = k * hsize
        flats, weights = [], []
        for dr, wr in ((0, 1 - fr), (1, fr)):
            for dc, wc in ((0, 1 - fc), (1, fc)):
                mrc = m * wr * wc
                cell = base + ((r0 + dr) * (d + 2) + (c0 + dc)) * nb
                for do, wo in ((0, 1 - fo), (1, fo)):
                    flats.append(cell + (o0 + do) % nb)
                    weights.append(mrc * wo)
        acc = np.bincount(np.concatenate(flats), weights=np.concatenate(weights),
                          minlength=len(idx) * hsize)
        hists[idx] = acc.reshape(len(idx), hsize)
    vec = hists.reshape(-1, d + 2, d + 2, nb)[:, 1:d + 1, 1:d + 1].reshape(len(kps), d * d * nb)
    norm = np.linalg.norm(vec, axis=1)
    valid = norm > 1e-12
    vec = np.minimum(vec[valid] / norm[valid, None], p.descriptor_clamp)
    out = vec / np.linalg.norm(vec, axis=1, keepdims=True)
    return kps[valid], out.reshape(-1, d * d * nb)


def compute_descriptors(img, kps: KeypointSet, params: SiftParams | None = None):
    """Describe keypoints; returns (kept_keypoints, descriptors[n, 128]).

    Keypoints with no gradient support are dropped together with their
    all-zero descriptor, so the two outputs stay index-aligned.
    """
    p = params or SiftParams()
    gray = _as_gray(img)
    _check_size(gray)
    return _describe(_Pyramid(gray, p), kps)


def detect_and_describe(img, params: SiftParams | None = None):
    """detect_keypoints + compute_descriptors sharing one pyramid."""
    p = params or SiftParams()
    gray = _as_gray(img)
    _check_size(gray)
    pyr = _Pyramid(gray, p)
    return _describe(pyr, _detect(pyr, gray.shape))
