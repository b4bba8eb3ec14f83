"""Manifest persistence, dataset statistics and correspondence overlays.

A manifest is JSONL: the first line is the header object, every following
line one accepted pair. Floats are rounded to 9 significant digits and
records are sorted by ``pair_id``, so the bytes depend only on the content.
"""

from __future__ import annotations

import colorsys
import gc
import json
import math
import os
import tempfile
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, ParseError, ValidationError, VersionError
from .imgcore import RasterImage
from .mining import PairRecord

FORMAT_VERSION = 1
OVERLAY_GAP = 8
OVERLAY_ALPHA = 0.45
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

HEADER_KEYS = ("format_version", "patch_size", "grid", "accept_band", "dataset_seed",
               "created_at")
RECORD_KEYS = ("pair_id", "source_id", "source_kind", "path_a", "path_b", "overlap_12",
               "overlap_21", "overlap", "homography", "correspondences", "patch_size",
               "grid", "seed")


def make_header(patch_size=16, grid=None, accept_band=(0.50, 0.75), dataset_seed=0,
                created_at=None) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "patch_size": patch_size,
        "grid": None if grid is None else list(grid),
        "accept_band": list(accept_band),
        "dataset_seed": dataset_seed,
        "created_at": created_at,
    }


def _round(obj):
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValidationError(f"non-finite value {obj}")
        return float(f"{obj:.9g}")
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    if isinstance(obj, np.generic):
        return _round(obj.item())
    return obj


def _dumps(obj) -> str:
    return json.dumps(_round(obj), separators=(",", ":"), ensure_ascii=False)


def validate_record(rec: PairRecord, header: dict):
    pid = rec.pair_id
    if not pid:
        raise ValidationError("record without pair_id")
    if rec.patch_size != header["patch_size"]:
        raise ValidationError(f"{pid}: patch_size {rec.patch_size} != header {header['patch_size']}")
    if header.get("grid") is not None and list(rec.grid) != list(header["grid"]):
        raise ValidationError(f"{pid}: grid {list(rec.grid)} != header {header['grid']}")
    rows, cols = rec.grid
    n = rows * cols
    src = [int(s) for s, _ in rec.correspondences]
    dst = [int(d) for _, d in rec.correspondences]
    if len(set(src)) != len(src):
        raise ValidationError(f"{pid}: duplicate source patches")
    if len(set(dst)) != len(dst):
        raise ValidationError(f"{pid}: duplicate destination patches")
    if any(not 0 <= s < n for s in src) or any(d < 0 for d in dst):
        raise ValidationError(f"{pid}: patch index out of range")
    if len(src) != round(rec.overlap_12 * n):
        raise ValidationError(f"{pid}: {len(src)} correspondences vs overlap_12 {rec.overlap_12}")
    if abs(rec.overlap - min(rec.overlap_12, rec.overlap_21)) > 1e-9:
        raise ValidationError(f"{pid}: overlap is not min(overlap_12, overlap_21)")
    lo, hi = header["accept_band"]
    if not lo - 1e-9 <= rec.overlap <= hi + 1e-9:
        raise ValidationError(f"{pid}: overlap {rec.overlap} outside band [{lo}, {hi}]")
    h = rec.homography
    if len(h) != 9 or not all(math.isfinite(v) for v in h):
        raise ValidationError(f"{pid}: homography must be 9 finite numbers")
    if abs(np.linalg.det(np.reshape(h, (3, 3)))) <= 1e-12:
        raise ValidationError(f"{pid}: singular homography")


def _canonical(records, header):
    ids = Counter(r.pair_id for r in records)
    dup = [k for k, v in ids.items() if v > 1]
    if dup:
        raise ValidationError(f"duplicate pair_id {dup[0]!r}")
    for r in records:
        validate_record(r, header)
    return sorted(records, key=lambda r: r.pair_id)


def write_manifest(records, header: dict, path) -> None:
    """Validate everything, then write atomically (temp file + rename)."""
    records = _canonical(list(records), header)
    lines = [_dumps({k: header.get(k) for k in HEADER_KEYS})]
    lines.extend(_dumps(r.to_dict()) for r in records)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write("\n".join(lines) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_manifest(path):
    """Inverse of write_manifest: returns (header, records)."""
    with open(path, encoding="utf-8") as f:
        lines = f.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty manifest (missing header)", 1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad header: {exc.msg}", 1) from None
    if not isinstance(header, dict) or "format_version" not in header:
        raise ParseError("header object lacks format_version", 1)
    if header["format_version"] != FORMAT_VERSION:
        raise VersionError(f"unsupported manifest format_version {header['format_version']!r}")
    missing = [k for k in HEADER_KEYS if k not in header]
    if missing:
        raise ParseError(f"header lacks {missing}", 1)
    records = []
    # bulk decoding allocates no cycles; skipping collector passes keeps reads
    # linear in file size when the caller already holds a large heap
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        _parse_records(lines, records)
    finally:
        if gc_was_enabled:
            gc.enable()
    return header, records


def _parse_records(lines, records):
    for lineno, line in enumerate(lines[1:], 2):
        try:
            d = json.loads(line)
            records.append(PairRecord.from_dict(d))
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad JSON: {exc.msg}", lineno) from None
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed record: {exc!r}", lineno) from None


def merge_manifests(paths, header: dict, out_path) -> list:
    """Concatenate shard manifests and rewrite them as one sorted manifest."""
    records = []
    for p in paths:
        _, recs = read_manifest(p)
        records.extend(recs)
    write_manifest(records, header, out_path)
    return sorted(records, key=lambda r: r.pair_id)


@dataclass
class StatsReport:
    total: int = 0
    per_source: dict = field(default_factory=dict)
    percent: dict = field(default_factory=dict)
    overlap_edges: list = field(default_factory=lambda: np.linspace(0, 1, 21).tolist())
    overlap_hist: list = field(default_factory=lambda: [0] * 20)
    corr_edges: list = field(default_factory=list)
    corr_hist: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "per_source": self.per_source,
            "percent": self.percent,
            "overlap_histogram": {"edges": self.overlap_edges, "counts": self.overlap_hist},
            "correspondence_histogram": {"edges": self.corr_edges, "counts": self.corr_hist},
        }

    def to_json(self) -> str:
        return json.dumps(_round(self.to_dict()), indent=2, sort_keys=False)

    def to_table(self) -> str:
        rows = [("source", "pairs", "percent")]
        for k in self.per_source:
            rows.append((k, str(self.per_source[k]), f"{self.percent[k]:.1f}"))
        rows.append(("total", str(self.total), "100.0" if self.total else "0.0"))
        w0 = max(len(r[0]) for r in rows)
        w1 = max(len(r[1]) for r in rows)
        w2 = max(len(r[2]) for r in rows)
        lines = [f"{a:<{w0}}  {b:>{w1}}  {c:>{w2}}" for a, b, c in rows]
        lines.insert(1, "-" * len(lines[0]))
        lines.append("")
        lines.append("overlap histogram")
        e = self.overlap_edges
        for i, c in enumerate(self.overlap_hist):
            lines.append(f"[{e[i]:.2f}, {e[i + 1]:.2f}{']' if i == 19 else ')'}  {c:>{w1}}")
        return "\n".join(lines) + "\n"


def dataset_stats(records, key: str = "source_id", corr_bins: int = 20) -> StatsReport:
    """Per-source counts and shares, plus overlap and correspondence-count histograms."""
    records = list(records)
    rep = StatsReport()
    if not records:
        return rep
    rep.total = len(records)
    counts = Counter(getattr(r, key) for r in records)
    rep.per_source = dict(sorted(counts.items()))
    rep.percent = {k: 100.0 * v / rep.total for k, v in rep.per_source.items()}
    ov = np.array([r.overlap for r in records])
    rep.overlap_hist = np.histogram(ov, bins=20, range=(0.0, 1.0))[0].tolist()
    n_corr = np.array([len(r.correspondences) for r in records])
    top = max(int(max(r.grid[0] * r.grid[1] for r in records)), 1)
    hist, edges = np.histogram(n_corr, bins=corr_bins, range=(0, top))
    rep.corr_hist, rep.corr_edges = hist.tolist(), edges.tolist()
    return rep


def patch_color(index: int) -> np.ndarray:
    """Deterministic RGB color for a source patch index (golden-ratio hue walk)."""
    hue = (index * GOLDEN) % 1.0
    return np.array(colorsys.hsv_to_rgb(hue, 0.85, 1.0))


def _rgb(img: RasterImage) -> np.ndarray:
    d = img.data
    return np.repeat(d[:, :, None], 3, axis=2) if d.ndim == 2 else d.copy()


def render_correspondence_overlay(img_a: RasterImage, img_b: RasterImage, record,
                                  grid_b=None) -> RasterImage:
    """Side-by-side canvas where each corresponding patch pair shares a tint."""
    p = record.patch_size
    rows, cols = record.grid
    if img_a.height // p != rows or img_a.width // p != cols:
        raise DimensionError(f"view a {img_a.width}x{img_a.height} does not match grid "
                             f"{rows}x{cols} of {p}px patches")
    cols_b = (grid_b[1] if grid_b else img_b.width // p)
    rows_b = (grid_b[0] if grid_b else img_b.height // p)
    a, b = _rgb(img_a), _rgb(img_b)
    h = max(img_a.height, img_b.height)
    canvas = np.zeros((h, img_a.width + OVERLAY_GAP + img_b.width, 3))
    off = img_a.width + OVERLAY_GAP
    canvas[: img_a.height, : img_a.width] = a
    canvas[: img_b.height, off:off + img_b.width] = b
    for s, d in record.correspondences:
        s, d = int(s), int(d)
        if not 0 <= d < rows_b * cols_b:
            raise DimensionError(f"destination patch {d} outside view b grid")
        color = patch_color(s) * OVERLAY_ALPHA
        r, c = divmod(s, cols)
        blk = canvas[r * p:(r + 1) * p, c * p:(c + 1) * p]
        blk[:] = blk * (1 - OVERLAY_ALPHA) + color
        r, c = divmod(d, cols_b)
        blk = canvas[r * p:(r + 1) * p, off + c * p:off + (c + 1) * p]
        blk[:] = blk * (1 - OVERLAY_ALPHA) + color
    return RasterImage(canvas)
