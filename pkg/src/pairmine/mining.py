"""Candidate-pair mining per source type and the per-pair evaluation pipeline.

Each source kind has its own sampler: consecutive frames for video (with a
skip-ahead when consecutive frames are near-duplicates), a 1-vs-2+3 sweep
over three rendered pose lists for 3D scenes, and an all-pairs search inside
target-id groups of stills.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .config import RunConfig
from .correspondence import OverlapReport, PatchGrid, accept_pair, symmetric_overlap
from .errors import (DecodeError, DegenerateConfiguration, DimensionError, EmptyInput,
                     InsufficientMatches, NoModelFound, ParamError)
from .features import detect_and_describe
from .geometry import index_to_area, ransac_homography
from .imgcore import RasterImage, decode_image, to_grayscale
from .matching import match_descriptors
from .seeding import derive_seed

log = logging.getLogger(__name__)

SOURCE_KINDS = ("video", "pose_lists", "target_group")
TURNS_DEG = (60, 120, 240, 300)


@dataclass
class PairSource:
    kind: str
    source_id: str
    members: list
    interval: int | None = None
    fps: float | None = None

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise ParamError(f"unknown source kind {self.kind!r}")
        if not self.members:
            raise ParamError(f"source {self.source_id!r} has no members")


@dataclass
class PairRecord:
    pair_id: str
    source_id: str
    path_a: str
    path_b: str
    overlap_12: float
    overlap_21: float
    overlap: float
    homography: list
    correspondences: list
    patch_size: int
    grid: tuple
    seed: int
    source_kind: str = ""

    def to_dict(self) -> dict:
        return {
            "pair_id": self.pair_id,
            "source_id": self.source_id,
            "source_kind": self.source_kind,
            "path_a": self.path_a,
            "path_b": self.path_b,
            "overlap_12": self.overlap_12,
            "overlap_21": self.overlap_21,
            "overlap": self.overlap,
            "homography": list(self.homography),
            "correspondences": [list(c) for c in self.correspondences],
            "patch_size": self.patch_size,
            "grid": list(self.grid),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PairRecord":
        return cls(
            pair_id=d["pair_id"], source_id=d["source_id"], path_a=d["path_a"],
            path_b=d["path_b"], overlap_12=d["overlap_12"], overlap_21=d["overlap_21"],
            overlap=d["overlap"], homography=list(d["homography"]),
            correspondences=d["correspondences"],
            patch_size=d["patch_size"], grid=tuple(d["grid"]), seed=d["seed"],
            source_kind=d.get("source_kind", ""),
        )


@dataclass
class Evaluation:
    report: OverlapReport
    record: PairRecord | None = None
    homography: np.ndarray | None = None
    n_matches: int = 0
    n_inliers: int = 0


class FeatureCache:
    """Per-image keypoints and descriptors, computed once per reference."""

    def __init__(self, cfg: RunConfig, load=decode_image):
        self.cfg = cfg
        self.load = load
        self._images = {}
        self._features = {}

    def image(self, ref) -> RasterImage:
        if ref not in self._images:
            self._images[ref] = self.load(ref)
        return self._images[ref]

    def features(self, ref):
        if ref not in self._features:
            self._features[ref] = extract(self.image(ref), self.cfg)
        return self._features[ref]


def _check_dims(img: RasterImage, cfg: RunConfig):
    m = cfg.min_image_size
    if img.width < m or img.height < m:
        raise DimensionError(f"image {img.width}x{img.height} is smaller than {m} px")


def extract(img: RasterImage, cfg: RunConfig):
    _check_dims(img, cfg)
    return detect_and_describe(to_grayscale(img), cfg.sift)


def evaluate_features(feat_a, feat_b, size_a, size_b, cfg: RunConfig, seed: int,
                      **record_fields) -> Evaluation:
    """Match, fit, and score two views whose features are already extracted."""
    (kps_a, desc_a), (kps_b, desc_b) = feat_a, feat_b
    grid_a = PatchGrid(size_a[0], size_a[1], cfg.patch_size)
    grid_b = PatchGrid(size_b[0], size_b[1], cfg.patch_size)
    if len(desc_a) == 0 or len(desc_b) == 0:
        return Evaluation(OverlapReport(reject_reason="too_few_matches"))
    try:
        matches = match_descriptors(desc_a, desc_b, cfg.ratio)
    except EmptyInput:
        return Evaluation(OverlapReport(reject_reason="too_few_matches"))
    if len(matches) < cfg.min_matches:
        return Evaluation(OverlapReport(reject_reason="too_few_matches"), n_matches=len(matches))
    try:
        ransac = ransac_homography(matches, kps_a, kps_b, cfg.ransac_threshold,
                                   cfg.ransac_max_iters, cfg.ransac_confidence,
                                   derive_seed(seed, "ransac"))
        H = index_to_area(ransac.homography)
        report = symmetric_overlap(H, grid_a, grid_b, cfg.n_points,
                                   derive_seed(seed, "overlap"), cfg.accept_band)
    except (InsufficientMatches, NoModelFound):
        return Evaluation(OverlapReport(reject_reason="too_few_matches"), n_matches=len(matches))
    except DegenerateConfiguration:
        return Evaluation(OverlapReport(reject_reason="no_model"), n_matches=len(matches))
    ev = Evaluation(report, None, H, len(matches), ransac.n_inliers)
    if report.accepted:
        ev.record = PairRecord(
            pair_id=record_fields.get("pair_id", ""),
            source_id=record_fields.get("source_id", ""),
            source_kind=record_fields.get("source_kind", ""),
            path_a=str(record_fields.get("path_a", "")),
            path_b=str(record_fields.get("path_b", "")),
            overlap_12=report.overlap_12, overlap_21=report.overlap_21,
            overlap=report.overlap,
            homography=[float(v) for v in H.ravel()],
            correspondences=report.map_12.entries,
            patch_size=cfg.patch_size, grid=(grid_a.rows, grid_a.cols), seed=int(seed),
        )
    return ev


def evaluate_pair(img_a: RasterImage, img_b: RasterImage, cfg: RunConfig | None = None,
                  seed: int = 0, **record_fields) -> Evaluation:
    """Full pipeline for one candidate pair.

    Geometric failures come back as a rejected report; decode and size
    problems raise.
    """
    cfg = cfg or RunConfig()
    return evaluate_features(extract(img_a, cfg), extract(img_b, cfg),
                             (img_a.width, img_a.height), (img_b.width, img_b.height),
                             cfg, seed, **record_fields)


@dataclass
class MiningResult:
    records: list = field(default_factory=list)
    skips: list = field(default_factory=list)


class _Evaluator:
    """Evaluates member pairs of one source, logging every rejection."""

    def __init__(self, source_id, kind, cfg, dataset_seed, cache, result):
        self.source_id = source_id
        self.kind = kind
        self.cfg = cfg
        self.dataset_seed = dataset_seed
        self.cache = cache
        self.result = result

    def __call__(self, ref_a, ref_b, pair_id, record_skip=True):
        seed = derive_seed(self.dataset_seed, self.source_id, ref_a, ref_b)
        candidate = [str(ref_a), str(ref_b)]
        try:
            img_a, img_b = self.cache.image(ref_a), self.cache.image(ref_b)
            ev = evaluate_features(self.cache.features(ref_a), self.cache.features(ref_b),
                                   (img_a.width, img_a.height), (img_b.width, img_b.height),
                                   self.cfg, seed, pair_id=pair_id, source_id=self.source_id,
                                   source_kind=self.kind, path_a=ref_a, path_b=ref_b)
        except (DecodeError, DimensionError) as exc:
            self.result.skips.append({"source_id": self.source_id, "candidate": candidate,
                                      "reject_reason": "error", "detail": str(exc)})
            return None
        if record_skip and not ev.report.accepted:
            self.result.skips.append({"source_id": self.source_id, "candidate": candidate,
                                      "reject_reason": ev.report.reject_reason,
                                      "overlap": ev.report.overlap})
        return ev


def mine_video(frames, interval: int | None = None, cfg: RunConfig | None = None,
               seed: int | None = None, source_id: str = "video", load=decode_image,
               result: MiningResult | None = None) -> list:
    """Consecutive subsampled frames, skipping ahead one frame when too similar."""
    cfg = cfg or RunConfig()
    seed = cfg.dataset_seed if seed is None else seed
    interval = interval or cfg.video_interval
    if interval < 1:
        raise ParamError("interval must be >= 1")
    result = result if result is not None else MiningResult()
    sub = list(range(0, len(frames), interval))
    evaluate = _Evaluator(source_id, "video", cfg, seed, FeatureCache(cfg, load), result)
    out = []
    for k in range(len(sub) - 1):
        i, j = sub[k], sub[k + 1]
        ev = evaluate(frames[i], frames[j], f"{source_id}/{i:06d}-{j:06d}")
        if ev is not None and ev.report.reject_reason == "too_high" and k + 2 < len(sub):
            j = sub[k + 2]
            ev = evaluate(frames[i], frames[j], f"{source_id}/{i:06d}-{j:06d}")
        if ev is not None and ev.record is not None:
            out.append(ev.record)
    result.records.extend(out)
    return out


def _select_min_overlap(candidates, cfg: RunConfig):
    """Lowest in-band overlap; ties fall to the first key in index order."""
    lo, hi = cfg.select_band
    best = None
    for key, ev in sorted(candidates, key=lambda c: c[0]):
        if ev is None or ev.record is None or not lo <= ev.report.overlap <= hi:
            continue
        if best is None or ev.report.overlap < best[1].report.overlap:
            best = (key, ev)
    return None if best is None else best[1].record


def mine_pose_lists(list1, list2, list3, cfg: RunConfig | None = None, seed: int | None = None,
                    source_id: str = "scene", load=decode_image,
                    result: MiningResult | None = None):
    """Best pair between the first station's views and those of stations 2 and 3."""
    cfg = cfg or RunConfig()
    seed = cfg.dataset_seed if seed is None else seed
    for name, lst in (("list1", list1), ("list2", list2), ("list3", list3)):
        if len(lst) != 8:
            raise ParamError(f"{name} must hold exactly 8 views, got {len(lst)}")
    result = result if result is not None else MiningResult()
    evaluate = _Evaluator(source_id, "pose_lists", cfg, seed, FeatureCache(cfg, load), result)
    pool = list(list2) + list(list3)
    candidates = []
    for i, a in enumerate(list1):
        for j, b in enumerate(pool):
            ev = evaluate(a, b, f"{source_id}/{i:02d}-{j:02d}", record_skip=False)
            candidates.append(((i, j), ev))
    rec = _select_min_overlap(candidates, cfg)
    _log_unselected(result, source_id, candidates, rec, lambda k: (list1[k[0]], pool[k[1]]))
    if rec is not None:
        result.records.append(rec)
    return rec


def mine_target_group(group, cfg: RunConfig | None = None, seed: int | None = None,
                      source_id: str = "target", load=decode_image,
                      result: MiningResult | None = None):
    """Lowest in-band overlap among all unordered pairs of a target-id group."""
    cfg = cfg or RunConfig()
    seed = cfg.dataset_seed if seed is None else seed
    if len(group) < 2:
        raise ParamError(f"target group {source_id!r} needs at least 2 members")
    result = result if result is not None else MiningResult()
    evaluate = _Evaluator(source_id, "target_group", cfg, seed, FeatureCache(cfg, load), result)
    candidates = []
    for i, j in combinations(range(len(group)), 2):
        ev = evaluate(group[i], group[j], f"{source_id}/{i:04d}-{j:04d}", record_skip=False)
        candidates.append(((i, j), ev))
    rec = _select_min_overlap(candidates, cfg)
    _log_unselected(result, source_id, candidates, rec, lambda k: (group[k[0]], group[k[1]]))
    if rec is not None:
        result.records.append(rec)
    return rec


def _log_unselected(result, source_id, candidates, chosen, refs):
    for key, ev in candidates:
        if ev is None or (chosen is not None and ev.record is chosen):
            continue
        reason = ev.report.reject_reason
        if reason == "none":
            reason = "not_selected"
        a, b = refs(key)
        result.skips.append({"source_id": source_id, "candidate": [str(a), str(b)],
                             "reject_reason": reason, "overlap": ev.report.overlap})


def mine_source(src: PairSource, cfg: RunConfig, load=decode_image) -> MiningResult:
    result = MiningResult()
    seed = cfg.dataset_seed
    if src.kind == "video":
        interval = src.interval
        if interval is None and src.fps:
            interval = max(1, int(round(src.fps)))
        mine_video(src.members, interval or cfg.video_interval, cfg, seed, src.source_id,
                   load, result)
    elif src.kind == "pose_lists":
        if len(src.members) != 3:
            raise ParamError(f"source {src.source_id!r}: pose_lists needs 3 lists")
        mine_pose_lists(*src.members, cfg=cfg, seed=seed, source_id=src.source_id,
                        load=load, result=result)
    else:
        mine_target_group(src.members, cfg, seed, src.source_id, load, result)
    return result


@dataclass
class PoseScript:
    sensor_height_m: float
    stations: list

    def to_dict(self) -> dict:
        return {"sensor_height_m": self.sensor_height_m, "stations": self.stations}

    @property
    def poses(self):
        return [(s["x_m"], s["y_m"], h) for s in self.stations for h in s["headings_deg"]]


def generate_pose_script(seed: int, height_range=(1.0, 1.8), n_stations: int = 3) -> PoseScript:
    """Agent walk: sweep 8 x 45 deg, turn by a 60-degree multiple, step 0.5-1 m, repeat."""
    rng = np.random.default_rng(seed)
    height = float(rng.uniform(*height_range))
    x = y = 0.0
    heading = 0
    stations = []
    for k in range(n_stations):
        if k > 0:
            heading = (heading + int(rng.choice(TURNS_DEG))) % 360
            step = float(rng.uniform(0.5, 1.0))
            x += step * math.cos(math.radians(heading))
            y += step * math.sin(math.radians(heading))
        stations.append({"x_m": round(x, 9), "y_m": round(y, 9),
                         "headings_deg": [(heading + 45 * i) % 360 for i in range(8)]})
    return PoseScript(round(height, 9), stations)


def load_source_spec(path) -> list:
    """Parse a mining spec: {"sources": [{kind, source_id, members | lists | group}]}."""
    with open(path, encoding="utf-8") as f:
        spec = json.load(f)
    items = spec["sources"] if isinstance(spec, dict) else spec
    sources = []
    seen = set()
    for item in items:
        kind = item.get("kind")
        sid = str(item.get("source_id", ""))
        if not sid or sid in seen:
            raise ParamError(f"missing or duplicate source_id {sid!r}")
        seen.add(sid)
        if kind == "video":
            members = item.get("members") or item.get("frames")
        elif kind == "pose_lists":
            members = item.get("lists")
        elif kind == "target_group":
            members = item.get("group") or item.get("members")
        else:
            raise ParamError(f"source {sid!r}: unknown kind {kind!r}")
        sources.append(PairSource(kind, sid, members, item.get("interval"), item.get("fps")))
    return sources
