"""Run configuration and its key=value file format.

A config file holds one ``key = value`` per line; ``#`` starts a comment,
values are JSON scalars or two-element lists, and bare words are strings::

    patch_size = 16
    accept_band = [0.50, 0.75]
    ransac_threshold = 3.0
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields, replace

from .errors import ParamError
from .features import SiftParams

CONFIG_ENV = "PAIRMINE_CONFIG"


@dataclass(frozen=True)
class RunConfig:
    patch_size: int = 16
    n_points: int = 100
    select_band: tuple = (0.50, 0.70)
    accept_band: tuple = (0.50, 0.75)
    ratio: float = 0.75
    ransac_threshold: float = 3.0
    ransac_max_iters: int = 2000
    ransac_confidence: float = 0.999
    min_matches: int = 12
    keypoint_cap: int = 2000
    contrast_threshold: float = 0.03
    edge_ratio: float = 10.0
    sift_sigma: float = 1.6
    scales_per_octave: int = 3
    dataset_seed: int = 0
    threads: int = 1
    video_interval: int = 30
    sensor_height_range: tuple = (1.0, 1.8)
    min_image_size: int = 64

    def __post_init__(self):
        for name in ("select_band", "accept_band", "sensor_height_range"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))

    def validate(self) -> "RunConfig":
        for name in ("select_band", "accept_band"):
            band = getattr(self, name)
            if len(band) != 2 or not (0 <= band[0] < band[1] <= 1):
                raise ParamError(f"{name} must satisfy 0 <= lo < hi <= 1, got {list(band)}")
        for name in ("patch_size", "n_points", "ransac_max_iters", "min_matches",
                     "keypoint_cap", "threads", "video_interval", "scales_per_octave",
                     "min_image_size"):
            if int(getattr(self, name)) < 1:
                raise ParamError(f"{name} must be a positive count")
        if not 0 < self.ratio <= 1:
            raise ParamError("ratio must lie in (0, 1]")
        if not 0 < self.ransac_confidence < 1:
            raise ParamError("ransac_confidence must lie in (0, 1)")
        if self.ransac_threshold <= 0 or self.sift_sigma <= 0 or self.contrast_threshold <= 0:
            raise ParamError("thresholds and sigma must be positive")
        lo, hi = self.sensor_height_range
        if not 0 < lo <= hi:
            raise ParamError("sensor_height_range must satisfy 0 < lo <= hi")
        return self

    @property
    def sift(self) -> SiftParams:
        return SiftParams(sigma=self.sift_sigma, scales_per_octave=self.scales_per_octave,
                          contrast_threshold=self.contrast_threshold,
                          edge_ratio=self.edge_ratio, keypoint_cap=self.keypoint_cap)

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParamError(f"config line {lineno}: expected key = value")
        key, raw = (part.strip() for part in line.split("=", 1))
        key = key.replace(".", "_").replace("-", "_")
        if key not in known:
            raise ParamError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(raw)
    try:
        return replace(base or RunConfig(), **values)
    except (TypeError, ValueError) as exc:
        raise ParamError(f"bad config value: {exc}") from exc


def load_config(path=None) -> RunConfig:
    """Read ``path``, else $PAIRMINE_CONFIG, else defaults."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return RunConfig()
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read())
