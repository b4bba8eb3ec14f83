"""Command-line entry point.

Exit codes: 0 success (or pair accepted), 1 pair rejected (``pair`` only),
2 any error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .config import CONFIG_ENV, RunConfig, load_config
from .dataset import (dataset_stats, make_header, merge_manifests, read_manifest,
                      render_correspondence_overlay, write_manifest)
from .errors import PairMineError
from .imgcore import decode_image, encode_png
from .mining import PairRecord, evaluate_pair, generate_pose_script, load_source_spec, mine_source
from .seeding import derive_seed

log = logging.getLogger("pairmine")


class UsageError(Exception):
    pass


def _add_config_args(p):
    p.add_argument("--config", help=f"key=value config file (default: ${CONFIG_ENV})")
    p.add_argument("--seed", type=int, help="dataset seed; fixes every random choice")
    p.add_argument("--patch-size", type=int)
    p.add_argument("--n-points", type=int)
    p.add_argument("--accept-band", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--select-band", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--ratio", type=float)
    p.add_argument("--ransac-threshold", type=float)
    p.add_argument("--ransac-max-iters", type=int)
    p.add_argument("--min-matches", type=int)
    p.add_argument("--keypoint-cap", type=int)


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    cfg = cfg.with_overrides(
        dataset_seed=args.seed, patch_size=args.patch_size, n_points=args.n_points,
        accept_band=args.accept_band, select_band=args.select_band, ratio=args.ratio,
        ransac_threshold=args.ransac_threshold, ransac_max_iters=args.ransac_max_iters,
        min_matches=args.min_matches, keypoint_cap=args.keypoint_cap,
        threads=getattr(args, "threads", None),
    )
    return cfg.validate()


def _print_summary(summary: dict, stream=None):
    stream = stream or sys.stdout
    if stream.isatty():
        width = max(len(k) for k in summary)
        for k, v in summary.items():
            stream.write(f"{k:<{width}}  {v}\n")
    else:
        stream.write(json.dumps(summary, sort_keys=True) + "\n")


def cmd_pair(args) -> int:
    cfg = _config(args)
    img_a = decode_image(args.path_a)
    img_b = decode_image(args.path_b)
    seed = derive_seed(cfg.dataset_seed, "pair", args.path_a, args.path_b)
    ev = evaluate_pair(img_a, img_b, cfg, seed, pair_id="pair", path_a=args.path_a,
                       path_b=args.path_b)
    out = ev.report.to_dict()
    out["n_matches"] = ev.n_matches
    out["n_inliers"] = ev.n_inliers
    out["homography"] = None if ev.homography is None else [float(v) for v in ev.homography.ravel()]
    if args.overlay:
        if ev.report.map_12 is None:
            log.warning("no homography; overlay not written")
        else:
            rec = ev.record or PairRecord(
                "pair", "", args.path_a, args.path_b, ev.report.overlap_12,
                ev.report.overlap_21, ev.report.overlap, out["homography"],
                ev.report.map_12.entries, cfg.patch_size,
                (img_a.height // cfg.patch_size, img_a.width // cfg.patch_size), seed)
            encode_png(render_correspondence_overlay(img_a, img_b, rec), args.overlay)
            out["overlay"] = args.overlay
    sys.stdout.write(json.dumps(out, indent=2) + "\n")
    return 0 if ev.report.accepted else 1


def _safe_name(source_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", source_id) or "source"


def cmd_mine(args) -> int:
    cfg = _config(args)
    spec_path = Path(args.spec)
    sources = load_source_spec(spec_path)
    base = spec_path.resolve().parent

    def load(ref):
        p = Path(ref)
        return decode_image(p if p.is_absolute() else base / p)

    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        results = list(pool.map(lambda s: mine_source(s, cfg, load), sources))

    out = Path(args.out_dir)
    shard_dir = out / "shards"
    shard_dir.mkdir(parents=True, exist_ok=True)
    records = [r for res in results for r in res.records]
    grids = {tuple(r.grid) for r in records}
    header = make_header(cfg.patch_size, grids.pop() if len(grids) == 1 else None,
                         cfg.accept_band, cfg.dataset_seed, args.created_at)
    shards = []
    for src, res in zip(sources, results):
        path = shard_dir / f"{_safe_name(src.source_id)}.jsonl"
        write_manifest(res.records, header, path)
        shards.append(path)
    with open(out / "skips.jsonl", "w", encoding="utf-8") as f:
        for res in results:
            for entry in res.skips:
                f.write(json.dumps(entry, sort_keys=True) + "\n")
    merged = merge_manifests(shards, header, out / "manifest.jsonl")
    summary = {"sources": len(sources), "pairs": len(merged),
               "skipped": sum(len(r.skips) for r in results),
               "manifest": str(out / "manifest.jsonl")}
    _print_summary(summary)
    return 0


def cmd_posescript(args) -> int:
    if args.count < 1:
        raise UsageError("--count must be >= 1")
    cfg = load_config(args.config).validate()
    scripts = [generate_pose_script(derive_seed(args.seed, i), cfg.sensor_height_range).to_dict()
               for i in range(args.count)]
    text = json.dumps(scripts, indent=2) + "\n"
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(text, encoding="utf-8")
    return 0


def cmd_stats(args) -> int:
    header, records = read_manifest(args.manifest)
    stats = dataset_stats(records, key=args.by)
    if args.out_dir:
        from .plotting import write_stats_figures

        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "stats.json").write_text(stats.to_json() + "\n", encoding="utf-8")
        (out / "stats.txt").write_text(stats.to_table(), encoding="utf-8")
        write_stats_figures(stats, out, header.get("accept_band"))
    if args.json or not sys.stdout.isatty():
        sys.stdout.write(stats.to_json() + "\n")
    else:
        sys.stdout.write(stats.to_table())
    return 0


def cmd_viz(args) -> int:
    _, records = read_manifest(args.manifest)
    if args.pair_id:
        wanted = set(args.pair_id)
        records = [r for r in records if r.pair_id in wanted]
        missing = wanted - {r.pair_id for r in records}
        if missing:
            raise UsageError(f"pair_id not in manifest: {sorted(missing)[0]}")
    root = Path(args.root) if args.root else Path(args.manifest).resolve().parent
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def resolve(ref):
        p = Path(ref)
        return p if p.is_absolute() else root / p

    for rec in records:
        img = render_correspondence_overlay(decode_image(resolve(rec.path_a)),
                                            decode_image(resolve(rec.path_b)), rec)
        encode_png(img, out / f"{_safe_name(rec.pair_id)}.png")
    _print_summary({"rendered": len(records), "out_dir": str(out)})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pairmine",
                                     description="Mine overlapping multi-view image pairs.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pair", help="evaluate one candidate pair")
    p.add_argument("path_a")
    p.add_argument("path_b")
    p.add_argument("--overlay", help="write a correspondence overlay PNG here")
    _add_config_args(p)
    p.set_defaults(func=cmd_pair)

    p = sub.add_parser("mine", help="mine every source listed in a JSON spec")
    p.add_argument("spec")
    p.add_argument("out_dir")
    p.add_argument("--threads", type=int)
    p.add_argument("--created-at", default=os.environ.get("SOURCE_DATE_EPOCH"),
                   help="header timestamp (default: $SOURCE_DATE_EPOCH, else null)")
    _add_config_args(p)
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("posescript", help="emit agent-walk pose scripts for a renderer")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_posescript)

    p = sub.add_parser("stats", help="summarize a manifest")
    p.add_argument("manifest")
    p.add_argument("--out-dir", help="write stats.json, stats.txt and PNG figures here")
    p.add_argument("--by", default="source_id", choices=["source_id", "source_kind"])
    p.add_argument("--json", action="store_true", help="JSON output even on a terminal")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("viz", help="render correspondence overlays for manifest records")
    p.add_argument("manifest")
    p.add_argument("out_dir")
    p.add_argument("--pair-id", action="append")
    p.add_argument("--root", help="directory image paths are relative to")
    p.set_defaults(func=cmd_viz)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (PairMineError, UsageError, OSError, KeyError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"pairmine {args.command}: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
