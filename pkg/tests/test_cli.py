import json

import numpy as np
import pytest
from PIL import Image

from pairmine.cli import main
from synthetic import pan_frames, texture


def save(path, arr):
    Image.fromarray(np.clip(np.rint(arr * 255), 0, 255).astype(np.uint8)).save(path)
    return str(path)


@pytest.fixture
def shift_pair(tmp_path):
    big = texture(8, 224 + 64)[:224]
    return save(tmp_path / "a.png", big[:, :224]), save(tmp_path / "b.png", big[:, 64:288])


@pytest.fixture
def pan_spec(tmp_path):
    frames = pan_frames(10, 16)
    names = [save(tmp_path / f"f{i:02d}.png", f.data) for i, f in enumerate(frames)]
    spec = {"sources": [{"kind": "video", "source_id": "pan",
                         "frames": [n.rsplit("/", 1)[1] for n in names], "interval": 2}]}
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec))
    return path


def test_pair_identical_rejected(shift_pair, capsys):
    a, _ = shift_pair
    assert main(["pair", a, a]) == 1
    out = json.loads(capsys.readouterr().out)
    assert out["overlap"] == 1.0 and out["reject_reason"] == "too_high"


def test_pair_accepted_with_overlay(shift_pair, tmp_path, capsys):
    a, b = shift_pair
    ov = tmp_path / "ov.png"
    assert main(["pair", a, b, "--overlay", str(ov)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["accepted"] and abs(out["overlap"] - 140 / 196) <= 0.05
    assert Image.open(ov).size == (224 + 8 + 224, 224)


def test_pair_rejected_overlay_still_written(shift_pair, tmp_path):
    a, _ = shift_pair
    ov = tmp_path / "same.png"
    assert main(["pair", a, a, "--overlay", str(ov)]) == 1
    assert ov.exists()


def test_pair_missing_path(shift_pair, tmp_path, capsys):
    missing = str(tmp_path / "missing.png")
    assert main(["pair", missing, shift_pair[1]]) == 2
    assert "missing.png" in capsys.readouterr().err


def test_mine_pan_video(pan_spec, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["mine", str(pan_spec), str(out), "--created-at", "0"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["pairs"] == 3 and summary["sources"] == 1
    lines = (out / "manifest.jsonl").read_text().splitlines()
    assert len(lines) == 4
    assert (out / "shards" / "pan.jsonl").exists()
    skips = [json.loads(x) for x in (out / "skips.jsonl").read_text().splitlines()]
    assert all(s["source_id"] == "pan" for s in skips)


def test_mine_zero_sources(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text('{"sources": []}')
    assert main(["mine", str(spec), str(tmp_path / "o")]) == 0
    lines = (tmp_path / "o" / "manifest.jsonl").read_text().splitlines()
    assert len(lines) == 1 and json.loads(lines[0])["format_version"] == 1


def test_mine_bad_band_writes_nothing(pan_spec, tmp_path, capsys):
    out = tmp_path / "never"
    assert main(["mine", str(pan_spec), str(out), "--accept-band", "0.8", "0.5"]) == 2
    assert not out.exists()
    assert "band" in capsys.readouterr().err


def test_config_file_and_env(pan_spec, tmp_path, monkeypatch):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# bad run\naccept_band = [0.9, 0.1]\n")
    monkeypatch.setenv("PAIRMINE_CONFIG", str(cfg))
    assert main(["mine", str(pan_spec), str(tmp_path / "x")]) == 2
    # flags win over the file
    assert main(["mine", str(pan_spec), str(tmp_path / "y"), "--accept-band", "0.5", "0.75"]) == 0


def test_posescript(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["posescript", "--seed", "7", "--count", "2", "--out", str(a)]) == 0
    assert main(["posescript", "--seed", "7", "--count", "2", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    scripts = json.loads(a.read_text())
    assert len(scripts) == 2
    assert all(sum(len(s["headings_deg"]) for s in sc["stations"]) == 24 for sc in scripts)
    assert main(["posescript", "--seed", "7", "--count", "0", "--out", str(a)]) == 2


def test_stats_and_viz(pan_spec, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["mine", str(pan_spec), str(out)]) == 0
    capsys.readouterr()
    rep = tmp_path / "rep"
    assert main(["stats", str(out / "manifest.jsonl"), "--out-dir", str(rep), "--json"]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["per_source"] == {"pan": 3}
    for name in ("stats.json", "stats.txt", "sources.png", "overlap_hist.png",
                 "correspondence_hist.png"):
        assert (rep / name).stat().st_size > 0
    viz = tmp_path / "viz"
    assert main(["viz", str(out / "manifest.jsonl"), str(viz), "--root", str(tmp_path)]) == 0
    pngs = sorted(viz.glob("*.png"))
    assert len(pngs) == 3 and Image.open(pngs[0]).size == (456, 224)
    assert main(["viz", str(out / "manifest.jsonl"), str(viz), "--root", str(tmp_path),
                 "--pair-id", "nope"]) == 2
