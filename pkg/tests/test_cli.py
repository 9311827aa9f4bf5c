import json
import math
import shutil

import numpy as np
import pytest
import yaml
from click.testing import CliRunner
from scipy import ndimage as ndi

from textlineseg import cli as cli_mod
from textlineseg.cli import cli
from textlineseg.dataset_io import decode_instance_png, encode_gray_png, encode_instance_png, write_png


def run(*args, env=None):
    return CliRunner().invoke(cli, [str(a) for a in args], env=env or {}, catch_exceptions=False)


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    r = run("generate", "--out", root, "--counts", "3,0,1")
    assert r.exit_code == 0, r.output
    return root


@pytest.fixture(scope="module")
def calibrated(data, tmp_path_factory):
    cfg = tmp_path_factory.mktemp("cfg") / "run.yaml"
    r = run("--config", cfg, "calibrate", "--data", data)
    assert r.exit_code == 0, r.output
    return cfg


def copy_gt_as_pred(data, dest, split="test"):
    for p in data.glob(f"*/{split}/gt/*.png"):
        ms = p.parts[-4]
        target = dest / ms / split / p.name
        target.parent.mkdir(parents=True, exist_ok=True)
        shutil.copy(p, target)


def test_generate_counts(tmp_path):
    r = run("generate", "--out", tmp_path, "--counts", "1,0,0")
    assert r.exit_code == 0
    assert len(list(tmp_path.glob("*/train/img/*.png"))) == 3
    assert len(list(tmp_path.glob("*/train/gt/*.png"))) == 3
    assert run("generate", "--out", tmp_path, "--counts", "1,2").exit_code == 2


def test_calibrate_threshold(data, calibrated):
    cfg = yaml.safe_load(calibrated.read_text())
    for ms, thr in cfg["area_thresholds"].items():
        areas = []
        for p in sorted(data.glob(f"{ms}/train/gt/*.png")):
            gt = decode_instance_png(p.read_bytes())
            for k in range(1, gt.max() + 1):
                lab, n = ndi.label(gt == k, structure=np.ones((3, 3)))
                areas += np.bincount(lab.ravel())[1:].tolist()
        areas.sort()
        expected = 1.2 * areas[math.ceil(0.95 * len(areas)) - 1]
        assert thr == pytest.approx(expected, rel=1e-12)


def test_calibrate_prints_without_target(data):
    r = run("calibrate", "--data", data)
    assert r.exit_code == 0 and "area_thresholds" in r.output


def test_calibrate_needs_gt(tmp_path):
    write_png(tmp_path / "m" / "train" / "img" / "a.png", encode_gray_png(np.full((20, 20), 200)))
    assert run("calibrate", "--data", tmp_path).exit_code == 3


def test_blank_page_black_png(tmp_path):
    write_png(tmp_path / "d" / "m" / "test" / "img" / "blank.png", encode_gray_png(np.full((60, 80), 210)))
    r = run("segment", "--data", tmp_path / "d", "--out", tmp_path / "p", "--pipeline", "tauch")
    assert r.exit_code == 0, r.output
    assert not decode_instance_png((tmp_path / "p" / "m" / "test" / "blank.png").read_bytes()).any()


def test_tauch_counts_on_clean_family(data, tmp_path):
    r = run("segment", "--data", data, "--out", tmp_path, "--pipeline", "tauch")
    assert r.exit_code == 0, r.output
    ms = "synth-single-clean"
    for p in data.glob(f"{ms}/test/gt/*.png"):
        gt = decode_instance_png(p.read_bytes())
        pred = decode_instance_png((tmp_path / ms / "test" / p.name).read_bytes())
        assert pred.max() == gt.max()


def test_gpi_requires_calibration(data, tmp_path):
    assert run("segment", "--data", data, "--out", tmp_path, "--pipeline", "gpi").exit_code == 2


def test_gpi_after_calibration(data, calibrated, tmp_path):
    r = run("--config", calibrated, "segment", "--data", data, "--out", tmp_path / "p", "--pipeline", "gpi",
            "--postprocess", "srcb")
    assert r.exit_code == 0, r.output
    assert len(list((tmp_path / "p").glob("*/test/*.png"))) == 3


def test_perfect_prediction(data, tmp_path):
    copy_gt_as_pred(data, tmp_path / "gt-copy")
    r = run("evaluate", tmp_path / "gt-copy", "--data", data, "--out", tmp_path / "rep", "--overlays")
    assert r.exit_code == 0, r.output
    doc = json.loads((tmp_path / "rep" / "report.json").read_text())
    assert doc["average_liu"] == 1.0
    for ms in doc["manuscripts"]:
        assert all(v == 1.0 for v in ms["averages"].values())
    assert (tmp_path / "rep" / "metrics.png").stat().st_size > 0
    assert (tmp_path / "rep" / "report.csv").read_text().startswith("system,manuscript,page")
    assert len(list((tmp_path / "rep" / "overlays").rglob("*.png"))) == 3


def test_shift_sweep_monotone(data, tmp_path):
    gts = sorted(data.glob("*/test/gt/*.png"))
    scores = []
    for shift in (0, 2, 5, 9, 14):
        pred_root = tmp_path / f"s{shift}"
        for p in gts:
            gt = decode_instance_png(p.read_bytes())
            shifted = np.zeros_like(gt)
            shifted[shift:] = gt[: gt.shape[0] - shift]
            write_png(pred_root / p.parts[-4] / "test" / p.name, encode_instance_png(shifted))
        run("evaluate", pred_root, "--data", data, "--out", pred_root / "rep")
        doc = json.loads((pred_root / "rep" / "report.json").read_text())
        scores.append([m["averages"]["piu"] for m in doc["manuscripts"]])
    arr = np.array(scores)
    assert np.all(np.diff(arr, axis=0) <= 0) and np.all(arr[0] == 1.0)


def test_missing_prediction_flagged(data, tmp_path):
    copy_gt_as_pred(data, tmp_path / "p")
    victim = next((tmp_path / "p").glob("*/test/*.png"))
    victim.unlink()
    r = run("evaluate", tmp_path / "p", "--data", data, "--out", tmp_path / "rep")
    assert r.exit_code == 0 and f"missing prediction: {victim.stem}" in r.output
    doc = json.loads((tmp_path / "rep" / "report.json").read_text())
    flagged = [p for m in doc["manuscripts"] for p in m["pages"] if p["missing"]]
    assert [p["page"] for p in flagged] == [victim.stem] and flagged[0]["liu"] == 0.0


def test_prediction_size_mismatch(data, tmp_path):
    copy_gt_as_pred(data, tmp_path / "p")
    victim = next((tmp_path / "p").glob("*/test/*.png"))
    victim.write_bytes(encode_instance_png(np.zeros((5, 5), int)))
    assert run("evaluate", tmp_path / "p", "--data", data, "--out", tmp_path / "rep").exit_code == 3


def test_leaderboard(data, tmp_path):
    copy_gt_as_pred(data, tmp_path / "perfect")
    copy_gt_as_pred(data, tmp_path / "also")
    (tmp_path / "empty").mkdir()
    r = run("leaderboard", tmp_path / "perfect", "--data", data, "--out", tmp_path / "one")
    assert r.exit_code == 0
    rows = (tmp_path / "one" / "ranking.csv").read_text().splitlines()
    assert len(rows) == 2 and rows[1].startswith("1,perfect,1.000000")
    r = run("leaderboard", tmp_path / "empty", tmp_path / "perfect", tmp_path / "also", "--data", data,
            "--out", tmp_path / "all")
    assert r.exit_code == 0, r.output
    doc = json.loads((tmp_path / "all" / "leaderboard.json").read_text())
    assert [e["system"] for e in doc["ranking"]] == ["also", "perfect", "empty"]
    assert [e["rank"] for e in doc["ranking"]] == [1, 2, 3]
    assert (tmp_path / "all" / "leaderboard.png").stat().st_size > 0


def test_leaderboard_duplicate_names(data, tmp_path):
    (tmp_path / "a" / "x").mkdir(parents=True)
    (tmp_path / "b" / "x").mkdir(parents=True)
    assert run("leaderboard", tmp_path / "a" / "x", tmp_path / "b" / "x", "--data", data,
               "--out", tmp_path / "o").exit_code == 2


def test_data_root_from_env(data, tmp_path):
    copy_gt_as_pred(data, tmp_path / "p")
    r = run("evaluate", tmp_path / "p", "--out", tmp_path / "rep", env={"TEXTLINESEG_DATA": str(data)})
    assert r.exit_code == 0
    assert run("evaluate", tmp_path / "p", "--out", tmp_path / "rep", env={"TEXTLINESEG_DATA": ""}).exit_code == 2


def test_exit_codes(data, tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("pipeline: cnn\n")
    assert run("--config", bad, "segment", "--data", data, "--out", tmp_path / "p").exit_code == 2
    assert run("--config", tmp_path / "absent.yaml", "segment", "--data", data, "--out", tmp_path).exit_code == 2
    assert run("segment", "--data", tmp_path / "nowhere", "--out", tmp_path / "p").exit_code == 3
    corrupt = tmp_path / "c" / "m" / "test" / "img" / "x.png"
    write_png(corrupt, b"not a png")
    assert run("segment", "--data", tmp_path / "c", "--out", tmp_path / "p").exit_code == 3


def test_page_failure_exit_code(data, tmp_path, monkeypatch):
    real = cli_mod.segment_image

    def flaky(img, cfg, manuscript):
        if manuscript == "synth-twocol-dense":
            raise RuntimeError("boom")
        return real(img, cfg, manuscript)

    monkeypatch.setattr(cli_mod, "segment_image", flaky)
    r = CliRunner().invoke(cli, ["segment", "--data", str(data), "--out", str(tmp_path), "--workers", "1"])
    assert r.exit_code == 4
    assert "RuntimeError: boom" in r.output
    assert len(list(tmp_path.glob("*/test/*.png"))) == 2
