"""End-to-end CLI behavior: subcommands, env vars, exit codes."""

import json

import numpy as np
import pytest
from PIL import Image

from flowsynth.cli import EXIT_DATA, EXIT_IO, EXIT_OK, EXIT_USAGE, main
from flowsynth.flowio import read_flo, read_manifest, write_flo
from flowsynth.pipeline import synthesize_texture


@pytest.fixture(scope="module")
def image_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    for i in range(3):
        img = (synthesize_texture(96, 128, seed=20 + i) * 255).round().astype(np.uint8)
        Image.fromarray(img).save(d / f"img{i}.png")
    return d


FAST_CONFIG = {
    "synthesis": {
        "n_layers_range": [2, 3],
        "occluder_size_range": [300, 1200],
        "component_counts": [15, 60],
    },
    "augment": {"crop_size": None},
}


def generate(image_dir, out_dir, tmp_path, count=3, extra=()):
    config = tmp_path / "config.json"
    config.write_text(json.dumps(FAST_CONFIG))
    return main([
        "generate", "--input", str(image_dir), "--output", str(out_dir),
        "--count", str(count), "--seed", "7", "--config", str(config),
        "--no-augment", *extra,
    ])


def test_generate_writes_dataset(image_dir, tmp_path, capsys):
    out = tmp_path / "out"
    assert generate(image_dir, out, tmp_path) == EXIT_OK
    header, records = read_manifest(out / "manifest.jsonl")
    assert len(records) == 3
    assert {r["id"] for r in records} == {"000000", "000001", "000002"}
    for r in records:
        assert (out / r["flow"]).exists()
    assert "wrote 3 samples" in capsys.readouterr().out


def test_generate_is_reproducible(image_dir, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert generate(image_dir, a, tmp_path) == EXIT_OK
    assert generate(image_dir, b, tmp_path) == EXIT_OK
    for name in ("000001_img1.png", "000001_flow.flo", "000002_occ.png"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_generate_kitti_format(image_dir, tmp_path):
    out = tmp_path / "out"
    assert generate(image_dir, out, tmp_path, count=1, extra=("--format", "both")) == EXIT_OK
    assert (out / "000000_flow.flo").exists()
    assert (out / "000000_flow.png").exists()


def test_generate_requires_input_and_output(capsys):
    assert main(["generate", "--count", "1"]) == EXIT_USAGE
    assert "--input and --output are required" in capsys.readouterr().err


def test_unknown_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["generate", "--frobnicate"])
    assert exc.value.code == EXIT_USAGE


def test_env_var_supplies_default(image_dir, tmp_path, monkeypatch):
    out = tmp_path / "envout"
    monkeypatch.setenv("FLOWSYNTH_COUNT", "2")
    config = tmp_path / "config.json"
    config.write_text(json.dumps(FAST_CONFIG))
    assert main([
        "generate", "--input", str(image_dir), "--output", str(out),
        "--config", str(config), "--no-augment",
    ]) == EXIT_OK
    _, records = read_manifest(out / "manifest.jsonl")
    assert len(records) == 2


@pytest.fixture(scope="module")
def dataset(image_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("dataset")
    config = out / "config.json"
    config.write_text(json.dumps(FAST_CONFIG))
    code = main([
        "generate", "--input", str(image_dir), "--output", str(out),
        "--count", "3", "--seed", "11", "--config", str(config), "--no-augment",
    ])
    assert code == EXIT_OK
    return out


def test_validate_passes_clean_dataset(dataset, capsys):
    assert main(["validate", str(dataset / "manifest.jsonl")]) == EXIT_OK
    out = capsys.readouterr().out
    for i in range(3):
        assert f"{i:06d}: pass" in out
    assert "all 3 samples passed" in out


def test_validate_flags_corrupted_flow(dataset, tmp_path, capsys):
    import shutil

    broken = tmp_path / "broken"
    shutil.copytree(dataset, broken)
    path = broken / "000001_flow.flo"
    flow = read_flo(path)
    write_flo(flow + np.array([12.0, 0.0], np.float32), path)
    assert main(["validate", str(broken / "manifest.jsonl")]) == EXIT_DATA
    captured = capsys.readouterr()
    assert "000001: FAIL" in captured.out
    assert "000001" in captured.err


def test_validate_empty_manifest(tmp_path, capsys):
    path = tmp_path / "manifest.jsonl"
    path.write_text(json.dumps({"schema_version": 1, "config": {}}) + "\n")
    assert main(["validate", str(path)]) == EXIT_DATA
    assert "empty corpus" in capsys.readouterr().err


def test_validate_missing_manifest_is_io_error(tmp_path, capsys):
    assert main(["validate", str(tmp_path / "nope.jsonl")]) == EXIT_IO


def test_eval_perfect_predictions(dataset, tmp_path, capsys):
    pred = tmp_path / "pred"
    gt = tmp_path / "gt"
    pred.mkdir()
    gt.mkdir()
    _, records = read_manifest(dataset / "manifest.jsonl")
    for r in records:
        flow = read_flo(dataset / r["flow"])
        write_flo(flow, gt / r["flow"])
        write_flo(flow, pred / r["flow"])
    report = tmp_path / "report.json"
    assert main(["eval", "--pred", str(pred), "--gt", str(gt),
                 "--report", str(report)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "epe=0.0000" in out
    data = json.loads(report.read_text())
    assert data["epe_mean"] == 0.0
    assert data["f1_all"] == 0.0


def test_eval_missing_prediction(dataset, tmp_path, capsys):
    pred = tmp_path / "pred2"
    gt = tmp_path / "gt2"
    pred.mkdir()
    gt.mkdir()
    write_flo(np.zeros((4, 4, 2), np.float32), gt / "x_flow.flo")
    assert main(["eval", "--pred", str(pred), "--gt", str(gt)]) == EXIT_DATA
    assert "x_flow" in capsys.readouterr().err


def test_preview_montage(dataset, tmp_path):
    import cv2

    out = tmp_path / "montage.png"
    assert main(["preview", str(dataset / "manifest.jsonl"), "000000", str(out)]) == EXIT_OK
    img = cv2.imread(str(out))
    assert img.shape == (96, 128 * 3, 3)  # frame0 | frame1 | colorized flow


def test_preview_unknown_id(dataset, tmp_path, capsys):
    code = main(["preview", str(dataset / "manifest.jsonl"), "zzz",
                 str(tmp_path / "x.png")])
    assert code == EXIT_DATA
    assert "no sample with id" in capsys.readouterr().err


def test_bench_reports_throughput(capsys):
    assert main(["bench", "--size", "320x192", "--count", "2"]) == EXIT_OK
    assert "samples/s" in capsys.readouterr().out


def test_bad_size_spec_is_data_error(image_dir, tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["generate", "--input", str(image_dir), "--output", str(out),
                 "--count", "1", "--size", "huge"])
    assert code == EXIT_DATA
    assert "bad size spec" in capsys.readouterr().err
