import csv
import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from seizurecast.architecture import MODEL_MAGIC, load
from seizurecast.cli import main
from seizurecast.metrics import evaluate
from seizurecast.pipeline import TimingPolicy, read_recording, stack, windows_from_recording
from seizurecast.training import predict_scores

# 2 h recording: the default 4 h interictal margin would leave no interictal time
MARGIN = ["--interictal-margin-s", "1800"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def bundle(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "subj"
    assert main([
        "synth", "--channels", "4", "--rate-hz", "100", "--duration-s", "7200",
        "--seizure-at", "5400", "--delta", "3", "--out", str(path), *MARGIN,
    ]) == 0
    return path


@pytest.fixture(scope="module")
def trained(bundle, tmp_path_factory):
    out = tmp_path_factory.mktemp("model")
    assert main([
        "-q", "train", "--data", str(bundle), "--epochs", "5", "--samples-per-epoch", "64",
        "--lr", "1e-4", "--out", str(out), *MARGIN,
    ]) == 0
    return out


def test_synth_bundle_is_valid(bundle):
    rec = read_recording(bundle)
    rec.validate()
    assert rec.signal.shape == (4, 720000) and rec.seizures == [(5400.0, 5460.0)]
    manifest = json.loads((bundle / "manifest.json").read_text())
    assert manifest["command"] == "synth" and manifest["seed"] == 0
    assert set(manifest["outputs"]) == {"meta.json", "signal.bin"}


def test_synth_is_byte_identical(tmp_path, capsys):
    args = ["synth", "--channels", "3", "--rate-hz", "50", "--duration-s", "600", "--seizure-at", "400",
            "--delta", "2", "--pil-s", "120", "--sph-s", "30", "--seed", "11"]
    run(capsys, *args, "--out", tmp_path / "a")
    run(capsys, *args, "--out", tmp_path / "b")
    assert (tmp_path / "a/signal.bin").read_bytes() == (tmp_path / "b/signal.bin").read_bytes()
    run(capsys, *args[:-1], "12", "--out", tmp_path / "c")
    assert (tmp_path / "a/signal.bin").read_bytes() != (tmp_path / "c/signal.bin").read_bytes()


def test_seed_environment_override(tmp_path, capsys, monkeypatch):
    args = ["synth", "--channels", "2", "--rate-hz", "20", "--duration-s", "100"]
    run(capsys, *args, "--seed", "5", "--out", tmp_path / "a")
    monkeypatch.setenv("SEIZURECAST_SEED", "5")
    run(capsys, *args, "--seed", "99", "--out", tmp_path / "b")
    assert (tmp_path / "a/signal.bin").read_bytes() == (tmp_path / "b/signal.bin").read_bytes()
    assert json.loads((tmp_path / "b/manifest.json").read_text())["seed"] == 5


def test_synth_invalid_schedule(tmp_path, capsys):
    code, out, err = run(capsys, "synth", "--duration-s", "100", "--seizure-at", "90", "--out", tmp_path / "x")
    assert code != 0 and out == "" and "error" in err


def test_train_outputs(trained):
    rows = list(csv.reader((trained / "history.csv").open()))
    assert len(rows) == 1 + 5
    manifest = json.loads((trained / "manifest.json").read_text())
    cfg = manifest["config"]
    assert cfg["train"]["epochs"] == 5 and cfg["timing"]["interictal_margin_s"] == 1800
    assert cfg["network"]["input_channels"] == 4 and cfg["network"]["input_width"] == 2000
    digest = hashlib.sha256((trained / "model.bin").read_bytes()).hexdigest()
    assert manifest["outputs"]["model.bin"] == digest
    assert (trained / "model.bin").read_bytes().startswith(MODEL_MAGIC)


def test_train_stdout_is_json(bundle, tmp_path, capsys):
    code, out, err = run(capsys, "train", "--data", bundle, "--epochs", "1", "--samples-per-epoch", "32",
                         "--arch", "reduced", "--out", tmp_path, *MARGIN)
    assert code == 0
    report = json.loads(out)
    assert report["epochs"] == 1 and report["flatten_length"] == 2560
    assert "epoch 1" in err


def test_train_chb_shaped_header(tmp_path, capsys):
    timing = ["--pil-s", "60", "--sph-s", "0", "--lead-gap-s", "0", "--interictal-margin-s", "100"]
    run(capsys, "synth", "--channels", "23", "--rate-hz", "256", "--duration-s", "400", "--seizure-at", "300",
        "--seizure-duration-s", "20", "--delta", "1", "--out", tmp_path / "chb", *timing)
    code, out, _ = run(capsys, "train", "--data", tmp_path / "chb", "--epochs", "1", "--samples-per-epoch", "4",
                       "--batch-size", "4", "--out", tmp_path / "m", *timing)
    assert code == 0
    header = (tmp_path / "m/model.bin").read_bytes()[:4096]
    assert b"shape flatten 2560 0" in header
    assert load(tmp_path / "m/model.bin", input_shape=(23, 5120)).flatten_length == 2560


def test_train_without_lead_seizures(bundle, tmp_path, capsys):
    code, out, err = run(capsys, "train", "--data", bundle, "--pil-s", "6000", "--out", tmp_path)
    assert code == 1 and out == ""
    assert "no usable lead seizures" in err and "seizure 0 at 5400-5460 s" in err
    assert not (tmp_path / "model.bin").exists()


def test_eval_matches_library_metrics(bundle, trained, tmp_path, capsys):
    code, out, _ = run(capsys, "eval", "--model", trained / "model.bin", "--data", bundle,
                       "--threshold", "0.4", "--roc-out", tmp_path, *MARGIN)
    assert code == 0
    report = json.loads(out)
    policy = TimingPolicy(interictal_margin_s=1800)
    x, y = stack(windows_from_recording(read_recording(bundle), policy))
    expected = evaluate(predict_scores(load(trained / "model.bin"), x), y, 0.4).as_dict()
    for key, value in expected.items():
        assert report[key] == value, key
    assert (tmp_path / "roc.csv").read_text().startswith("threshold,fpr,tpr")
    assert "AUC" in (tmp_path / "roc.svg").read_text()


def test_eval_threshold_zero_flags_everything(bundle, trained, capsys):
    code, out, _ = run(capsys, "eval", "--model", trained / "model.bin", "--data", bundle,
                       "--threshold", "0", *MARGIN)
    report = json.loads(out)
    assert code == 0 and report["sensitivity"] == 1.0
    assert report["fpr_per_h"] == pytest.approx(180.0)


def test_eval_separable_set(tmp_path, capsys):
    timing = ["--pil-s", "600", "--sph-s", "60", "--interictal-margin-s", "600"]
    run(capsys, "synth", "--duration-s", "3000", "--seizure-at", "1500", "--delta", "8", "--seed", "2",
        "--out", tmp_path / "d", *timing)
    run(capsys, "train", "--data", tmp_path / "d", "--epochs", "4", "--samples-per-epoch", "128",
        "--lr", "1e-4", "--out", tmp_path / "m", *timing)
    code, out, _ = run(capsys, "eval", "--model", tmp_path / "m/model.bin", "--data", tmp_path / "d", *timing)
    assert code == 0 and json.loads(out)["auc"] == 1.0


def test_eval_shape_mismatch(bundle, trained, capsys):
    code, out, err = run(capsys, "eval", "--model", trained / "model.bin", "--data", bundle,
                         "--window-s", "10", "--overlap-s", "2", *MARGIN)
    assert code == 1 and out == ""
    detail = json.loads(err.split("error: ", 1)[1])
    assert detail["error"] == "ShapeError"


@pytest.mark.parametrize("hw,flat", [((23, 5120), 2560), ((16, 8000), 4096), ((15, 8000), 3072)])
def test_inspect_tables(capsys, hw, flat):
    code, out, _ = run(capsys, "inspect", *hw)
    assert code == 0
    lines = out.splitlines()
    assert any(line.split()[:2] == ["flatten", f"({flat},)"] for line in lines)
    code, out, _ = run(capsys, "inspect", "--channels", hw[0], "--width", hw[1], "--json")
    table = json.loads(out)
    assert {r["layer"]: r["shape"] for r in table["layers"]}["flatten"] == [flat]


def test_inspect_collapse_names_layer(capsys):
    code, out, err = run(capsys, "inspect", "1", "10")
    assert code != 0 and out == ""
    assert "pool2" in err


def test_console_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "seizurecast.cli", "inspect", "--channels", "4", "--width", "500",
         "--arch", "reduced", "--json"],
        capture_output=True, text=True, check=True,
    )
    rows = json.loads(proc.stdout)["layers"]
    assert rows[-1] == {"layer": "output", "shape": [2], "params": 130}
    assert np.prod(rows[[r["layer"] for r in rows].index("flatten")]["shape"]) == 512
