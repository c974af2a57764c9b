import json

import numpy as np
import pytest

from qdiffusion import artifacts
from qdiffusion.cli import main
from qdiffusion.uss import load_unitary

TINY = """
[model]
kind = {kind}
layers = 1
channels = 2,4
[data]
limit = 12
[optimizer]
epochs = 1
lr = 0.01
batch_size = 6
[run]
n_samples = 4
n_inpaint = 2
"""


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    out = {}
    for kind in ("qdense", "qunet", "uss"):
        cfg = d / f"{kind}.ini"
        cfg.write_text(TINY.format(kind=kind))
        assert run("train", "--config", cfg, "--out-dir", d / kind, "--seed", 3) == 0
        out[kind] = (cfg, d / kind / "checkpoint.npz")
    return d, out


def test_train_outputs(trained):
    d, out = trained
    m = artifacts.read_manifest(d / "qdense" / "manifest.json")
    assert m["command"] == "train" and m["seed"] == 3
    assert m["params_sha256"] == artifacts.params_hash(artifacts.load_checkpoint(out["qdense"][1])["store"].values)
    assert (d / "qdense" / "losses.csv").read_text().splitlines()[0] == "run_id,epoch,loss"


@pytest.mark.parametrize("kind", ["qdense", "qunet", "uss"])
def test_sample_and_replay(trained, tmp_path, kind):
    _, out = trained
    cfg, ckpt = out[kind]
    assert run("sample", "--config", cfg, "--checkpoint", ckpt, "--tau", 10, "--out-dir", tmp_path / "a") == 0
    samples = np.load(tmp_path / "a" / "samples.npy")
    assert samples.shape == (4, 8, 8)
    rows = (tmp_path / "a" / "metrics.csv").read_text().splitlines()
    assert rows[0] == "run_id,tau,metric,value"
    assert sorted({int(r.split(",")[1]) for r in rows[1:]}) == list(range(1, 11))
    from PIL import Image

    strip = Image.open(tmp_path / "a" / "trajectory.png")
    assert strip.width > strip.height  # 11 columns, 4 rows
    assert run("replay", tmp_path / "a" / "manifest.json", "--out-dir", tmp_path / "b") == 0
    for name in ("trajectory.png", "metrics.csv", "samples.npy"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_replay_detects_changed_outputs(trained, tmp_path):
    _, out = trained
    cfg, ckpt = out["qdense"]
    run("sample", "--config", cfg, "--checkpoint", ckpt, "--out-dir", tmp_path / "a")
    m = json.loads((tmp_path / "a" / "manifest.json").read_text())
    m["outputs"]["metrics.csv"] = "0" * 64
    (tmp_path / "a" / "manifest.json").write_text(json.dumps(m))
    assert run("replay", tmp_path / "a" / "manifest.json", "--out-dir", tmp_path / "b") == 1


def test_compose(trained, tmp_path):
    _, out = trained
    cfg, ckpt = out["uss"]
    assert run("compose", "--config", cfg, "--checkpoint", ckpt, "--tau", 4, "--out-dir", tmp_path) == 0
    u, tau = load_unitary(tmp_path / "unitary.qdum")
    assert tau == 4 and u.shape == (128, 128)  # 6 image qubits plus the label ancilla
    assert run("sample", "--config", cfg, "--checkpoint", ckpt, "--set", "run.shots=1000", "--out-dir", tmp_path / "shots") == 0
    assert run("compose", "--config", out["qdense"][0], "--checkpoint", out["qdense"][1], "--out-dir", tmp_path) == 2


def test_inpaint_and_eval(trained, tmp_path):
    _, out = trained
    cfg, ckpt = out["qdense"]
    assert run("inpaint", "--config", cfg, "--checkpoint", ckpt, "--out-dir", tmp_path / "i") == 0
    rows = (tmp_path / "i" / "inpaint.csv").read_text().splitlines()
    assert rows[0] == "run_id,image,unknown_mse,noise_baseline_mse" and len(rows) == 3
    run("sample", "--config", cfg, "--checkpoint", ckpt, "--out-dir", tmp_path / "s")
    assert run("eval", "--config", cfg, "--samples", tmp_path / "s" / "samples.npy", "--out-dir", tmp_path / "e") == 0
    metrics = {r.split(",")[2] for r in (tmp_path / "e" / "metrics.csv").read_text().splitlines()[1:]}
    assert metrics == {"ssim_nearest", "psnr_nearest"}


def test_errors(tmp_path, capsys):
    assert run("sample", "--out-dir", tmp_path) == 2
    assert "run.checkpoint" in capsys.readouterr().err
    assert run("sample", "--checkpoint", tmp_path / "missing.npz", "--out-dir", tmp_path) == 2
    assert "missing model checkpoint" in capsys.readouterr().err
    assert run("train", "--set", "model.layerz=3", "--out-dir", tmp_path) == 2
    assert "model.layerz" in capsys.readouterr().err
    assert run("train", "--set", "schedule.target=velocity", "--out-dir", tmp_path) == 2
    assert "schedule.target" in capsys.readouterr().err


def test_preset_listing(capsys):
    assert run("presets") == 0
    line = next(l for l in capsys.readouterr().out.splitlines() if l.startswith("qdense-guided-8 "))
    assert "lr=0.00097" in line and "layers=47" in line
