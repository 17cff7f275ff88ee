import csv
import json

import numpy as np
import pytest

from hdmba import checkpoint as ckpt_io
from hdmba.cli import main
from hdmba.cube import HsiCube, default_wavelengths, read_cube, write_cube
from hdmba.haze import generate_clean_scene, load_manifest
from hdmba.network import HDMba, parameter_count

from conftest import tiny_config

TINY = ["--channels", "8", "--rdm", "1", "--dml", "1", "--window", "4", "--d-state", "4"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr().out


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "data"
    assert main(["synthesize", "--out", str(out), "--scenes", "3", "--thickness-levels", "2",
                 "--abundances", "2", "--size", "16", "--bands", "4", "--seed", "5"]) == 0
    return out


def test_synthesize_grid_counts(capsys, tmp_path):
    code, out = run(capsys, "synthesize", "--out", tmp_path / "d", "--scenes", 10, "--thickness-levels", 4,
                    "--abundances", 5, "--size", 128, "--bands", 16, "--seed", 7, "--dry-run")
    assert code == 0
    assert json.loads(out) == {"manifest": None, "pairs": 200, "train": 180, "test": 20}
    assert not (tmp_path / "d").exists()


def test_synthesize_writes_grid(capsys, tmp_path):
    code, out = run(capsys, "synthesize", "--out", tmp_path / "d", "--scenes", 10, "--thickness-levels", 4,
                    "--abundances", 5, "--size", 12, "--bands", 16, "--seed", 7)
    assert code == 0 and json.loads(out)["pairs"] == 200
    root, entries = load_manifest(tmp_path / "d")
    assert len(entries) == 200 and read_cube(root / entries[0]["hazy_path"]).data.shape == (12, 12, 16)


def test_synthesize_standard_scale(capsys, tmp_path):
    code, out = run(capsys, "synthesize", "--out", tmp_path / "d", "--standard-scale", "--dry-run")
    assert code == 0 and json.loads(out)["pairs"] == 2000
    assert json.loads(out)["train"] == 1800


def test_synthesize_zero_abundance(capsys, tmp_path):
    code, _ = run(capsys, "synthesize", "--out", tmp_path / "d", "--scenes", 2, "--thickness-levels", 2,
                  "--abundances", 1, "--abundance-values", 0, "--size", 8, "--bands", 3)
    assert code == 0
    root, entries = load_manifest(tmp_path / "d")
    for e in entries:
        assert read_cube(root / e["hazy_path"]).data.tobytes() == read_cube(root / e["clean_path"]).data.tobytes()


def test_synthesize_deterministic(capsys, tmp_path):
    args = ["--scenes", 2, "--thickness-levels", 2, "--abundances", 2, "--size", 8, "--bands", 3, "--seed", 11]
    run(capsys, "synthesize", "--out", tmp_path / "a", *args)
    run(capsys, "synthesize", "--out", tmp_path / "b", *args)
    assert (tmp_path / "a/manifest.json").read_bytes() == (tmp_path / "b/manifest.json").read_bytes()


@pytest.mark.parametrize("argv", [
    ["--scenes", 0],
    ["--abundances", 2, "--abundance-values", "0.5"],
    ["--abundance-values", "a,b,c,d,e"],
    ["--test-fraction", 1.5],
])
def test_synthesize_bad_recipe(capsys, tmp_path, argv):
    assert run(capsys, "synthesize", "--out", tmp_path / "d", "--size", 8, "--bands", 2, *argv)[0] == 2


def test_synthesize_io_error(capsys, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _ = run(capsys, "synthesize", "--out", blocker / "sub", "--scenes", 1, "--thickness-levels", 1,
                  "--abundances", 1, "--size", 8, "--bands", 2)
    assert code == 3


def test_train_and_artifacts(capsys, data_dir, tmp_path):
    code, out = run(capsys, "train", "--data", data_dir, "--out", tmp_path / "run", *TINY,
                    "--iterations", 4, "--crop", 8, "--batch", 2, "--lr", 1e-3)
    assert code == 0
    info = json.loads(out)
    assert info["steps"] == 4
    for name in ("final.ckpt", "loss.csv", "config.txt"):
        assert (tmp_path / "run" / name).exists()
    cfg = (tmp_path / "run" / "config.txt").read_text()
    assert "iterations = 4" in cfg and "window = 4" in cfg


def test_train_deterministic_hashes(capsys, data_dir, tmp_path):
    for d in ("a", "b"):
        run(capsys, "train", "--data", data_dir, "--out", tmp_path / d, *TINY, "--iterations", 3,
            "--crop", 8, "--batch", 2)
    assert (tmp_path / "a/final.ckpt").read_bytes() == (tmp_path / "b/final.ckpt").read_bytes()


def test_train_resume_matches(capsys, data_dir, tmp_path):
    common = ["--data", data_dir, *TINY, "--iterations", 6, "--crop", 8, "--batch", 2]
    run(capsys, "train", "--out", tmp_path / "full", *common)
    run(capsys, "train", "--out", tmp_path / "half", *common, "--stop-at", 3)
    code, _ = run(capsys, "train", "--data", data_dir, "--out", tmp_path / "rest",
                  "--resume", tmp_path / "half/final.ckpt")
    assert code == 0
    assert (tmp_path / "rest/final.ckpt").read_bytes() == (tmp_path / "full/final.ckpt").read_bytes()


def test_train_config_file_and_override(capsys, data_dir, tmp_path):
    conf = tmp_path / "run.cfg"
    conf.write_text("# tiny run\niterations = 5\nchannels = 8\nrdm = 1\ndml = 1\nwindow = 4\n"
                    "d_state = 4\ncrop = 8\nbatch = 1\n")
    code, out = run(capsys, "train", "--data", data_dir, "--out", tmp_path / "r", "--config", conf,
                    "--iterations", 2)
    assert code == 0 and json.loads(out)["steps"] == 2
    assert "channels = 8" in (tmp_path / "r/config.txt").read_text()


def test_train_bad_config(capsys, data_dir, tmp_path):
    conf = tmp_path / "bad.cfg"
    conf.write_text("no_such_key = 3\n")
    assert run(capsys, "train", "--data", data_dir, "--out", tmp_path / "r", "--config", conf)[0] == 2
    assert run(capsys, "train", "--data", data_dir, "--out", tmp_path / "r", "--ablate", "no-fish")[0] == 2
    assert run(capsys, "train", "--data", tmp_path / "missing", "--out", tmp_path / "r")[0] == 3


def test_train_ablation_row_one(capsys, data_dir, tmp_path):
    code, _ = run(capsys, "train", "--data", data_dir, "--out", tmp_path / "r", *TINY, "--iterations", 2,
                  "--crop", 8, "--batch", 1, "--ablate", "no-ssm,no-dconv,no-gate", "--mlp")
    assert code == 0
    ck = ckpt_io.load(tmp_path / "r/final.ckpt")
    assert not ck.model_config["use_ssm"] and ck.model_config["use_mlp"]
    assert not any(".ssm." in k for k in ck.tensors)


@pytest.mark.parametrize("m", [2, 4, 8, 16])
def test_train_window_sizes(capsys, data_dir, tmp_path, m):
    args = [a if a != "4" or i != TINY.index("--window") + 1 else str(m) for i, a in enumerate(TINY)]
    code, _ = run(capsys, "train", "--data", data_dir, "--out", tmp_path / "r", *args, "--iterations", 1,
                  "--crop", 8, "--batch", 1)
    assert code == 0
    assert ckpt_io.load(tmp_path / "r/final.ckpt").model_config["window"] == m


def test_train_defaults(capsys, data_dir, tmp_path):
    code, _ = run(capsys, "train", "--data", data_dir, "--out", tmp_path / "r", "--iterations", 1,
                  "--crop", 8, "--batch", 1, "--channels", 4, "--d-state", 2)
    assert code == 0
    ck = ckpt_io.load(tmp_path / "r/final.ckpt")
    mc, tc = ck.model_config, ck.train_config
    assert (mc["rdm_count"], mc["dml_per_rdm"], mc["window"]) == (4, 4, 8)
    assert (mc["theta1"], mc["theta2"]) == (1.0, 0.1)
    assert (tc["lr0"], tc["theta1"], tc["theta2"]) == (1e-4, 1.0, 0.1)


def test_train_non_finite_exit(capsys, tmp_path):
    root = tmp_path / "nan"
    root.mkdir()
    bad = HsiCube(np.full((8, 8, 2), np.nan, np.float32), [1.0, 2.0])
    write_cube(root / "c.hsc", bad)
    write_cube(root / "h.hsc", bad)
    entry = {"clean_path": "c.hsc", "hazy_path": "h.hsc", "split": "train", "scene": 0}
    (root / "manifest.json").write_text(json.dumps([entry]))
    with np.errstate(all="ignore"):
        code, _ = run(capsys, "train", "--data", root, "--out", tmp_path / "r", *TINY, "--iterations", 2,
                      "--crop", 8, "--batch", 1)
    assert code == 4


def test_dehaze_identity_and_shape(capsys, tmp_path):
    ck = tmp_path / "init.ckpt"
    assert run(capsys, "init", "--bands", 16, "--out", ck, *TINY)[0] == 0
    data = np.random.default_rng(0).uniform(size=(128, 128, 16)).astype(np.float32)
    write_cube(tmp_path / "in.hsc", HsiCube(data, default_wavelengths(16)))
    code, _ = run(capsys, "dehaze", "--checkpoint", ck, "--input", tmp_path / "in.hsc", "--output", tmp_path / "o.hsc")
    assert code == 0
    out = read_cube(tmp_path / "o.hsc")
    assert out.data.shape == (128, 128, 16)
    assert out.data.tobytes() == data.tobytes()


def test_dehaze_tiled_odd_size(capsys, tmp_path, tiny_model):
    ck = tmp_path / "m.ckpt"
    ckpt_io.save(ck, ckpt_io.from_model(tiny_model))
    data = np.random.default_rng(1).uniform(size=(13, 9, 4)).astype(np.float32)
    write_cube(tmp_path / "in.hsc", HsiCube(data, default_wavelengths(4)))
    code, _ = run(capsys, "dehaze", "--checkpoint", ck, "--input", tmp_path / "in.hsc",
                  "--output", tmp_path / "o.hsc", "--tile", 8)
    assert code == 0 and read_cube(tmp_path / "o.hsc").data.shape == (13, 9, 4)


def test_dehaze_band_mismatch(capsys, tmp_path):
    ck = tmp_path / "init.ckpt"
    run(capsys, "init", "--bands", 4, "--out", ck, *TINY)
    write_cube(tmp_path / "in.hsc", HsiCube(np.zeros((8, 8, 5), np.float32), default_wavelengths(5)))
    assert run(capsys, "dehaze", "--checkpoint", ck, "--input", tmp_path / "in.hsc",
               "--output", tmp_path / "o.hsc")[0] == 2
    assert run(capsys, "dehaze", "--checkpoint", tmp_path / "none.ckpt", "--input", tmp_path / "in.hsc",
               "--output", tmp_path / "o.hsc")[0] == 3


def test_evaluate_clean_clean(capsys, tmp_path):
    cube = generate_clean_scene(16, 16, 4, seed=2)
    write_cube(tmp_path / "c.hsc", cube)
    code, out = run(capsys, "evaluate", "--pair", tmp_path / "c.hsc", tmp_path / "c.hsc", "--out", tmp_path / "ev")
    assert code == 0
    s = json.loads(out)
    assert s["ssim"] == pytest.approx(1.0) and s["uqi"] == pytest.approx(1.0) and s["sam"] == 0.0
    assert s["identical"] and s["psnr"] is None
    report = json.loads((tmp_path / "ev/report.json").read_text())
    assert report["config"]["ssim"]["sigma"] == 1.5
    assert (tmp_path / "ev/bandwise.csv").exists()


def test_evaluate_manifest_with_checkpoint(capsys, data_dir, tmp_path):
    ck = tmp_path / "init.ckpt"
    run(capsys, "init", "--bands", 4, "--out", ck, *TINY)
    code, out = run(capsys, "evaluate", "--manifest", data_dir, "--split", "all", "--checkpoint", ck,
                    "--out", tmp_path / "ev")
    assert code == 0 and json.loads(out)["pairs"] == 12


def test_params_tiny_matches_enumeration(capsys, tmp_path):
    code, out = run(capsys, "params", "--bands", 4, *TINY, "--json", tmp_path / "p.json")
    assert code == 0
    model = HDMba(tiny_config(dtype="float32"))
    total = sum(int(np.prod(a.shape)) for a in model.state_dict().values())
    assert json.loads((tmp_path / "p.json").read_text())["total"] == total == parameter_count(model)
    assert f"{total:,d}" in out


def test_params_needs_source(capsys):
    assert run(capsys, "params")[0] == 2


def test_spectra_two_materials(capsys, tmp_path):
    wl = default_wavelengths(6)
    data = np.empty((4, 4, 6), np.float32)
    data[:, :2] = np.linspace(0.1, 0.6, 6)
    data[:, 2:] = np.linspace(0.6, 0.1, 6)
    write_cube(tmp_path / "s.hsc", HsiCube(data, wl))
    code, _ = run(capsys, "spectra", tmp_path / "s.hsc", "--pixel", 0, 0, "--pixel", 3, 3, "--out", tmp_path / "s.csv")
    assert code == 0
    with open(tmp_path / "s.csv") as fh:
        rows = list(csv.DictReader(fh))
    a = [float(r["value"]) for r in rows if r["x"] == "0"]
    b = [float(r["value"]) for r in rows if r["x"] == "3"]
    assert len(a) == len(b) == 6 and a != b
    assert run(capsys, "spectra", tmp_path / "s.hsc", "--pixel", 9, 0, "--out", tmp_path / "s.csv")[0] == 2


def test_bandcurve(capsys, data_dir, tmp_path):
    root, entries = load_manifest(data_dir)
    e = entries[0]
    code, _ = run(capsys, "bandcurve", "--hazy", root / e["hazy_path"], "--clean", root / e["clean_path"],
                  "--out", tmp_path / "b.csv")
    assert code == 0
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "wavelength_nm,ssim,psnr" and len(lines) == 5


def test_sweep_ablation(capsys, data_dir, tmp_path):
    code, _ = run(capsys, "sweep", "--kind", "ablation", "--data", data_dir, "--out", tmp_path / "s",
                  *TINY, "--steps", 1, "--crop", 8, "--batch", 1)
    assert code == 0
    with open(tmp_path / "s/sweep_ablation.csv") as fh:
        rows = list(csv.DictReader(fh))
    params = [int(r["params"]) for r in rows]
    assert len(rows) == 5 and all(a < b for a, b in zip(params[1:], params[2:]))
