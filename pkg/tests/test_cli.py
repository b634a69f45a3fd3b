import json

import numpy as np
import pytest

from zubovnet.cli import main
from zubovnet.datagen import read_dataset
from zubovnet.levelset import read_curves_csv
from zubovnet.mlp import load_model


def run(capsys, *argv):
    rc = main(list(argv))
    out, err = capsys.readouterr()
    return rc, out, err


def manifest(path, command):
    with open(path / f"{command}.manifest.json") as fh:
        return json.load(fh)


def test_eval_linear(capsys, tmp_path):
    rc, out, _ = run(capsys, "--system", "linear", "--out-dir", str(tmp_path), "eval", "2", "0")
    assert rc == 0
    I = float(out.splitlines()[0].split("=")[1])
    assert abs(I - 2.0) < 1e-4
    assert "inside D" in out


def test_eval_outside(capsys, tmp_path):
    rc, out, _ = run(capsys, "--out-dir", str(tmp_path), "eval", "4", "4")
    assert rc == 0 and "V(x) = 1" in out and "outside" in out


def test_eval_dimension_mismatch(capsys, tmp_path):
    rc, _, err = run(capsys, "--out-dir", str(tmp_path), "eval", "1", "2", "3")
    assert rc == 2 and "components" in err


def test_eval_inconclusive(capsys, tmp_path):
    rc, _, err = run(capsys, "--system", "linear", "--out-dir", str(tmp_path), "--M", "1e12",
                     "--t-max", "2", "eval", "3", "0")
    assert rc == 1 and "inconclusive" in err


def test_bad_settings_exit_two(capsys, tmp_path):
    rc, _, err = run(capsys, "--out-dir", str(tmp_path), "--t-max", "0.5", "eval", "1", "0")
    assert rc == 2 and err.startswith("error:")
    rc, _, err = run(capsys, "--out-dir", str(tmp_path), "--region", "0:1", "eval", "1", "0")
    assert rc == 2


def test_argparse_errors_exit_two(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--system", "nope", "eval", "1"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main(["--M", "-3", "eval", "1", "0"])
    assert e.value.code == 2


def test_missing_files(capsys, tmp_path):
    rc, _, err = run(capsys, "--out-dir", str(tmp_path), "validate", "--model", "nope.txt",
                     "--data", "nope.csv")
    assert rc == 2 and "no such file" in err


def test_ivalue(capsys, tmp_path):
    rc, out, _ = run(capsys, "--out-dir", str(tmp_path), "--workers", "1", "ivalue", "-n", "30")
    assert rc == 0
    for name in ("ivalue.csv", "calibration.json", "ivalue.svg", "ivalue.manifest.json"):
        assert (tmp_path / name).is_file()
    cal = json.loads((tmp_path / "calibration.json").read_text())
    assert cal["alpha"] * cal["M"] == pytest.approx(20.0)
    m = manifest(tmp_path, "ivalue")
    assert m["command"] == "ivalue" and m["config"]["system"] == "vdp"


def test_ivalue_from_points(capsys, tmp_path):
    pts = tmp_path / "pts.csv"
    pts.write_text("0.5,0.5\n1,-1\n4,4\n")
    rc, _, _ = run(capsys, "--out-dir", str(tmp_path), "--workers", "1", "ivalue",
                   "--points", str(pts))
    assert rc == 0
    rows = (tmp_path / "ivalue.csv").read_text().splitlines()
    assert len([r for r in rows if not r.startswith("#")]) == 4  # header plus three points


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("pipe")
    common = ["--out-dir", str(d), "--workers", "1"]
    assert main(common + ["--seed", "1", "dataset", "--traj", "60", "--extra", "2",
                          "--name", "train.csv"]) == 0
    assert main(common + ["--seed", "2", "dataset", "--traj", "20", "--extra", "2",
                          "--name", "val.csv"]) == 0
    assert main(common + ["train", "--train", str(d / "train.csv"), "--val",
                          str(d / "val.csv"), "--hidden", "8,8", "--epochs", "5",
                          "--batch", "32"]) == 0
    return d


def test_dataset_outputs(pipeline):
    d = read_dataset(pipeline / "train.csv")
    assert d.meta["n_traj"] == 60 and d.meta["seed"] == 1
    assert len(d) == 60 - d.meta["n_inconclusive"] + 2 * d.meta["n_converged"]
    assert manifest(pipeline, "dataset")["command"] == "dataset"


def test_train_outputs(pipeline):
    p = load_model(pipeline / "model.txt")
    assert p.arch.hidden_widths == (8, 8)
    hist = (pipeline / "history.csv").read_text().splitlines()
    assert len(hist) == 6


def test_validate(pipeline, capsys):
    rc, out, _ = run(capsys, "--out-dir", str(pipeline), "validate", "--model",
                     str(pipeline / "model.txt"), "--data", str(pipeline / "val.csv"))
    assert rc == 0 and "RMSE" in out
    res = json.loads((pipeline / "validation.json").read_text())
    assert res["rmse"] >= 0 and res["p25"] <= res["p75"]
    assert (pipeline / "validation_errors.svg").is_file()


def test_levelcurves_from_model(pipeline, capsys):
    rc, _, _ = run(capsys, "--out-dir", str(pipeline), "levelcurves",
                   str(pipeline / "model.txt"), "--grid", "21", "--levels", "0.5,0.9")
    assert rc == 0
    curves = read_curves_csv(pipeline / "levelcurves.csv")
    assert {c.level for c in curves} <= {0.5, 0.9}
    assert (pipeline / "levelcurves.svg").is_file() and (pipeline / "grid.csv").is_file()


def test_levelcurves_integrated(capsys, tmp_path):
    rc, _, _ = run(capsys, "--out-dir", str(tmp_path), "--system", "linear", "--workers", "1",
                   "levelcurves", "--grid", "15", "--levels", "0.3")
    assert rc == 0
    (c,) = read_curves_csv(tmp_path / "levelcurves.csv")
    radii = np.hypot(*np.concatenate(c.polylines).T)
    assert np.allclose(radii, np.sqrt(np.arctanh(0.3) / 0.05), atol=6 / 15)


def test_levelcurves_rejects_bad_levels(capsys, tmp_path):
    rc, _, err = run(capsys, "--out-dir", str(tmp_path), "levelcurves", "--levels", "1.2")
    assert rc == 2


def test_train_rejects_mismatched_data(pipeline, capsys, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("# zubovnet-dataset v1\n# dim=3\n1,2,3,0.5\n")
    rc, _, err = run(capsys, "--out-dir", str(tmp_path), "train", "--train",
                     str(pipeline / "train.csv"), "--val", str(bad))
    assert rc == 2 and "columns" in err


def test_residual_check(capsys, tmp_path):
    rc, out, _ = run(capsys, "--out-dir", str(tmp_path), "--workers", "1", "residual-check",
                     "-n", "3")
    assert rc == 0
    rows = (tmp_path / "residual.csv").read_text().splitlines()
    assert len(rows) == 4
    assert manifest(tmp_path, "residual-check")["command"] == "residual-check"


def test_dataset_same_bytes_any_workers(capsys, tmp_path):
    for k in (1, 2):
        assert main(["--out-dir", str(tmp_path), "--workers", str(k), "dataset", "--traj", "10",
                     "--extra", "1", "--name", f"d{k}.csv"]) == 0
    assert (tmp_path / "d1.csv").read_bytes() == (tmp_path / "d2.csv").read_bytes()
