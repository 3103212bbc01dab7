import csv

import numpy as np
import pytest

from dpanet import imaging
from dpanet.cli import main


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth-data", "--out", str(root / "data"), "--n", "6", "--size", "32", "--seed", "3",
                 "--corrupt-fraction", "0.5"]) == 0
    cfg = root / "tiny.cfg"
    cfg.write_text("stage_channels = 4,8,8,8,8\nchannels = 8\ngate_hidden = 8\ninput_size = 32\nbatch_size = 3\n")
    assert main(["train", "--data", str(root / "data"), "--preset", "toy", "--config", str(cfg),
                 "--set", "max_iters=4", "--out-dir", str(root / "run")]) == 0
    return root


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(line for line in fh if not line.startswith("#")))


def test_train_outputs(workspace):
    run = workspace / "run"
    for name in ("final.npz", "train_log.csv", "loss.png", "config.txt"):
        assert (run / name).is_file(), name
    assert len(_rows(run / "train_log.csv")) == 5
    assert "max_iters = 4" in (run / "config.txt").read_text()


def test_dp_score(workspace, capsys):
    out = workspace / "dp.csv"
    assert main(["dp-score", "--depth-dir", str(workspace / "data" / "depth"),
                 "--gt-dir", str(workspace / "data" / "gt"), "--out", str(out)]) == 0
    rows = _rows(out)
    assert rows[0] == ["sample_id", "d_iou", "d_cov", "g"] and len(rows) == 7
    mean = np.mean([float(r[3]) for r in rows[1:]])
    assert f"mean g = {mean:.6f}" in capsys.readouterr().out
    assert out.with_suffix(".png").is_file()
    assert "mean_g=" in out.read_text().splitlines()[0]


def test_dp_score_env_root(workspace, monkeypatch, capsys):
    monkeypatch.setenv("DPANET_DATA_ROOT", str(workspace))
    assert main(["dp-score", "--data", "data", "--out", str(workspace / "dp2.csv"), "--no-plot"]) == 0
    assert not (workspace / "dp2.png").exists()


def test_infer_and_eval(workspace, capsys):
    ckpt = str(workspace / "run" / "final.npz")
    data = workspace / "data"
    pred = workspace / "pred"
    assert main(["infer", "--ckpt", ckpt, "--data", str(data), "--out-dir", str(pred)]) == 0
    assert len(list(pred.glob("*.png"))) == 6 and (pred / "g_hat.csv").is_file()

    one = workspace / "one.png"
    inter = workspace / "inter"
    assert main(["infer", "--ckpt", ckpt, "--rgb", str(data / "rgb" / "0000.png"),
                 "--depth", str(data / "depth" / "0000.png"), "--out", str(one),
                 "--dump-intermediates", str(inter)]) == 0
    assert "g_hat = " in capsys.readouterr().out
    assert imaging.load_gray(one).shape == (32, 32)
    assert np.array_equal(imaging.load_gray(one), imaging.load_gray(pred / "0000.png"))
    assert (inter / "stage2_rf_c0.png").is_file()

    report = workspace / "eval" / "report.csv"
    assert main(["eval", "--pred-dir", str(pred), "--gt-dir", str(data / "gt"), "--out", str(report),
                 "--curves-out", str(workspace / "eval" / "pr.csv")]) == 0
    text = report.read_text()
    assert text.startswith("# max_f") and "dataset-mean precision and recall" in text
    rows = _rows(report)
    assert rows[0] == ["sample_id", "max_f", "mae", "s_measure", "g_hat"]
    assert rows[-1][0] == "__dataset__" and len(rows) == 8
    assert all(r[4] for r in rows[1:])
    curves = _rows(workspace / "eval" / "pr.csv")
    assert len(curves) == 257 and curves[0] == ["threshold", "precision", "recall", "f_measure"]
    assert (workspace / "eval" / "report_pr.png").is_file() and (workspace / "eval" / "report_f.png").is_file()


def test_infer_resizes_back_to_input(workspace):
    big = workspace / "big"
    rgb = np.zeros((48, 40, 3), np.uint8)
    imaging.save_png(big / "rgb.png", rgb)
    imaging.save_png(big / "depth.png", np.zeros((48, 40), np.uint8))
    assert main(["infer", "--ckpt", str(workspace / "run" / "final.npz"), "--rgb", str(big / "rgb.png"),
                 "--depth", str(big / "depth.png"), "--out", str(big / "map.png")]) == 0
    assert imaging.load_gray(big / "map.png").shape == (48, 40)


def test_errors_exit_nonzero(workspace, capsys):
    assert main(["eval", "--pred-dir", str(workspace / "nope"), "--gt-dir", str(workspace / "data" / "gt"),
                 "--out", str(workspace / "x.csv")]) == 2
    assert "error:" in capsys.readouterr().err
    assert main(["infer", "--ckpt", str(workspace / "missing.npz"), "--rgb", "a", "--depth", "b", "--out", "c"]) == 2
    with pytest.raises(SystemExit):
        main(["train", "--preset", "huge"])


def test_gradcheck_command(capsys):
    assert main(["gradcheck", "--no-network", "--coords", "8"]) == 0
    out = capsys.readouterr().out
    assert "PASS  cross_modal_attention" in out and "all gradient checks passed" in out
    assert main(["gradcheck", "--no-network", "--coords", "4", "--tol", "0"]) == 1
