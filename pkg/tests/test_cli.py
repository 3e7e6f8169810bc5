import json

import pytest

from epban.checkpoint import save_checkpoint
from epban.cli import main, read_config_file
from epban.errors import ValidationError
from epban.pban import PbanModel


def test_no_arguments_prints_usage(capsys):
    assert main([]) == 1
    assert "usage" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["bogus", "--out", "x"], ["gen-data"], ["gen-data", "--out", "x", "--nope"],
                                  ["gen-data", "--out", "x", "--refs", "many"]])
def test_bad_arguments_exit_1(argv, capsys):
    assert main(argv) == 1
    assert "usage" in capsys.readouterr().err


def test_gen_data_deterministic_with_header(tmp_path, capsys):
    args = ["gen-data", "--refs", "4", "--variants", "2", "--size", "16", "--seed", "7"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a, b = (tmp_path / d / "manifest.csv" for d in "ab")
    assert a.read_bytes() == b.read_bytes()
    header = json.loads(capsys.readouterr().out.splitlines()[0])
    assert header["seed"] == 7 and header["config"]["refs"] == 4
    assert (tmp_path / "a" / "run.log").read_text().startswith("{")


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# sizes\nrefs = 3\nvariants=2\nsize = 16\nseed = 5\n")
    assert main(["gen-data", "--config", str(cfg), "--seed", "9", "--out", str(tmp_path / "d")]) == 0
    header = json.loads(capsys.readouterr().out.splitlines()[0])
    assert header["config"] == {"dtype": "f32", "refs": 3, "seed": 9, "size": 16, "variants": 2}


@pytest.mark.parametrize("text", ["refs 3\n", "colour = red\n", "refs = x\n"])
def test_bad_config_file(tmp_path, text):
    p = tmp_path / "bad.cfg"
    p.write_text(text)
    with pytest.raises(ValidationError):
        read_config_file(p)
    assert main(["gen-data", "--config", str(p), "--out", str(tmp_path / "o")]) == 1


def test_validation_vs_runtime_exit_codes(tmp_path, tiny_dataset):
    # invalid split name -> 1
    ckpt = tmp_path / "m.ckpt"
    save_checkpoint(PbanModel(channels=8), ckpt)
    assert main(["eval-metric", "--metric", str(ckpt), "--data", str(tiny_dataset), "--split", "dev",
                 "--out", str(tmp_path / "e")]) == 1
    # unreadable checkpoint file -> runtime failure
    assert main(["eval-metric", "--metric", str(tmp_path / "missing.ckpt"), "--data", str(tiny_dataset),
                 "--out", str(tmp_path / "e")]) == 2
    # gradcheck refuses f32
    assert main(["gradcheck", "--dtype", "f32", "--out", str(tmp_path / "g")]) == 1


def test_eval_metric_writes_correlation(tmp_path, tiny_dataset, capsys):
    ckpt = tmp_path / "m.ckpt"
    save_checkpoint(PbanModel(channels=8, seed=1), ckpt)
    rc = main(["eval-metric", "--metric", str(ckpt), "--data", str(tiny_dataset.parent), "--split", "train",
               "--out", str(tmp_path / "e")])
    assert rc == 0
    lines = (tmp_path / "e" / "correlation.csv").read_text().splitlines()
    assert lines[0] == "split,n,plcc,srcc" and lines[1].startswith("train,9,")


def test_train_and_optimize_small(tmp_path, tiny_dataset):
    out = tmp_path / "t"
    assert main(["train-metric", "--data", str(tiny_dataset), "--channels", "8", "--epochs-stage1", "1",
                 "--epochs-stage2", "1", "--batch", "4", "--out", str(out)]) == 0
    log = (out / "train_log.csv").read_text().splitlines()
    assert log[0] == "epoch,stage,split,loss,psnr,ssim,metric_score,plcc,srcc"
    sr_out = tmp_path / "s"
    assert main(["optimize-sr", "--data", str(tiny_dataset), "--metric", str(out / "metric.ckpt"),
                 "--epochs", "1", "--out", str(sr_out)]) == 0
    assert (sr_out / "sr_model.ckpt").exists() and (sr_out / "sr_log.csv").exists()
    ab = tmp_path / "ab"
    assert main(["ablate-weights", "--data", str(tiny_dataset), "--metric", str(out / "metric.ckpt"),
                 "--epochs", "1", "--ratios", "1/9,9/1", "--out", str(ab)]) == 0
    rows = (ab / "ablation.csv").read_text().splitlines()
    assert rows[0] == "beta_over_alpha,psnr,ssim,metric_score" and [r.split(",")[0] for r in rows[1:]] == ["1/9", "9/1"]


def test_no_stopgrad_equal_weights_runs_diagnostic(tmp_path, tiny_dataset, capsys):
    ckpt = tmp_path / "m.ckpt"
    save_checkpoint(PbanModel(channels=8, seed=1), ckpt)
    rc = main(["optimize-sr", "--data", str(tiny_dataset), "--metric", str(ckpt), "--no-stopgrad",
               "--alpha", "0.5", "--beta", "0.5", "--out", str(tmp_path / "o")])
    assert rc == 1
    value = float((tmp_path / "o" / "degeneracy.txt").read_text().split()[1])
    assert value < 1e-9
