import numpy as np
import pytest

from spotfill.cli import main
from spotfill.data import load_dataset, make_dataset, read_ply, save_dataset, write_ply

TINY_CFG = """
input_n=32
level_ns=32,8,2
out_n=128
base_c=4
neighbor_s=4
heads=2
epochs=1
batch_size=4
lr=0.002
seed=3
val_fraction=0.25
"""


@pytest.fixture()
def workspace(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(TINY_CFG + f"dataset={tmp_path / 'data.spds'}\n")
    save_dataset(str(tmp_path / "data.spds"),
                 make_dataset(12, seed=4, input_n=32, out_n=128))
    return tmp_path


def test_gen_writes_dataset(tmp_path, capsys):
    out = str(tmp_path / "gen.spds")
    code = main(["gen", "--count", "6", "--seed", "2", "--out", out,
                 "--input-n", "16", "--out-n", "64", "--kinds", "sphere,torus"])
    assert code == 0
    samples = load_dataset(out)
    assert len(samples) == 6
    assert {s.spec.kind for s in samples} == {"sphere", "torus"}
    assert "wrote 6 samples" in capsys.readouterr().out


def test_gen_rejects_bad_kind(tmp_path, capsys):
    code = main(["gen", "--count", "2", "--out", str(tmp_path / "x.spds"),
                 "--kinds", "teapot"])
    assert code == 2
    assert "teapot" in capsys.readouterr().err


def test_train_eval_complete_round_trip(workspace, capsys):
    out_dir = workspace / "run"
    assert main(["train", "--config", str(workspace / "run.cfg"),
                 "--out", str(out_dir)]) == 0
    captured = capsys.readouterr().out
    assert "epoch,split,cd_norm,cd_sq" in captured
    assert (out_dir / "model.spot").exists()
    assert (out_dir / "train_log.csv").exists()

    assert main(["eval", "--checkpoint", str(out_dir / "model.spot"),
                 "--dataset", str(workspace / "data.spds")]) == 0
    eval_out = capsys.readouterr().out
    assert "Avg." in eval_out and "x 1e4" in eval_out

    partial = workspace / "partial.ply"
    sample = make_dataset(1, seed=9, input_n=32, out_n=128)[0]
    write_ply(sample.partial, str(partial))
    done = workspace / "done.ply"
    assert main(["complete", "--checkpoint", str(out_dir / "model.spot"),
                 "--in", str(partial), "--out", str(done)]) == 0
    cloud = read_ply(str(done))
    assert cloud.n == 128
    assert np.isfinite(cloud.xyz).all()


def test_train_set_overrides(workspace, capsys):
    out_dir = workspace / "run2"
    assert main(["train", "--config", str(workspace / "run.cfg"),
                 "--out", str(out_dir), "--set", "epochs=2", "--set", "lr=0.001"]) == 0
    rows = (out_dir / "train_log.csv").read_text().strip().splitlines()
    assert len(rows) == 1 + 4  # header + 2 epochs x 2 splits
    assert rows[1].endswith("0.001")


def test_usage_errors_exit_1(capsys):
    assert main([]) == 1
    assert main(["train"]) == 1  # missing --out
    assert main(["no-such-command"]) == 1


def test_help_exits_0(capsys):
    assert main(["--help"]) == 0
    assert main(["train", "--help"]) == 0


def test_missing_dataset_exits_2(workspace, capsys):
    code = main(["train", "--config", str(workspace / "run.cfg"),
                 "--out", str(workspace / "r"), "--dataset", "/nope/missing.spds"])
    assert code == 2


def test_bad_config_exits_2(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("epochs=banana\n")
    code = main(["train", "--config", str(cfg), "--out", str(tmp_path / "r")])
    assert code == 2
    assert "line 1" in capsys.readouterr().err


def test_no_dataset_key_exits_2(tmp_path, capsys):
    cfg = tmp_path / "nodata.cfg"
    cfg.write_text(TINY_CFG)
    code = main(["train", "--config", str(cfg), "--out", str(tmp_path / "r")])
    assert code == 2
    assert "dataset" in capsys.readouterr().err


def test_eval_bad_checkpoint_exits_2(workspace, capsys):
    bad = workspace / "junk.spot"
    bad.write_bytes(b"JUNKJUNKJUNK")
    code = main(["eval", "--checkpoint", str(bad),
                 "--dataset", str(workspace / "data.spds")])
    assert code == 2


def test_complete_malformed_ply_exits_2(workspace, capsys):
    out_dir = workspace / "run3"
    assert main(["train", "--config", str(workspace / "run.cfg"),
                 "--out", str(out_dir)]) == 0
    capsys.readouterr()
    bad = workspace / "bad.ply"
    bad.write_text("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n"
                   "property float y\nproperty float z\nend_header\n1 2\n")
    code = main(["complete", "--checkpoint", str(out_dir / "model.spot"),
                 "--in", str(bad), "--out", str(workspace / "o.ply")])
    assert code == 2
    assert "line 8" in capsys.readouterr().err


def test_gradcheck_micro_passes(capsys):
    assert main(["gradcheck", "--tol", "1e-4"]) == 0
    assert "123/123" in capsys.readouterr().out.replace("checks passed", "checks passed")


def test_gradcheck_impossible_tol_exits_3(capsys):
    assert main(["gradcheck", "--tol", "1e-18"]) == 3


def test_ablate_axis_table(workspace, capsys):
    code = main(["ablate", "--config", str(workspace / "run.cfg"), "--axis", "dense"])
    assert code == 0
    out = capsys.readouterr().out
    assert "full" in out and "no_dense" in out and "best:" in out
