"""Command line behavior: config parsing, subcommands, and error reporting.

Everything runs in-process through main(argv) so stdout/stderr and exit
codes are observable with capsys; one final smoke test goes through a real
interpreter subprocess. Small datasets (16x16, a few frames) keep the
training-path tests fast.
"""

import hashlib
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from salattn.cli import main
from salattn.config import ConfigError, RunConfig, load_config, parse_config
from salattn.contrastive import DegenerateBatchWarning
from salattn.model import ModelConfig, SaliencyModel, load_checkpoint
from salattn.netpbm import read_pgm, write_pgm

# ---------------------------------------------------------------------------
# config parsing


def test_config_defaults_without_file():
    cfg = RunConfig()
    assert cfg.steps == 2000
    assert cfg.lr == 1e-4
    assert cfg.tau == 0.1
    assert cfg.k_pos == 4 and cfg.k_neg == 4
    assert cfg.batch_videos == 2 and cfg.batch_frames == 4
    assert cfg.height == 64 and cfg.width == 64
    assert cfg.holdout == 2


def test_config_parses_values_comments_and_blanks():
    cfg = parse_config("""
# full line comment
seed = 7
steps=12   # trailing comment
lr = 0.5
dataset_root = my/data
use_attention = 0
""")
    assert cfg.seed == 7
    assert cfg.steps == 12
    assert cfg.lr == 0.5
    assert cfg.dataset_root == "my/data"
    assert cfg.use_attention == 0
    assert cfg.tau == 0.1   # untouched default


def test_config_error_messages_carry_line_numbers():
    with pytest.raises(ConfigError, match="line 2: unknown key 'sped'"):
        parse_config("seed=1\nsped=3\n")
    with pytest.raises(ConfigError, match="line 3: duplicate key 'seed'"):
        parse_config("seed=1\nsteps=5\nseed=2\n")
    with pytest.raises(ConfigError, match="line 1: expected key=value"):
        parse_config("just words\n")


def test_config_value_validation():
    with pytest.raises(ConfigError, match="steps: expected an integer"):
        parse_config("steps=many\n")
    with pytest.raises(ConfigError, match="seed: must be >= 0"):
        parse_config("seed=-4\n")
    with pytest.raises(ConfigError, match="lr: must be positive"):
        parse_config("lr=0\n")
    with pytest.raises(ConfigError, match="height: must be divisible by 8"):
        parse_config("height=20\n")
    with pytest.raises(ConfigError, match="width: must be >= 8"):
        parse_config("width=0\n")
    with pytest.raises(ConfigError, match="use_contrastive: expected 0 or 1"):
        parse_config("use_contrastive=yes\n")
    with pytest.raises(ConfigError, match="output_dir: empty path"):
        parse_config("output_dir=\n")


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read config"):
        load_config(tmp_path / "none.cfg")


# ---------------------------------------------------------------------------
# helpers for pipeline tests


def write_cfg(path, **over):
    entries = dict(seed=1, n_videos=3, frames_per_video=2, height=16, width=16,
                   holdout=0, batch_videos=2, batch_frames=2, steps=0)
    entries.update(over)
    Path(path).write_text("".join(f"{k}={v}\n" for k, v in entries.items()))
    return str(path)


def tree_digest(root):
    h = hashlib.sha256()
    for p in sorted(Path(root).rglob("*")):
        if p.is_file():
            h.update(p.relative_to(root).as_posix().encode())
            h.update(p.read_bytes())
    return h.hexdigest()


@pytest.fixture
def mini(tmp_path):
    """A tiny synthesized dataset plus a config pointing at tmp_path paths."""
    cfg = write_cfg(tmp_path / "run.cfg",
                    dataset_root=tmp_path / "data",
                    checkpoint_path=tmp_path / "model.ckpt",
                    output_dir=tmp_path / "out")
    assert main(["synth", "--config", cfg]) == 0
    return tmp_path, cfg


# ---------------------------------------------------------------------------
# synth


def test_synth_writes_expected_files(mini, capsys):
    tmp_path, _ = mini
    data = tmp_path / "data"
    vids = sorted(d.name for d in data.iterdir())
    assert vids == ["video00", "video01", "video02"]
    for v in vids:
        assert sorted(p.name for p in (data / v / "frames").iterdir()) == \
            ["00000.ppm", "00001.ppm"]
        assert sorted(p.name for p in (data / v / "masks").iterdir()) == \
            ["00000.pgm", "00001.pgm"]


def test_synth_refuses_overwrite_without_force(mini, capsys):
    tmp_path, cfg = mini
    assert main(["synth", "--config", cfg]) == 1
    err = capsys.readouterr().err
    assert err.startswith("ERROR[io]")
    assert "--force" in err
    assert main(["synth", "--config", cfg, "--force"]) == 0


def test_synth_deterministic_across_runs(tmp_path):
    digests = []
    for name in ("a", "b"):
        cfg = write_cfg(tmp_path / f"{name}.cfg", dataset_root=tmp_path / name)
        assert main(["synth", "--config", cfg]) == 0
        digests.append(tree_digest(tmp_path / name))
    assert digests[0] == digests[1]


# ---------------------------------------------------------------------------
# train


def test_train_zero_steps_saves_initial_model(mini, capsys):
    tmp_path, cfg = mini
    assert main(["train", "--config", cfg]) == 0
    out = capsys.readouterr().out
    assert "model parameters:" in out
    fresh = SaliencyModel(ModelConfig(), seed=1)
    load_checkpoint(tmp_path / "model.ckpt", fresh)   # shape manifest matches
    log = (tmp_path / "out" / "loss_log.csv").read_text().splitlines()
    assert log == ["step,L,L_bce,L_cl"]


def test_train_few_steps_logs_finite_losses(mini):
    tmp_path, cfg = mini
    cfg2 = write_cfg(tmp_path / "run2.cfg", steps=2,
                     dataset_root=tmp_path / "data",
                     checkpoint_path=tmp_path / "m2.ckpt",
                     output_dir=tmp_path / "out2")
    # two-frame videos leave fewer than k_pos candidates, which warns
    with pytest.warns(DegenerateBatchWarning):
        assert main(["train", "--config", cfg2]) == 0
    rows = (tmp_path / "out2" / "loss_log.csv").read_text().splitlines()
    assert rows[0] == "step,L,L_bce,L_cl"
    assert len(rows) == 3
    for row in rows[1:]:
        step, total, bce, cl = row.split(",")
        assert np.isfinite(float(total)) and np.isfinite(float(bce))
        # first loss with zeroed logit heads: bce is exactly ln 2
    assert abs(float(rows[1].split(",")[2]) - np.log(2.0)) < 1e-6


def test_train_validates_batch_against_dataset(mini, capsys):
    tmp_path, _ = mini
    bad = write_cfg(tmp_path / "bad.cfg", holdout=3,
                    dataset_root=tmp_path / "data")
    assert main(["train", "--config", bad]) == 1
    assert "ERROR[config]" in capsys.readouterr().err
    bad = write_cfg(tmp_path / "bad2.cfg", batch_videos=5,
                    dataset_root=tmp_path / "data")
    assert main(["train", "--config", bad]) == 1
    assert "batch_videos" in capsys.readouterr().err
    bad = write_cfg(tmp_path / "bad3.cfg", batch_frames=9,
                    dataset_root=tmp_path / "data")
    assert main(["train", "--config", bad]) == 1
    assert "batch_frames" in capsys.readouterr().err


def test_train_missing_dataset(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "run.cfg", dataset_root=tmp_path / "nowhere")
    assert main(["train", "--config", cfg]) == 1
    assert capsys.readouterr().err.startswith("ERROR[dataset]")


# ---------------------------------------------------------------------------
# infer


def test_infer_fresh_checkpoint_outputs_half_gray(mini):
    tmp_path, cfg = mini
    assert main(["train", "--config", cfg]) == 0   # steps=0: initial weights
    assert main(["infer", "--config", cfg,
                 "--frames", str(tmp_path / "data" / "video00" / "frames")]) == 0
    outs = sorted((tmp_path / "out").glob("*.pgm"))
    assert [p.name for p in outs] == ["00000.pgm", "00001.pgm"]
    # zero logit heads put every pixel at saliency 0.5 -> raster byte 128
    for p in outs:
        raster = p.read_bytes().split(b"255\n", 1)[1]
        assert raster == bytes([128]) * (16 * 16)
        assert np.all(read_pgm(p) == 128.0 / 255.0)


def test_infer_errors(mini, capsys):
    tmp_path, cfg = mini
    assert main(["train", "--config", cfg]) == 0
    assert main(["infer", "--config", cfg, "--frames", str(tmp_path / "none")]) == 1
    assert capsys.readouterr().err.startswith("ERROR[dataset]")
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["infer", "--config", cfg, "--frames", str(empty)]) == 1
    assert "no .ppm frames" in capsys.readouterr().err


def test_infer_missing_and_corrupt_checkpoint(mini, capsys):
    tmp_path, cfg = mini
    frames = str(tmp_path / "data" / "video00" / "frames")
    assert main(["infer", "--config", cfg, "--checkpoint",
                 str(tmp_path / "none.ckpt"), "--frames", frames]) == 1
    assert capsys.readouterr().err.startswith("ERROR[io]")
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"NOTMAGIC" + bytes(64))
    assert main(["infer", "--config", cfg, "--checkpoint", str(bad),
                 "--frames", frames]) == 1
    assert capsys.readouterr().err.startswith("ERROR[checkpoint]")


# ---------------------------------------------------------------------------
# eval


def make_eval_dirs(tmp_path, perfect=True):
    gt = tmp_path / "gt" / "vid"
    pred = tmp_path / "pred" / "vid"
    gt.mkdir(parents=True)
    pred.mkdir(parents=True)
    rng = np.random.default_rng(5)
    for i in range(2):
        mask = (rng.random((16, 16)) < 0.4).astype(np.float64)
        write_pgm(gt / f"{i:05d}.pgm", mask)
        write_pgm(pred / f"{i:05d}.pgm", mask if perfect else 1.0 - mask)
    return tmp_path / "pred", tmp_path / "gt"


def test_eval_perfect_predictions(tmp_path, capsys):
    pred, gt = make_eval_dirs(tmp_path)
    out = tmp_path / "scores"
    assert main(["eval", "--pred", str(pred), "--gt", str(gt),
                 "--out", str(out)]) == 0
    table = capsys.readouterr().out
    assert "overall" in table
    assert (out / "metrics.tsv").exists()
    lines = (out / "metrics.tsv").read_text().splitlines()
    assert lines[0] == "# frame_id\tmaxF\tS\tMAE\tJ\tboundaryF"
    assert len(lines) == 3
    first = lines[1].split("\t")
    assert first[0] == "vid/00000"
    assert float(first[1]) == 1.0     # maxF
    assert float(first[3]) == 0.0     # MAE


def test_eval_defaults_output_to_pred_dir(tmp_path):
    pred, gt = make_eval_dirs(tmp_path)
    assert main(["eval", "--pred", str(pred), "--gt", str(gt)]) == 0
    assert (pred / "metrics.tsv").exists()
    assert (pred / "metrics.txt").exists()


def test_eval_reports_mismatched_ids(tmp_path, capsys):
    pred, gt = make_eval_dirs(tmp_path)
    write_pgm(pred / "vid" / "00009.pgm", np.zeros((16, 16)))
    (gt / "vid" / "00001.pgm").rename(gt / "vid" / "00008.pgm")
    assert main(["eval", "--pred", str(pred), "--gt", str(gt)]) == 1
    err = capsys.readouterr().err
    assert err.startswith("ERROR[dataset]")
    assert "prediction without ground truth: vid/00001, vid/00009" in err
    assert "ground truth without prediction: vid/00008" in err


def test_eval_missing_directory(tmp_path, capsys):
    assert main(["eval", "--pred", str(tmp_path / "a"),
                 "--gt", str(tmp_path / "b")]) == 1
    assert capsys.readouterr().err.startswith("ERROR[dataset]")


def test_thread_env_validation(tmp_path, capsys, monkeypatch):
    pred, gt = make_eval_dirs(tmp_path)
    monkeypatch.setenv("SALATTN_THREADS", "lots")
    assert main(["eval", "--pred", str(pred), "--gt", str(gt)]) == 1
    assert "SALATTN_THREADS must be an integer" in capsys.readouterr().err
    monkeypatch.setenv("SALATTN_THREADS", "-2")
    assert main(["eval", "--pred", str(pred), "--gt", str(gt)]) == 1
    assert "must be >= 0" in capsys.readouterr().err
    monkeypatch.setenv("SALATTN_THREADS", "2")
    assert main(["eval", "--pred", str(pred), "--gt", str(gt)]) == 0


# ---------------------------------------------------------------------------
# bench


def test_bench_pinned_multiply_counts(capsys):
    assert main(["bench", "16", "16", "32", "--repeats", "1"]) == 0
    out = capsys.readouterr().out
    assert "4,194,304" in out
    assert "524,288" in out
    assert "multiply ratio naive/reordered: 8.00" in out


def test_bench_rejects_nonpositive_sizes(capsys):
    assert main(["bench", "0", "4", "4"]) == 2
    assert capsys.readouterr().err.startswith("ERROR[usage]")


# ---------------------------------------------------------------------------
# argument errors and the subprocess smoke test


def test_usage_errors_exit_two(capsys):
    assert main([]) == 2
    assert capsys.readouterr().err.startswith("ERROR[usage]")
    assert main(["frobnicate"]) == 2
    assert capsys.readouterr().err.startswith("ERROR[usage]")
    assert main(["infer"]) == 2   # missing --frames
    assert capsys.readouterr().err.startswith("ERROR[usage]")


def test_cli_runs_in_subprocess():
    proc = subprocess.run(
        [sys.executable, "-c",
         "import sys; from salattn.cli import main; sys.exit(main(sys.argv[1:]))",
         "bench", "8", "8", "8", "--repeats", "1"],
        capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    assert "multiply ratio naive/reordered" in proc.stdout
