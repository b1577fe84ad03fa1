"""A complete miniature run of the pipeline, small enough to watch.

Generates a handful of 32x32 videos, trains for 1000 steps with
one video held out, and evaluates the held-out predictions. The defaults
here are deliberately smaller than the shipped configuration (10 videos,
64x64, 2000 steps) so the whole loop takes well under a minute; expect
respectable but not final numbers. The full-size run is one command:

    salattn synth && salattn train && ...      (see README)

Run:  python3 demos/train_and_evaluate.py
"""

import tempfile
import time
import warnings
from pathlib import Path

from salattn.cli import main as cli
from salattn.contrastive import DegenerateBatchWarning


def write_cfg(path, **entries):
    Path(path).write_text("".join(f"{k}={v}\n" for k, v in entries.items()))
    return str(path)


def main():
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        cfg = write_cfg(tmp / "run.cfg",
                        seed=3, n_videos=5, frames_per_video=8,
                        height=32, width=32, steps=1000, holdout=1,
                        dataset_root=tmp / "data",
                        checkpoint_path=tmp / "model.ckpt",
                        output_dir=tmp / "out")

        print("== synth: 5 videos x 8 frames at 32x32 ==")
        assert cli(["synth", "--config", cfg]) == 0

        print()
        print("== train: 1000 steps, video04 held out ==")
        # 8-frame videos leave only 3 positive candidates per anchor at the
        # default k of 4; the miner warns once and uses what is available.
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateBatchWarning)
            assert cli(["train", "--config", cfg]) == 0
        rows = (tmp / "out" / "loss_log.csv").read_text().splitlines()
        first, last = rows[1].split(","), rows[-1].split(",")
        print(f"L_bce over the run: {float(first[2]):.4f} -> {float(last[2]):.4f}")

        print()
        print("== infer + eval on the held-out video ==")
        icfg = write_cfg(tmp / "infer.cfg", seed=3,
                         checkpoint_path=tmp / "model.ckpt",
                         output_dir=tmp / "pred" / "video04")
        assert cli(["infer", "--config", icfg,
                    "--frames", str(tmp / "data" / "video04" / "frames")]) == 0
        gt = tmp / "gt" / "video04"
        gt.mkdir(parents=True)
        for m in sorted((tmp / "data" / "video04" / "masks").glob("*.pgm")):
            (gt / m.name).write_bytes(m.read_bytes())
        assert cli(["eval", "--pred", str(tmp / "pred"), "--gt", str(tmp / "gt"),
                    "--out", str(tmp / "out")]) == 0

    print()
    print(f"total {time.perf_counter() - t0:.1f}s; the shipped defaults "
          "(salattn synth / train / infer / eval) scale this up to 64x64, "
          "10 videos, 2000 steps in a couple of minutes")


if __name__ == "__main__":
    main()
