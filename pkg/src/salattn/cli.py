"""Command line entry point.

Subcommands: synth, train, infer, eval, bench, gradcheck. Every run is
deterministic given its config file and inputs. Failures exit nonzero
after printing a single machine-parsable line to stderr of the form

    ERROR[category] message

with category one of usage, config, dataset, io, checkpoint, numeric.
SALATTN_THREADS caps the worker pool for per-frame work (0 or unset means
auto); results do not depend on the thread count.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import attention, metrics
from .config import ConfigError, RunConfig, load_config
from .model import (CheckpointError, ModelConfig, SaliencyModel, TrainSettings,
                    load_checkpoint, save_checkpoint, train_step)
from .netpbm import NetpbmError, atomic_write_text, read_pgm, read_ppm, write_pgm
from .rng import SplitMix64, mix64
from .synth import DatasetError, SynthConfig, generate_video, load_dataset, save_video


class CliError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message)


def _thread_count() -> int:
    raw = os.environ.get("SALATTN_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise CliError("config", f"SALATTN_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise CliError("config", f"SALATTN_THREADS must be >= 0, got {n}")
    if n == 0:
        return min(8, os.cpu_count() or 1)
    return n


def _load_cfg(path) -> RunConfig:
    return load_config(path) if path else RunConfig()


def _build_model(cfg: RunConfig) -> SaliencyModel:
    mc = ModelConfig(channels=cfg.channels, use_attention=bool(cfg.use_attention))
    return SaliencyModel(mc, seed=cfg.seed)


# ---------------------------------------------------------------------------
# synth


def cmd_synth(cfg: RunConfig, force: bool) -> int:
    root = Path(cfg.dataset_root)
    if root.exists() and any(root.iterdir()):
        if not force:
            raise CliError("io", f"dataset root {root} already exists and is not empty "
                                 "(pass --force to overwrite)")
    master = SplitMix64(cfg.seed)
    for i in range(cfg.n_videos):
        sub_seed = master.next_u64()
        scale = 0.38
        vc = SynthConfig(video_id=f"video{i:02d}", seed=sub_seed,
                         n_frames=cfg.frames_per_video,
                         height=cfg.height, width=cfg.width,
                         shape="disk",
                         scale=scale)
        save_video(root, generate_video(vc))
    print(f"wrote {cfg.n_videos} videos x {cfg.frames_per_video} frames "
          f"({cfg.height}x{cfg.width}) under {root}")
    return 0


# ---------------------------------------------------------------------------
# train


def _sample_minibatch(rng: SplitMix64, videos, batch_videos: int, batch_frames: int):
    picked = rng.sample_distinct(len(videos), batch_videos)
    batch = []
    for vi in picked:
        video = videos[vi]
        n = video.frames.shape[0]
        for fi in rng.sample_distinct(n, batch_frames):
            batch.append((video.video_id, fi, video.frames[fi], video.masks[fi]))
    return batch


def cmd_train(cfg: RunConfig) -> int:
    videos = load_dataset(cfg.dataset_root)
    if cfg.holdout >= len(videos):
        raise CliError("config", f"holdout {cfg.holdout} leaves no training videos "
                                 f"(dataset has {len(videos)})")
    train_videos = videos[:len(videos) - cfg.holdout] if cfg.holdout else videos
    if len(train_videos) < cfg.batch_videos:
        raise CliError("config", f"batch_videos {cfg.batch_videos} exceeds "
                                 f"{len(train_videos)} training videos")
    for v in train_videos:
        if v.frames.shape[0] < cfg.batch_frames:
            raise CliError("config", f"batch_frames {cfg.batch_frames} exceeds "
                                     f"{v.frames.shape[0]} frames of {v.video_id}")

    model = _build_model(cfg)
    print(f"model parameters: {model.param_count()}")
    settings = TrainSettings(lr=cfg.lr, tau=cfg.tau, k_pos=cfg.k_pos, k_neg=cfg.k_neg,
                             use_contrastive=bool(cfg.use_contrastive))
    sample_rng = SplitMix64(mix64(cfg.seed + 1))
    rows = ["step,L,L_bce,L_cl"]
    report_every = max(1, cfg.steps // 10)
    t0 = time.perf_counter()
    try:
        for step in range(1, cfg.steps + 1):
            batch = _sample_minibatch(sample_rng, train_videos,
                                      cfg.batch_videos, cfg.batch_frames)
            rec = train_step(model, batch, settings)
            rows.append(f"{step},{rec.loss:.8f},{rec.bce:.8f},{rec.contrastive:.8f}")
            if step % report_every == 0 or step == cfg.steps:
                print(f"step {step}/{cfg.steps}  L={rec.loss:.5f}  "
                      f"L_bce={rec.bce:.5f}  L_cl={rec.contrastive:.5f}")
    except FloatingPointError as e:
        # Keep the last finite state and the log collected so far.
        save_checkpoint(cfg.checkpoint_path, model)
        _write_loss_log(cfg, rows)
        raise CliError("numeric", str(e)) from None
    save_checkpoint(cfg.checkpoint_path, model)
    _write_loss_log(cfg, rows)
    dt = time.perf_counter() - t0
    print(f"trained {cfg.steps} steps in {dt:.1f}s, checkpoint at {cfg.checkpoint_path}")
    return 0


def _write_loss_log(cfg: RunConfig, rows) -> None:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "loss_log.csv", "\n".join(rows) + "\n")


# ---------------------------------------------------------------------------
# infer


def cmd_infer(cfg: RunConfig, checkpoint, frames_dir) -> int:
    model = _build_model(cfg)
    load_checkpoint(checkpoint or cfg.checkpoint_path, model)
    fdir = Path(frames_dir)
    if not fdir.is_dir():
        raise CliError("dataset", f"frame directory {frames_dir} is not a directory")
    names = sorted(p.name for p in fdir.glob("*.ppm"))
    if not names:
        raise CliError("dataset", f"no .ppm frames under {frames_dir}")
    frames = [read_ppm(fdir / n) for n in names]
    shape0 = frames[0].shape
    for n, f in zip(names, frames):
        if f.shape != shape0:
            raise CliError("dataset", f"frame {n} shape {f.shape} differs from {shape0}")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with ThreadPoolExecutor(max_workers=_thread_count()) as pool:
        maps = list(pool.map(lambda f: model.forward(f).saliency.data, frames))
    for name, sal in zip(names, maps):
        write_pgm(out / (Path(name).stem + ".pgm"), sal)
    print(f"wrote {len(names)} saliency maps to {out}")
    return 0


# ---------------------------------------------------------------------------
# eval


def _collect_pgms(root: Path) -> dict:
    found = {}
    for p in sorted(root.rglob("*.pgm")):
        rel = p.relative_to(root).as_posix()
        found[rel[:-len(".pgm")]] = p
    return found


def cmd_eval(pred_dir, gt_dir, out_dir) -> int:
    pred_root, gt_root = Path(pred_dir), Path(gt_dir)
    for r in (pred_root, gt_root):
        if not r.is_dir():
            raise CliError("dataset", f"{r} is not a directory")
    preds = _collect_pgms(pred_root)
    gts = _collect_pgms(gt_root)
    only_pred = sorted(set(preds) - set(gts))
    only_gt = sorted(set(gts) - set(preds))
    if only_pred or only_gt:
        parts = [f"prediction without ground truth: {', '.join(only_pred)}" if only_pred else "",
                 f"ground truth without prediction: {', '.join(only_gt)}" if only_gt else ""]
        raise CliError("dataset", "; ".join(p for p in parts if p))
    if not preds:
        raise CliError("dataset", f"no .pgm files under {pred_dir}")

    ids = sorted(preds)
    threads = _thread_count()

    def one(frame_id):
        pred = read_pgm(preds[frame_id])
        gt = (read_pgm(gts[frame_id]) >= 0.5).astype(np.float64)
        return frame_id, pred, gt

    with ThreadPoolExecutor(max_workers=threads) as pool:
        triples = list(pool.map(one, ids))
    report = metrics.evaluate_frames(triples)

    out = Path(out_dir) if out_dir else pred_root
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "metrics.tsv", report.lines())
    atomic_write_text(out / "metrics.txt", report.table())
    print(report.table(), end="")
    return 0


# ---------------------------------------------------------------------------
# bench


def _bench_input(h: int, w: int, c: int) -> np.ndarray:
    rng = SplitMix64(mix64(h * 1_000_003 + w * 1_009 + c))
    # Small magnitudes keep the three evaluation orders within 1e-10 even
    # for long accumulations.
    return (rng.f64_array((h, w, c)) - 0.5) * 0.5


def _median_time(fn, x: np.ndarray, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(x)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def cmd_bench(h: int, w: int, c: int, repeats: int) -> int:
    if h < 1 or w < 1 or c < 1 or repeats < 1:
        raise CliError("usage", "bench arguments must be positive")
    x = _bench_input(h, w, c)
    variants = [("naive", attention.nonlocal_rowwise),
                ("unordered", attention.nonlocal_unordered),
                ("reordered", attention.nonlocal_reordered)]
    reference = variants[0][1](x)
    for name, fn in variants[1:]:
        gap = float(np.max(np.abs(fn(x) - reference)))
        if gap > 1e-10:
            raise CliError("numeric", f"variant {name} disagrees with naive by {gap:.3e}")
    print(f"non-local block at h={h} w={w} c={c} (N={h * w}), median of {repeats} runs")
    print(f"{'variant':<12}{'multiplies':>16}{'seconds':>14}")
    times = {}
    for name, fn in variants:
        flops = attention.count_flops(name, h, w, c)
        times[name] = _median_time(fn, x, repeats)
        print(f"{name:<12}{flops:>16,}{times[name]:>14.6f}")
    ratio = attention.count_flops("naive", h, w, c) / attention.count_flops("reordered", h, w, c)
    print(f"multiply ratio naive/reordered: {ratio:.2f}")
    print(f"time ratio naive/reordered: {times['naive'] / max(times['reordered'], 1e-12):.2f}")
    return 0


# ---------------------------------------------------------------------------
# gradcheck


def cmd_gradcheck() -> int:
    from .gradcheck import format_rows, run_suite
    rows = run_suite()
    print(format_rows(rows), end="")
    bad = [r for r in rows if not r.passed]
    if bad:
        raise CliError("numeric", "gradient check failed for: " + ", ".join(r.name for r in bad))
    print(f"all {len(rows)} checks passed")
    return 0


# ---------------------------------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(prog="salattn", description="desk-scale video saliency pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic moving-shape dataset")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--force", action="store_true", help="overwrite an existing dataset")

    p = sub.add_parser("train", help="train from a dataset directory")
    p.add_argument("--config", help="key=value config file")

    p = sub.add_parser("infer", help="write saliency maps for a directory of frames")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--checkpoint", help="checkpoint path (default: from config)")
    p.add_argument("--frames", required=True, help="directory of NNNNN.ppm frames")

    p = sub.add_parser("eval", help="score predictions against ground truth masks")
    p.add_argument("--pred", required=True, help="directory of predicted .pgm maps")
    p.add_argument("--gt", required=True, help="directory of ground-truth .pgm masks")
    p.add_argument("--out", help="where to write metrics.tsv/metrics.txt (default: pred dir)")

    p = sub.add_parser("bench", help="count and time the non-local variants")
    p.add_argument("h", type=int)
    p.add_argument("w", type=int)
    p.add_argument("c", type=int)
    p.add_argument("--repeats", type=int, default=5)

    sub.add_parser("gradcheck", help="finite-difference check of every op")
    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        if args.command == "synth":
            return cmd_synth(_load_cfg(args.config), args.force)
        if args.command == "train":
            return cmd_train(_load_cfg(args.config))
        if args.command == "infer":
            return cmd_infer(_load_cfg(args.config), args.checkpoint, args.frames)
        if args.command == "eval":
            return cmd_eval(args.pred, args.gt, args.out)
        if args.command == "bench":
            return cmd_bench(args.h, args.w, args.c, args.repeats)
        if args.command == "gradcheck":
            return cmd_gradcheck()
        raise CliError("usage", f"unknown command {args.command!r}")
    except CliError as e:
        print(f"ERROR[{e.category}] {_one_line(e)}", file=sys.stderr)
        return 2 if e.category == "usage" else 1
    except ConfigError as e:
        print(f"ERROR[config] {_one_line(e)}", file=sys.stderr)
        return 1
    except DatasetError as e:
        print(f"ERROR[dataset] {_one_line(e)}", file=sys.stderr)
        return 1
    except CheckpointError as e:
        print(f"ERROR[checkpoint] {_one_line(e)}", file=sys.stderr)
        return 1
    except NetpbmError as e:
        print(f"ERROR[io] {_one_line(e)}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"ERROR[io] {_one_line(e)}", file=sys.stderr)
        return 1
    except FloatingPointError as e:
        print(f"ERROR[numeric] {_one_line(e)}", file=sys.stderr)
        return 1


def _one_line(e: Exception) -> str:
    return " ".join(str(e).split())


if __name__ == "__main__":
    sys.exit(main())
