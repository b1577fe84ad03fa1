"""How the five saliency metrics respond to typical failure modes.

Starting from a perfect prediction of a disk mask, four degradations are
applied: blurring the boundary, shifting the whole prediction, shrinking
it, and hallucinating a second blob. Each metric is sensitive to a
different aspect, so the table makes their roles concrete: MAE counts
stray mass anywhere, maxF forgives miscalibrated confidence, J punishes
overlap loss, boundary F punishes contour error specifically, and S
tracks structural plausibility.

Run:  python3 demos/metrics_tour.py
"""

import numpy as np

from salattn.metrics import (boundary_f, jaccard, mae, max_f_measure,
                             s_measure)


def disk(h, w, cy, cx, r):
    ii, jj = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    return ((ii - cy) ** 2 + (jj - cx) ** 2 <= r * r).astype(np.float64)


def box_blur(img, k):
    out = img.copy()
    for axis in (0, 1):
        acc = np.zeros_like(out)
        for off in range(-k, k + 1):
            acc += np.roll(out, off, axis=axis)
        out = acc / (2 * k + 1)
    return out


def row(name, pred, gt):
    pred_bin = (pred >= 0.5).astype(np.float64)
    print(f"  {name:<22}"
          f"{max_f_measure(pred, gt):>8.3f}"
          f"{s_measure(pred, gt):>8.3f}"
          f"{mae(pred, gt):>8.3f}"
          f"{jaccard(pred_bin, gt):>8.3f}"
          f"{boundary_f(pred_bin, gt):>8.3f}")


def main():
    h = w = 64
    gt = disk(h, w, 32, 32, 12)
    print(f"ground truth: a radius-12 disk, {int(gt.sum())} foreground pixels")
    print()
    print(f"  {'prediction':<22}{'maxF':>8}{'S':>8}{'MAE':>8}{'J':>8}{'bF':>8}")

    row("perfect", gt.copy(), gt)
    row("blurred boundary", box_blur(gt, 3), gt)
    row("shifted by 3 px", disk(h, w, 35, 35, 12), gt)
    row("shrunk to r=8", disk(h, w, 32, 32, 8), gt)
    two = np.clip(gt + disk(h, w, 12, 50, 6), 0.0, 1.0)
    row("extra blob", two, gt)
    row("half confidence", 0.5 * gt, gt)
    row("all gray 0.5", np.full((h, w), 0.5), gt)
    row("inverted", 1.0 - gt, gt)

    print()
    print("readings")
    print("  blurring barely moves maxF (a lower threshold recovers the disk)")
    print("  and the 0.5 level set stays on the true contour, so boundary F")
    print("  survives too; the damage shows in S and MAE. shifting hurts J")
    print("  and boundary F together; the extra blob costs precision, so")
    print("  maxF and J drop while the original contour keeps most of its")
    print("  boundary score; half confidence leaves every rank-based metric")
    print("  untouched and only MAE sees it; all-gray is the calibration")
    print("  worst case, MAE 0.5 exactly.")


if __name__ == "__main__":
    main()
