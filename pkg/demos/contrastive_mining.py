"""Hard mining and the grouped InfoNCE loss, end to end on one toy video.

Each frame contributes two pooled unit vectors: one over the foreground
mask, one over the background. The mining score is the current
prediction's error inside that region, so the frames the model gets most
wrong are exactly the ones selected as positives and negatives. The loss
then pulls the anchor toward the selected foreground vectors and pushes
it from the background ones.

Run:  python3 demos/contrastive_mining.py
"""

import numpy as np

from salattn import tensor as T
from salattn.contrastive import (build_contrastive_batches,
                                 extract_region_features, infonce_loss,
                                 mine_hard_samples)
from salattn.synth import SynthConfig, generate_video


def fake_prediction(mask, quality, rng):
    """A saliency map that matches the mask with the given fidelity."""
    noise = rng.random(mask.shape)
    return np.clip(quality * mask + (1.0 - quality) * noise, 0.0, 1.0)


def main():
    rng = np.random.default_rng(77)
    video = generate_video(SynthConfig(video_id="toy", seed=5, n_frames=6,
                                       height=32, width=32, shape="disk"))

    # pretend the model is good on even frames and poor on odd ones
    features = []
    for f in range(6):
        frame_feat = T.constant(rng.random((8, 8, 12)))
        quality = 0.9 if f % 2 == 0 else 0.3
        pred = fake_prediction(video.masks[f], quality, rng)
        features += extract_region_features(frame_feat, video.masks[f], pred,
                                            "toy", f)

    fg = [r for r in features if r.polarity == "foreground"]
    bg = [r for r in features if r.polarity == "background"]
    print("region features (score = prediction error inside the region)")
    for r in fg + bg:
        print(f"  frame {r.frame_idx}  {r.polarity:<10} score {r.score:.3f}")

    print()
    print("hard mining keeps the worst-predicted regions first")
    for k in (2, 4):
        picked = mine_hard_samples(fg, k)
        print(f"  top {k} foreground frames: {[r.frame_idx for r in picked]}")

    print()
    batches = build_contrastive_batches(features, k_pos=2, k_neg=3)
    print(f"{len(batches)} anchors (every foreground region with both pools)")
    b = batches[0]
    print(f"anchor frame {b.anchor.frame_idx}: positives from frames "
          f"{[p.frame_idx for p in b.positives]}, negatives from frames "
          f"{[n.frame_idx for n in b.negatives]}")

    print()
    print("temperature sweep for that anchor (lower tau sharpens the contrast)")
    for tau in (0.05, 0.1, 0.5, 1.0):
        print(f"  tau {tau:<5} loss {infonce_loss(b, tau).item():.4f}")

    print()
    print("a perfectly aligned positive and orthogonal negative at tau = 1")
    u = np.zeros(12)
    u[0] = 1.0
    v = np.zeros(12)
    v[1] = 1.0
    from salattn.contrastive import ContrastiveBatch, RegionFeature
    ideal = ContrastiveBatch(
        RegionFeature("toy", 0, "foreground", T.constant(u), 0.5),
        [RegionFeature("toy", 1, "foreground", T.constant(u.copy()), 0.5)],
        [RegionFeature("toy", 0, "background", T.constant(v), 0.5)])
    print(f"  loss = {infonce_loss(ideal, 1.0).item():.6f}  "
          "(= log(1 + e^-1), the best a single pair can do)")


if __name__ == "__main__":
    main()
