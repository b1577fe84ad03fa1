"""Central-difference verification of every backward pass.

gradient_check runs the function once under a tape for analytic gradients,
then perturbs one input coordinate at a time by +/- h and compares. The
error reported is max over coordinates of |a - f| / max(1, |a|, |f|), so
tiny gradients are compared absolutely and large ones relatively.

run_suite covers each differentiable operation at five seeded points on
small shapes, plus the fully composed model (forward + BCE) checked on a
random 20-coordinate parameter subset at a looser tolerance, since a dozen
stacked nonlinear stages amplify finite-difference truncation error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import attention, contrastive, model, ops
from . import tensor as T
from .tensor import GradTape, Tensor

DEFAULT_STEP = 1e-6
OP_TOL = 1e-5
COMPOSED_TOL = 1e-4


class GradientCheckError(RuntimeError):
    """A non-finite value appeared during gradient verification."""


def gradient_check(fn, inputs, step: float = DEFAULT_STEP, coords=None) -> float:
    """Max relative disagreement between analytic and central-difference
    gradients of a scalar-valued fn over the given inputs.

    coords optionally restricts the sweep to (input_index, flat_index)
    pairs; by default every coordinate of every input is checked.
    """
    inputs = list(inputs)
    with GradTape() as tape:
        out = fn(inputs)
    if out.data.size != 1:
        raise ValueError(f"function under check must be scalar, got shape {out.shape}")
    analytic = tape.gradient(out, inputs)

    if coords is None:
        coords = [(ti, k) for ti, t in enumerate(inputs) for k in range(t.data.size)]
    worst = 0.0
    for ti, k in coords:
        flat = inputs[ti].data.reshape(-1)
        orig = flat[k]
        flat[k] = orig + step
        f_plus = fn(inputs).item()
        flat[k] = orig - step
        f_minus = fn(inputs).item()
        flat[k] = orig
        fd = (f_plus - f_minus) / (2.0 * step)
        a = float(analytic[ti].reshape(-1)[k])
        if not (np.isfinite(fd) and np.isfinite(a)):
            raise GradientCheckError(
                f"non-finite gradient at input {ti} coordinate {k}: analytic {a}, fd {fd}")
        worst = max(worst, abs(a - fd) / max(1.0, abs(a), abs(fd)))
    return worst


@dataclass
class CheckRow:
    name: str
    points: int
    max_err: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_err <= self.tol


def _t(rng, shape, lo=-1.0, hi=1.0) -> Tensor:
    return T.parameter(rng.uniform(lo, hi, shape))


def _proj(rng, shape) -> Tensor:
    return T.constant(rng.uniform(-1.0, 1.0, shape))


def _scalarized(out: Tensor, proj: Tensor) -> Tensor:
    return T.sum_all(T.mul(proj, out))


def _case_add(rng):
    p = _proj(rng, (3, 4))
    return (lambda ts: _scalarized(T.add(ts[0], ts[1]), p),
            [_t(rng, (3, 4)), _t(rng, (3, 4))])


def _case_sub(rng):
    p = _proj(rng, (3, 4))
    return (lambda ts: _scalarized(T.sub(ts[0], ts[1]), p),
            [_t(rng, (3, 4)), _t(rng, (3, 4))])


def _case_mul(rng):
    p = _proj(rng, (3, 4))
    return (lambda ts: _scalarized(T.mul(ts[0], ts[1]), p),
            [_t(rng, (3, 4)), _t(rng, (3, 4))])


def _case_scale(rng):
    p = _proj(rng, (2, 3, 2))
    s = float(rng.uniform(-2.0, 2.0))
    return (lambda ts: _scalarized(T.scale(ts[0], s), p), [_t(rng, (2, 3, 2))])


def _case_matmul(rng):
    p = _proj(rng, (4, 3))
    return (lambda ts: _scalarized(T.matmul(ts[0], ts[1]), p),
            [_t(rng, (4, 5)), _t(rng, (5, 3))])


def _case_matvec(rng):
    p = _proj(rng, (4,))
    return (lambda ts: _scalarized(T.matvec(ts[0], ts[1]), p),
            [_t(rng, (4, 6)), _t(rng, (6,))])


def _case_dot(rng):
    return (lambda ts: T.dot(ts[0], ts[1]), [_t(rng, (7,)), _t(rng, (7,))])


def _case_transpose(rng):
    p = _proj(rng, (5, 3))
    return (lambda ts: _scalarized(T.transpose(ts[0]), p), [_t(rng, (3, 5))])


def _case_reshape(rng):
    p = _proj(rng, (2, 6))
    return (lambda ts: _scalarized(T.reshape(ts[0], (2, 6)), p), [_t(rng, (3, 4))])


def _case_concat(rng):
    p = _proj(rng, (3, 5))
    return (lambda ts: _scalarized(T.concat(ts, axis=1), p),
            [_t(rng, (3, 2)), _t(rng, (3, 3))])


def _case_stack_rows(rng):
    p = _proj(rng, (3, 4))
    return (lambda ts: _scalarized(T.stack_rows(ts), p),
            [_t(rng, (4,)), _t(rng, (4,)), _t(rng, (4,))])


def _case_sum_all(rng):
    return (lambda ts: T.sum_all(ts[0]), [_t(rng, (3, 2, 2))])


def _case_relu(rng):
    # Points pushed away from the kink at zero.
    p = _proj(rng, (4, 4))
    x = rng.uniform(0.1, 1.0, (4, 4)) * rng.choice([-1.0, 1.0], (4, 4))
    return (lambda ts: _scalarized(T.relu(ts[0]), p), [T.parameter(x)])


def _case_sigmoid(rng):
    p = _proj(rng, (4, 4))
    return (lambda ts: _scalarized(T.sigmoid(ts[0]), p), [_t(rng, (4, 4), -3.0, 3.0)])


def _case_logsumexp(rng):
    return (lambda ts: T.logsumexp(ts[0]), [_t(rng, (9,), -2.0, 2.0)])


def _case_l2_normalize(rng):
    p = _proj(rng, (6,))
    v = rng.uniform(-1.0, 1.0, 6)
    v += np.sign(v.sum() or 1.0) * 0.5 / 6   # keep the norm well away from zero
    return (lambda ts: _scalarized(T.l2_normalize(ts[0]), p), [T.parameter(v)])


def _case_softmax_rows(rng):
    p = _proj(rng, (4, 5))
    return (lambda ts: _scalarized(ops.softmax_rows(ts[0]), p),
            [_t(rng, (4, 5), -2.0, 2.0)])


def _case_conv2d(rng):
    p = _proj(rng, (5, 5, 4))
    return (lambda ts: _scalarized(ops.conv2d(ts[0], ts[1], ts[2], stride=1), p),
            [_t(rng, (5, 5, 3)), _t(rng, (3, 3, 3, 4)), _t(rng, (4,))])


def _case_conv2d_strided(rng):
    p = _proj(rng, (3, 3, 2))
    return (lambda ts: _scalarized(ops.conv2d(ts[0], ts[1], ts[2], stride=2), p),
            [_t(rng, (6, 6, 3)), _t(rng, (3, 3, 3, 2)), _t(rng, (2,))])


def _case_depthwise_conv2d(rng):
    p = _proj(rng, (5, 5, 3))
    return (lambda ts: _scalarized(ops.depthwise_conv2d(ts[0], ts[1]), p),
            [_t(rng, (5, 5, 3)), _t(rng, (3, 3, 3))])


def _case_mean_hw(rng):
    p = _proj(rng, (3,))
    return (lambda ts: _scalarized(ops.mean_hw(ts[0]), p), [_t(rng, (4, 5, 3))])


def _case_masked_avg_pool(rng):
    p = _proj(rng, (3,))
    mask = (rng.uniform(0, 1, (4, 4)) < 0.5).astype(np.float64)
    mask.reshape(-1)[int(rng.integers(16))] = 1.0   # never empty
    return (lambda ts: _scalarized(ops.masked_avg_pool(ts[0], mask), p),
            [_t(rng, (4, 4, 3))])


def _case_bilinear_upsample_x2(rng):
    p = _proj(rng, (6, 6, 2))
    return (lambda ts: _scalarized(ops.bilinear_upsample_x2(ts[0]), p),
            [_t(rng, (3, 3, 2))])


def _case_bce_loss(rng):
    target = (rng.uniform(0, 1, (4, 4)) < 0.5).astype(np.float64)
    pred = rng.uniform(0.05, 0.95, (4, 4))
    return (lambda ts: ops.bce_loss(ts[0], target), [T.parameter(pred)])


def _case_lightweight_nonlocal(rng):
    p = _proj(rng, (4, 4, 4))
    return (lambda ts: _scalarized(attention.lightweight_nonlocal(ts[0]), p),
            [_t(rng, (4, 4, 4))])


def _case_self_attention_block(rng):
    p = _proj(rng, (4, 4, 4))
    gen_w = _t(rng, (4, 36), -0.5, 0.5)
    return (lambda ts: _scalarized(
                attention.self_attention_block(ts[0], attention.DynamicFilterGenerator(ts[1])), p),
            [_t(rng, (4, 4, 4)), gen_w])


def _case_coattention(rng):
    p = _proj(rng, (3, 3, 4))
    params = [_t(rng, (6, 6, 2)),            # early map v
              _t(rng, (3, 3, 4)),            # late map x
              _t(rng, (3, 3, 2, 4), -0.5, 0.5),   # resize kernel
              _t(rng, (4,), -0.2, 0.2),      # resize bias
              _t(rng, (4, 4), -0.5, 0.5)]    # affinity

    def fn(ts):
        cp = attention.CoAttentionParams(ts[2], ts[3], ts[4])
        return _scalarized(attention.coattention(ts[0], ts[1], cp), p)

    return fn, params


def _case_gate(rng):
    p = _proj(rng, (4, 4, 3))
    params = [_t(rng, (4, 4, 3)),
              _t(rng, (1, 1, 3, 3), -0.5, 0.5),
              _t(rng, (3,), -0.2, 0.2)]

    def fn(ts):
        return _scalarized(attention.gate(ts[0], attention.GateParams(ts[1], ts[2])), p)

    return fn, params


def _case_infonce_loss(rng):
    vecs = [T.parameter(rng.uniform(-1.0, 1.0, 6)) for _ in range(8)]
    feats = []
    roles = [("a", contrastive.FOREGROUND, 0)] + \
            [("p", contrastive.FOREGROUND, i + 1) for i in range(3)] + \
            [("n", contrastive.BACKGROUND, i) for i in range(4)]
    for (kind, pol, fidx), v in zip(roles, vecs):
        feats.append(contrastive.RegionFeature("v0", fidx, pol, v, 0.0))
    batch = contrastive.ContrastiveBatch(feats[0], feats[1:4], feats[4:])

    def fn(ts):
        return contrastive.infonce_loss(batch, tau=0.5)

    return fn, vecs


def _composed_model_case(seed: int):
    """Forward + BCE on a 32x32 frame, checked on 20 parameter coordinates."""
    m = model.SaliencyModel(seed=seed)
    rng = np.random.default_rng(seed)
    frame = rng.uniform(0.0, 1.0, (32, 32, 3))
    target = (rng.uniform(0.0, 1.0, (32, 32)) < 0.3).astype(np.float64)
    inputs = list(m.params.values())

    def fn(ts):
        return ops.bce_loss(m.forward(frame).saliency, target)

    coords = []
    for _ in range(20):
        ti = int(rng.integers(len(inputs)))
        coords.append((ti, int(rng.integers(inputs[ti].data.size))))
    return fn, inputs, coords


_OP_CASES = [
    ("add", _case_add),
    ("sub", _case_sub),
    ("mul", _case_mul),
    ("scale", _case_scale),
    ("matmul", _case_matmul),
    ("matvec", _case_matvec),
    ("dot", _case_dot),
    ("transpose", _case_transpose),
    ("reshape", _case_reshape),
    ("concat", _case_concat),
    ("stack_rows", _case_stack_rows),
    ("sum_all", _case_sum_all),
    ("relu", _case_relu),
    ("sigmoid", _case_sigmoid),
    ("logsumexp", _case_logsumexp),
    ("l2_normalize", _case_l2_normalize),
    ("softmax_rows", _case_softmax_rows),
    ("conv2d", _case_conv2d),
    ("conv2d_stride2", _case_conv2d_strided),
    ("depthwise_conv2d", _case_depthwise_conv2d),
    ("mean_hw", _case_mean_hw),
    ("masked_avg_pool", _case_masked_avg_pool),
    ("bilinear_upsample_x2", _case_bilinear_upsample_x2),
    ("bce_loss", _case_bce_loss),
    ("lightweight_nonlocal", _case_lightweight_nonlocal),
    ("self_attention_block", _case_self_attention_block),
    ("coattention", _case_coattention),
    ("gate", _case_gate),
    ("infonce_loss", _case_infonce_loss),
]

N_POINTS = 5


def run_suite(seed: int = 7, step: float = DEFAULT_STEP) -> list:
    """Check every op at N_POINTS seeded points, then the composed model."""
    rows = []
    for idx, (name, builder) in enumerate(_OP_CASES):
        worst = 0.0
        for point in range(N_POINTS):
            rng = np.random.default_rng([seed, idx, point])
            fn, inputs = builder(rng)
            worst = max(worst, gradient_check(fn, inputs, step=step))
        rows.append(CheckRow(name, N_POINTS, worst, OP_TOL))
    worst = 0.0
    for point in range(N_POINTS):
        fn, inputs, coords = _composed_model_case(seed + point)
        worst = max(worst, gradient_check(fn, inputs, step=step, coords=coords))
    rows.append(CheckRow("composed_model", N_POINTS, worst, COMPOSED_TOL))
    return rows


def format_rows(rows) -> str:
    out = [f"{'op':<24}{'points':>7}{'max_rel_err':>14}{'tol':>10}  status"]
    for r in rows:
        out.append(f"{r.name:<24}{r.points:>7}{r.max_err:>14.3e}{r.tol:>10.1e}  "
                   + ("pass" if r.passed else "FAIL"))
    return "\n".join(out) + "\n"
