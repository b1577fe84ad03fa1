"""Non-local reordering, dynamic filters, co-attention, gating, FLOP counts."""

import numpy as np
import pytest

from salattn import tensor as T
from salattn.attention import (CoAttentionParams, DynamicFilterGenerator,
                               GateParams, coattention, count_flops, gate,
                               lightweight_nonlocal, naive_nonlocal_reference,
                               nonlocal_reordered, nonlocal_unordered,
                               self_attention_block)
from salattn.tensor import GradTape, ShapeError


def conv_ref(x, k, b, stride):
    h, w, cin = x.shape
    kh, kw, _, cout = k.shape
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    oh = (h + 2 * ph - kh) // stride + 1
    ow = (w + 2 * pw - kw) // stride + 1
    xp = np.pad(x, ((ph, ph), (pw, pw), (0, 0)))
    out = np.zeros((oh, ow, cout))
    for oi in range(oh):
        for oj in range(ow):
            patch = xp[oi * stride:oi * stride + kh, oj * stride:oj * stride + kw, :]
            out[oi, oj] = np.tensordot(patch, k, axes=([0, 1, 2], [0, 1, 2]))
    return out + b


# ---------------------------------------------------------------------------
# FLOP counting


def test_count_flops_paper_shape():
    assert count_flops("naive", 16, 16, 32) == 4_194_304
    assert count_flops("lightweight_reordered", 16, 16, 32) == 524_288
    assert count_flops("naive", 16, 16, 32) // count_flops("reordered", 16, 16, 32) == 8


def test_count_flops_equal_when_n_equals_c():
    assert count_flops("naive", 4, 8, 32) == count_flops("lightweight_reordered", 4, 8, 32)


def test_count_flops_degenerate():
    assert count_flops("naive", 1, 1, 1) == 2
    assert count_flops("lightweight_reordered", 1, 1, 1) == 2
    assert count_flops("lightweight_unordered", 1, 1, 1) == 2


def test_count_flops_ratio_is_n_over_c():
    rng = np.random.default_rng(101)
    for _ in range(10):
        h, w, c = rng.integers(1, 20, size=3)
        naive = count_flops("naive", h, w, c)
        fast = count_flops("lightweight_reordered", h, w, c)
        assert naive * c == fast * h * w  # ratio N/c without integer division
    assert count_flops("unordered", 3, 3, 2) == count_flops("naive", 3, 3, 2)
    with pytest.raises(ValueError):
        count_flops("blockwise", 2, 2, 2)


# ---------------------------------------------------------------------------
# non-local block


def test_nonlocal_zeros():
    out = lightweight_nonlocal(T.constant(np.zeros((3, 4, 2)))).data
    assert np.array_equal(out, np.zeros((3, 4, 2)))


def test_nonlocal_single_hot_position():
    # x = [2,0,0,0] on a 2x2 grid, c=1: y_0 = (x_0.x_0) x_0 / 4 = 8/4 = 2
    x = np.array([[[2.0], [0.0]], [[0.0], [0.0]]])
    out = lightweight_nonlocal(T.constant(x)).data
    assert np.max(np.abs(out - x)) <= 1e-15
    assert np.max(np.abs(naive_nonlocal_reference(x) - x)) <= 1e-15


def test_nonlocal_n_equals_one():
    x = np.array([[[3.0, -4.0]]])
    out = naive_nonlocal_reference(x)
    assert np.max(np.abs(out - 25.0 * x)) <= 1e-12
    fast = lightweight_nonlocal(T.constant(x)).data
    assert np.max(np.abs(fast - out)) <= 1e-12


def test_nonlocal_ten_random_tensors_match_reference():
    rng = np.random.default_rng(107)
    for _ in range(10):
        h, w, c = rng.integers(1, 9, size=3)
        x = rng.standard_normal((h, w, c))
        fast = lightweight_nonlocal(T.constant(x)).data
        assert np.max(np.abs(fast - naive_nonlocal_reference(x))) <= 1e-10


def test_nonlocal_array_variants_agree():
    rng = np.random.default_rng(109)
    x = rng.standard_normal((8, 8, 8))
    a = nonlocal_reordered(x)
    b = nonlocal_unordered(x)
    assert np.max(np.abs(a - b)) <= 1e-10
    assert np.max(np.abs(a - naive_nonlocal_reference(x))) <= 1e-10


# ---------------------------------------------------------------------------
# dynamic filters and the self-attention block


def make_generator(rng, c, scale=0.3):
    return DynamicFilterGenerator(T.parameter(rng.standard_normal((c, 9 * c)) * scale))


def test_generator_shapes_and_zero_input():
    rng = np.random.default_rng(113)
    gen = make_generator(rng, 4)
    f = gen.filters(T.constant(np.zeros(4)))
    assert f.shape == (3, 3, 4)
    assert np.array_equal(f.data, np.zeros((3, 3, 4)))
    with pytest.raises(ShapeError):
        DynamicFilterGenerator(T.parameter(np.zeros((4, 8))))
    with pytest.raises(ShapeError):
        gen.filters(T.constant(np.zeros(5)))


def test_self_attention_zero_input():
    rng = np.random.default_rng(127)
    gen = make_generator(rng, 3)
    out = self_attention_block(T.constant(np.zeros((4, 4, 3))), gen)
    assert np.array_equal(out.data, np.zeros((4, 4, 3)))


def test_self_attention_residual_identity():
    rng = np.random.default_rng(131)
    x = rng.standard_normal((5, 5, 4))
    gen = DynamicFilterGenerator(T.parameter(np.zeros((4, 36))))
    out = self_attention_block(T.constant(x), gen)
    assert np.max(np.abs(out.data - x)) == 0.0


def test_self_attention_forward_composition():
    rng = np.random.default_rng(137)
    x = rng.standard_normal((4, 4, 3)) * 0.5
    gen = make_generator(rng, 3)
    out = self_attention_block(T.constant(x), gen).data
    pooled = x.mean(axis=(0, 1))
    fbank = (gen.weight.data.T @ pooled).reshape(3, 3, 3)
    y = naive_nonlocal_reference(x)
    yp = np.pad(y, ((1, 1), (1, 1), (0, 0)))
    ref = x.copy()
    for oi in range(4):
        for oj in range(4):
            for ch in range(3):
                ref[oi, oj, ch] += np.sum(yp[oi:oi + 3, oj:oj + 3, ch] * fbank[:, :, ch])
    assert np.max(np.abs(out - ref)) <= 1e-12


def test_self_attention_gradient_through_filter_path():
    """Directional finite difference on the generator weight."""
    rng = np.random.default_rng(139)
    x = T.constant(rng.standard_normal((4, 4, 4)) * 0.5)
    gen = make_generator(rng, 4)
    with GradTape() as tape:
        loss = T.sum_all(self_attention_block(x, gen))
    (gw,) = tape.gradient(loss, [gen.weight])
    assert np.any(gw != 0.0)
    d = rng.standard_normal(gw.shape)
    h = 1e-6
    base = gen.weight.data.copy()

    def value(w):
        gen.weight.data = w
        return T.sum_all(self_attention_block(x, gen)).item()

    fd = (value(base + h * d) - value(base - h * d)) / (2 * h)
    gen.weight.data = base
    assert abs(fd - np.sum(gw * d)) <= 1e-6 * max(1.0, abs(fd))


# ---------------------------------------------------------------------------
# co-attention


def make_coattention(rng, cv, c, zero_affinity=False):
    return CoAttentionParams(
        resize_kernel=T.parameter(rng.standard_normal((3, 3, cv, c)) * 0.4),
        resize_bias=T.parameter(rng.standard_normal(c) * 0.1),
        affinity=T.parameter(np.zeros((c, c)) if zero_affinity
                             else rng.standard_normal((c, c)) * 0.5),
    )


def test_coattention_zero_affinity_gives_spatial_mean():
    rng = np.random.default_rng(149)
    x = rng.standard_normal((3, 3, 2))
    v = rng.standard_normal((3, 3, 2))
    params = make_coattention(rng, 2, 2, zero_affinity=True)
    out = coattention(T.constant(v), T.constant(x), params).data
    mean = x.reshape(9, 2).mean(axis=0)
    assert np.max(np.abs(out - mean)) <= 1e-12


def test_coattention_single_position_passthrough():
    rng = np.random.default_rng(151)
    x = rng.standard_normal((1, 1, 3))
    v = rng.standard_normal((2, 2, 2))
    params = make_coattention(rng, 2, 3)
    out = coattention(T.constant(v), T.constant(x), params).data
    assert np.max(np.abs(out - x)) <= 1e-15


def test_coattention_triple_loop_oracle():
    rng = np.random.default_rng(157)
    x = rng.standard_normal((3, 3, 2))
    v = rng.standard_normal((3, 3, 2))
    params = make_coattention(rng, 2, 2)
    out = coattention(T.constant(v), T.constant(x), params).data

    vres = conv_ref(v, params.resize_kernel.data, params.resize_bias.data, 1)
    vf, xf = vres.reshape(9, 2), x.reshape(9, 2)
    w = params.affinity.data
    aff = np.zeros((9, 9))
    for i in range(9):
        for j in range(9):
            for a in range(2):
                for b in range(2):
                    aff[i, j] += vf[i, a] * w[a, b] * xf[j, b]
    e = np.exp(aff - aff.max(axis=1, keepdims=True))
    s = e / e.sum(axis=1, keepdims=True)
    ref = np.zeros((9, 2))
    for i in range(9):
        for j in range(9):
            ref[i] += s[i, j] * xf[j]
    assert np.max(np.abs(out - ref.reshape(3, 3, 2))) <= 1e-12


def test_coattention_convex_hull_property():
    rng = np.random.default_rng(163)
    for _ in range(5):
        x = rng.standard_normal((4, 4, 3)) * 2.0
        v = rng.standard_normal((8, 8, 2))
        params = make_coattention(rng, 2, 3)
        out = coattention(T.constant(v), T.constant(x), params).data.reshape(16, 3)
        lo = x.reshape(16, 3).min(axis=0)
        hi = x.reshape(16, 3).max(axis=0)
        assert np.all(out >= lo - 1e-12)
        assert np.all(out <= hi + 1e-12)


def test_coattention_rejects_incompatible_grids():
    rng = np.random.default_rng(167)
    params = make_coattention(rng, 2, 2)
    x = T.constant(rng.standard_normal((2, 2, 2)))
    with pytest.raises(ShapeError):
        coattention(T.constant(rng.standard_normal((5, 5, 2))), x, params)
    with pytest.raises(ShapeError):
        coattention(T.constant(rng.standard_normal((4, 6, 2))), x, params)


# ---------------------------------------------------------------------------
# gating


def test_gate_zero_params_halves():
    rng = np.random.default_rng(173)
    z = rng.standard_normal((4, 4, 3))
    params = GateParams(T.parameter(np.zeros((1, 1, 3, 3))), T.parameter(np.zeros(3)))
    out = gate(T.constant(z), params).data
    assert np.max(np.abs(out - 0.5 * z)) <= 1e-15


def test_gate_saturated_bias_passes_through():
    rng = np.random.default_rng(179)
    z = rng.standard_normal((3, 3, 2))
    params = GateParams(T.parameter(np.zeros((1, 1, 2, 2))), T.parameter(np.full(2, 40.0)))
    out = gate(T.constant(z), params).data
    assert np.max(np.abs(out - z)) <= 1e-12


def test_gate_per_element_formula_oracle():
    rng = np.random.default_rng(181)
    z = rng.standard_normal((4, 4, 3))
    w = rng.standard_normal((1, 1, 3, 3)) * 0.7
    b = rng.standard_normal(3)
    params = GateParams(T.parameter(w), T.parameter(b))
    out = gate(T.constant(z), params).data
    ref = np.zeros_like(z)
    for i in range(4):
        for j in range(4):
            pre = z[i, j, :] @ w[0, 0] + b
            ref[i, j, :] = z[i, j, :] / (1.0 + np.exp(-pre))
    assert np.max(np.abs(out - ref)) <= 1e-13


def test_gate_never_amplifies():
    rng = np.random.default_rng(191)
    for _ in range(5):
        z = rng.standard_normal((3, 5, 4)) * 3.0
        params = GateParams(T.parameter(rng.standard_normal((1, 1, 4, 4))),
                            T.parameter(rng.standard_normal(4)))
        out = gate(T.constant(z), params).data
        assert np.all(np.abs(out) <= np.abs(z))
    with pytest.raises(ShapeError):
        GateParams(T.parameter(np.zeros((3, 3, 2, 2))), T.parameter(np.zeros(2)))
