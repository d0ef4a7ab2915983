import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from hodinet import nn, oracles
from hodinet import tensor as T
from hodinet.errors import ConfigError, DimensionError
from hodinet.fusion import (HOCF, HOSF, VARIANTS, ConcatFusion, build_fusion, channel_interaction,
                            high_order_channel, high_order_spatial, l2_normalize,
                            moment_normalize, spatial_attention)
from hodinet.selftest import oracle_params, randomise

from helpers import grad_vs_fd

floats = st.floats(-10, 10, allow_nan=False)


def test_moment_normalize_values():
    assert moment_normalize(T.Tensor([4.0, -4.0, 0.0])).data.tolist() == [2.0, -2.0, 0.0]


@given(hnp.arrays(np.float64, (3, 4), elements=floats))
def test_moment_normalize_identity(x):
    # MO(MO(x)) = sign(x) |x|^(1/4): its fourth power is |x|, its eighth power x^2
    y = moment_normalize(moment_normalize(T.Tensor(x))).data
    assert np.allclose(y ** 4, np.abs(x), rtol=1e-12, atol=1e-12)
    assert np.allclose(y ** 8, x ** 2, rtol=1e-12, atol=1e-12)
    assert np.array_equal(np.sign(y), np.sign(x))


def test_l2_normalize_values():
    out = l2_normalize(T.Tensor([[3.0, 4.0], [0.0, 0.0]])).data
    assert np.allclose(out, [[0.6, 0.8], [0.0, 0.0]], atol=1e-12)


@given(hnp.arrays(np.float64, (4, 5), elements=st.floats(-5, 5, allow_nan=False)))
def test_l2_rows_are_unit(m):
    out = l2_normalize(T.Tensor(m)).data
    for row, src in zip(out, m):
        if np.linalg.norm(src) > 1e-3:
            assert abs(np.linalg.norm(row) - 1) <= 1e-9


@given(hnp.arrays(np.float64, (3, 4), elements=st.floats(-5, 5, allow_nan=False)),
       st.floats(1e-3, 1e3))
def test_norm_mo_scale_invariance(m, alpha):
    a = l2_normalize(moment_normalize(T.Tensor(alpha * m))).data
    b = l2_normalize(moment_normalize(T.Tensor(m))).data
    assert np.allclose(a, b, atol=1e-6)


def _hosf_block(rng, ch=4):
    return randomise(HOSF(ch, ch, ch), rng)


@pytest.mark.parametrize("trial", range(5))
def test_hosf_matches_loop_oracle(trial):
    rng = np.random.default_rng(trial)
    blk = _hosf_block(rng)
    fr, fd = rng.standard_normal((1, 4, 4, 4)), rng.standard_normal((1, 4, 4, 4))
    with T.no_grad():
        fast = blk(fr, fd).data
    assert np.max(np.abs(fast - np.array(oracles.hosf(fr, fd, oracle_params(blk))))) <= 1e-9


@pytest.mark.parametrize("trial", range(5))
def test_hocf_matches_loop_oracle(trial):
    rng = np.random.default_rng(100 + trial)
    blk = randomise(HOCF(8, 8, 8), rng)
    fr, fd = rng.standard_normal((1, 8, 2, 2)), rng.standard_normal((1, 8, 2, 2))
    with T.no_grad():
        fast = blk(fr, fd).data
    assert np.max(np.abs(fast - np.array(oracles.hocf(fr, fd, oracle_params(blk))))) <= 1e-9


def test_hocf_col_first_toggle_matches_oracle(rng):
    blk = randomise(HOCF(3, 3, 3, row_first=False), rng)
    fr, fd = rng.standard_normal((1, 3, 2, 2)), rng.standard_normal((1, 3, 2, 2))
    with T.no_grad():
        fast = blk(fr, fd).data
    ref = oracles.hocf(fr, fd, oracle_params(blk), row_first=False)
    assert np.max(np.abs(fast - np.array(ref))) <= 1e-9


def test_zero_depth_gives_zero_attention_and_exact_residual(rng):
    blk = _hosf_block(rng)
    f_rgb = T.Tensor(rng.standard_normal((2, 4, 3, 3)))
    parts = high_order_spatial(f_rgb, T.zeros((2, 4, 3, 3)), blk.dw_a, blk.dw_b)
    assert np.all(parts.attention.data == 0)
    assert np.array_equal(parts.out.data, f_rgb.data)


@pytest.mark.parametrize("s_sign", [1.0, -1.0])
def test_scalar_spatial_case(s_sign):
    r = T.Tensor([[[[1.7]]]])
    d = T.Tensor([[[[0.3 * s_sign]]]])
    att = spatial_attention(r, d).data
    assert np.allclose(att, s_sign * 1.7, atol=1e-12)


def test_depth_weight_in_unit_interval(rng):
    blk = _hosf_block(rng)
    fr, fd = rng.standard_normal((1, 4, 4, 4)), rng.standard_normal((1, 4, 4, 4))
    parts = blk(fr, fd, parts=True)
    assert parts.depth_weight.shape == (1, 4, 1, 1)
    assert np.all((parts.depth_weight.data > 0) & (parts.depth_weight.data < 1))


def test_residual_structure(rng):
    blk = _hosf_block(rng)
    fr, fd = rng.standard_normal((1, 4, 4, 4)), rng.standard_normal((1, 4, 4, 4))
    with T.no_grad():
        parts = blk(fr, fd, parts=True)
        f_rgb, _ = blk.align(fr, fd)
    modulation = parts.attention.data * parts.depth_weight.data
    assert np.array_equal(parts.out.data - f_rgb.data, (modulation + f_rgb.data) - f_rgb.data)


def test_outer_product_identity_exact(rng):
    a, b = rng.standard_normal((2, 5)), rng.standard_normal((2, 5))
    m = channel_interaction(T.Tensor(a), T.Tensor(b)).data
    for n in range(2):
        for j in range(5):
            for k in range(5):
                assert m[n, j, k] == a[n, j] * b[n, k]


def test_one_hot_channel_case():
    fc = nn.Linear(6, 3)
    fc.weight.data[...] = np.eye(6)[:3] + np.eye(6)[3:]  # weight[o] picks row_max[o] + col_max[o]
    e = np.zeros((1, 3, 1, 1))
    f_rgb, f_depth = e.copy(), e.copy()
    f_rgb[0, 0] = 1.0  # a_rgb = e_0
    f_depth[0, 2] = 2.0  # a_depth = 2 e_2
    parts = high_order_channel(T.Tensor(f_rgb), T.Tensor(f_depth), fc)
    inter = parts.interaction.data[0]
    assert inter[0, 2] == 2.0 and np.count_nonzero(inter) == 1
    # row max = [2, 0, 0], col max = [0, 0, 2]; weights = sigmoid([2, 0, 2])
    expected = 1 / (1 + np.exp(-np.array([2.0, 0.0, 2.0])))
    assert np.allclose(parts.weights.data[0], expected, atol=1e-15)


def test_channel_limit_to_rgb(rng):
    blk = randomise(HOCF(8, 8, 8), rng)
    blk.fc.weight.data[...] = 0.0
    blk.fc.bias.data[...] = -30.0
    fr, fd = rng.standard_normal((1, 8, 2, 2)), rng.standard_normal((1, 8, 2, 2))
    with T.no_grad():
        out = blk(fr, fd).data
        f_rgb, _ = blk.align(fr, fd)
    assert np.max(np.abs(out - f_rgb.data)) <= 1e-6


def test_channel_weights_in_unit_interval(rng):
    blk = randomise(HOCF(4, 6, 5), rng)
    parts = blk(rng.standard_normal((2, 4, 2, 2)), rng.standard_normal((2, 6, 2, 2)), parts=True)
    assert np.all((parts.weights.data > 0) & (parts.weights.data < 1))
    assert parts.out.shape == (2, 5, 2, 2)


def test_errors(rng):
    with pytest.raises(DimensionError):
        HOSF(4, 4, 4)(rng.standard_normal((1, 4, 4, 4)), rng.standard_normal((1, 4, 2, 2)))
    with pytest.raises(ConfigError):
        high_order_channel(T.zeros((1, 4, 2, 2)), T.zeros((1, 4, 2, 2)), nn.Linear(6, 4))


@pytest.mark.parametrize("kind", ["hosf", "hocf"])
def test_fusion_gradients(kind, rng):
    blk = randomise(build_fusion(kind, 4, 4, 4), rng)
    fr = T.Tensor(rng.standard_normal((1, 4, 4, 4)))
    fd = T.Tensor(rng.standard_normal((1, 4, 4, 4)))
    w = rng.standard_normal((1, 4, 4, 4))
    leaves = [fr, fd] + blk.parameters()
    assert grad_vs_fd(lambda: T.reduce_sum(blk(fr, fd) * w), leaves) <= 1e-5


def test_concat_baseline_and_variants(rng):
    blk = ConcatFusion(3, 5, 4)
    out = blk(rng.standard_normal((1, 3, 2, 2)), rng.standard_normal((1, 5, 2, 2)))
    assert out.shape == (1, 8, 2, 2) and blk.width == 8
    assert VARIANTS["full"] == ("hosf", "hosf", "hocf", "hocf")
    assert set(VARIANTS) >= {"full", "no_hosf", "no_hocf", "swapped"}
