import math

import numpy as np
import pytest

from hodinet import oracles
from hodinet import tensor as T
from hodinet.decoder import CPRN, NFE, PredictionHead, SaliencyOutput, predict
from hodinet.errors import DimensionError
from hodinet.nn import init_params
from hodinet.selftest import randomise

from helpers import grad_vs_fd

WIDTHS = (4, 6, 8, 8)
SIZES = [(16, 16), (8, 8), (4, 4), (2, 2)]


def _fused(rng, n=1, widths=WIDTHS):
    return [T.Tensor(rng.standard_normal((n, c) + hw)) for c, hw in zip(widths, SIZES)]


def test_stage_resolutions_and_width(rng):
    dec = init_params(CPRN(WIDTHS, width=5), 0)
    with T.no_grad():
        outs = dec(_fused(rng, n=2))
    assert [o.shape for o in outs] == [(2, 5) + hw for hw in SIZES]


def test_nfe_is_conv_bn_relu(rng):
    unit = randomise(NFE(3, 4), rng)
    x = rng.standard_normal((2, 3, 3, 3))
    p = {"w": unit.conv.weight.data, "b": unit.conv.bias.data,
         "gamma": unit.bn.gamma.data, "beta": unit.bn.beta.data}
    with T.no_grad():
        out = unit(x).data
    assert np.max(np.abs(out - np.array(oracles.conv_bn_relu(x, p)))) <= 1e-12
    assert np.all(out >= 0)


def test_zero_head_gives_half():
    head = PredictionHead(4)
    out = predict(head, T.zeros((2, 4, 2, 2)), (64, 48))
    assert out.shape == (2, 1, 64, 48)
    assert np.all(out.data == 0.5)


def test_head_matches_composition_oracle(rng):
    head = randomise(PredictionHead(3), rng)
    f = rng.standard_normal((1, 3, 2, 2))
    with T.no_grad():
        out = head(f, (8, 8)).data[0, 0]
    y = oracles.conv2d(f, head.conv3.weight.data, head.conv3.bias.data, 1, 1)
    y = oracles.relu(oracles.batchnorm(y, head.bn.gamma.data, head.bn.beta.data))
    logits = oracles.conv2d(y, head.conv1.weight.data, head.conv1.bias.data, 1, 0)
    up = oracles.bilinear_resize(logits[0][0], 8, 8)
    ref = [[1 / (1 + math.exp(-v)) for v in row] for row in up]
    assert np.max(np.abs(out - np.array(ref))) <= 1e-12


def test_every_fused_stage_reaches_p1(rng):
    dec = randomise(CPRN(WIDTHS, width=4), rng)
    head = randomise(PredictionHead(4), rng)
    fused = _fused(rng)
    with T.no_grad():
        base = head(dec(fused)[0], (64, 64)).data
        for i in range(4):
            changed = list(fused)
            changed[i] = T.zeros(fused[i].shape)
            assert not np.allclose(head(dec(changed)[0], (64, 64)).data, base, atol=1e-12), i


def test_without_cascade_deep_stages_are_cut_off(rng):
    dec = randomise(CPRN(WIDTHS, width=4, cascade=False), rng)
    fused = _fused(rng)
    with T.no_grad():
        base = dec(fused)[0].data
        changed = list(fused)
        changed[3] = T.zeros(fused[3].shape)
        assert np.array_equal(dec(changed)[0].data, base)


def test_cascade_gradient_from_top_stage(rng):
    dec = randomise(CPRN((2, 2, 3, 3), width=3), rng)
    fused = [T.Tensor(rng.standard_normal((1, c) + hw)) for c, hw in zip((2, 2, 3, 3), SIZES)]
    w = rng.standard_normal((1, 3, 16, 16))
    err = grad_vs_fd(lambda: T.reduce_sum(dec(fused)[0] * w), [fused[3]])
    assert err <= 1e-5
    fused[3].grad = None
    T.reduce_sum(dec(fused)[0]).backward()
    assert np.any(fused[3].grad != 0)


def test_upsample_mismatch_and_stage_count(rng):
    dec = init_params(CPRN(WIDTHS, width=4), 0)
    bad = _fused(rng)
    bad[2] = T.Tensor(rng.standard_normal((1, 8, 5, 5)))
    with pytest.raises(DimensionError):
        dec(bad)
    with pytest.raises(DimensionError):
        dec(bad[:3])


def test_saliency_output_final_is_p1():
    maps = [T.Tensor(np.full((1, 1, 2, 2), v)) for v in (0.1, 0.2, 0.3, 0.4)]
    out = SaliencyOutput(*maps)
    assert out.final is maps[0] and out.stages() == maps
