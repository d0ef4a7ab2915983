"""Central finite-difference checks of every differentiable component.

Each case builds a scalar function of some leaf tensors. The analytic gradient
from :meth:`Tensor.backward` is compared with ``(f(x+h) - f(x-h)) / 2h`` per
entry. A case reports ``max|a - n| / max(max|a|, max|n|, 1e-8)`` taken over
all compared entries of all its leaves, so parameters whose true gradient is
zero (a conv bias feeding batch norm) are judged against the case's scale
rather than their own rounding noise.
"""
import time
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import losses, nn
from . import tensor as T
from .decoder import CPRN, PredictionHead
from .encoders import RGBStage, TokenAttention
from .fusion import HOCF, HOSF
from .model import HODINet, ModelConfig

STEP = 1e-6
COMPONENT_TOL = 1e-5
END_TO_END_TOL = 1e-4
FLOOR = 1e-8


@dataclass
class CheckResult:
    name: str
    checked: int
    rel_err: float
    tol: float
    seconds: float

    @property
    def ok(self):
        return bool(np.isfinite(self.rel_err) and self.rel_err <= self.tol)


def relative_error(analytic, numeric):
    a = np.ravel(analytic)
    n = np.ravel(numeric)
    scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(n), initial=0.0), FLOOR)
    return float(np.max(np.abs(a - n), initial=0.0) / scale)


def check(fn: Callable[[], T.Tensor], leaves: Sequence[T.Tensor], h=STEP,
          max_entries: Optional[int] = None, rng=None):
    """Relative error over every compared entry, and the number of entries.

    ``max_entries`` caps the entries perturbed per leaf; they are drawn with ``rng``.
    """
    for t in leaves:
        t.requires_grad = True
        t.grad = None
    fn().backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in leaves]
    a_all, n_all = [], []
    with T.no_grad():
        for t, a in zip(leaves, analytic):
            flat = t.data.reshape(-1)
            idx = np.arange(flat.size)
            if max_entries is not None and flat.size > max_entries:
                idx = np.sort(rng.choice(flat.size, max_entries, replace=False))
            num = np.empty(len(idx))
            for j, i in enumerate(idx):
                keep = flat[i]
                flat[i] = keep + h
                fp = fn().item()
                flat[i] = keep - h
                fm = fn().item()
                flat[i] = keep
                num[j] = (fp - fm) / (2.0 * h)
            a_all.append(a.reshape(-1)[idx])
            n_all.append(num)
    a_all, n_all = np.concatenate(a_all), np.concatenate(n_all)
    return relative_error(a_all, n_all), len(a_all)


def _probe(rng, shape):
    """Fixed random weighting so sum(out * w) exercises every output entry."""
    return rng.standard_normal(shape)


def _weighted(out, w):
    return T.reduce_sum(out * w)


def _randn(rng, *shape):
    return T.Tensor(rng.standard_normal(shape))


# -- cases: each returns (fn, leaves) --------------------------------------

def _elementwise(rng):
    a = T.Tensor(rng.uniform(0.5, 2.0, (3, 4)))
    b = T.Tensor(rng.uniform(0.5, 2.0, (4,)))
    w = _probe(rng, (3, 4))

    def fn():
        y = T.exp(a * 0.3) / b + T.log(a + b) - T.sqrt(a) * b ** 1.5
        y = y + T.maximum(a, b) + T.clip(a - 1.0, -0.4, 0.6)
        return _weighted(y, w)
    return fn, [a, b]


def _linear_algebra(rng):
    a = _randn(rng, 2, 3, 4)
    b = _randn(rng, 4, 5)
    c = _randn(rng, 2, 3, 2)
    w = _probe(rng, (2, 7, 7))

    def fn():
        m = T.reshape(T.concat([T.matmul(a, b), c], axis=2), (2, 3, 7))
        return _weighted(T.matmul(T.transpose(m), m), w)
    return fn, [a, b, c]


def _reductions(rng):
    x = _randn(rng, 2, 3, 4)
    w1, w2 = _probe(rng, (2, 1, 4)), _probe(rng, (3, 4))

    def fn():
        return (_weighted(T.reduce_max(x, axis=1, keepdims=True), w1)
                + _weighted(T.reduce_mean(x, axis=0), w2)
                + T.reduce_sum(x * x))
    return fn, [x]


def _normalisers(rng):
    x = _randn(rng, 3, 5)
    w = _probe(rng, (3, 5))

    def fn():
        y = T.softmax(x, axis=-1) + T.l2_normalize(T.signed_sqrt(x), axis=-1)
        return _weighted(y, w)
    return fn, [x]


def _conv(rng):
    x = _randn(rng, 2, 3, 6, 6)
    c1 = nn.Conv2d(3, 4, 3, padding=1)
    c2 = nn.Conv2d(4, 2, 3, stride=2, padding=1)
    nn.init_params(c1, 1)
    nn.init_params(c2, 2)
    c1.bias.data[...] = rng.standard_normal(4)
    w = _probe(rng, (2, 2, 3, 3))
    return (lambda: _weighted(c2(c1(x)), w)), [x, c1.weight, c1.bias, c2.weight, c2.bias]


def _bn(train):
    def case(rng):
        x = T.Tensor(rng.standard_normal((3, 2, 3, 3)) * 2.0 + 0.5)
        bn = nn.BatchNorm2d(2)
        bn.gamma.data[...] = rng.uniform(0.5, 1.5, 2)
        bn.beta.data[...] = rng.standard_normal(2)
        bn.running_mean.data[...] = rng.standard_normal(2)
        bn.running_var.data[...] = rng.uniform(0.5, 2.0, 2)
        bn.train(train)
        w = _probe(rng, x.shape)
        return (lambda: _weighted(bn(x), w)), [x, bn.gamma, bn.beta]
    return case


def _linear(rng):
    x = _randn(rng, 2, 3, 4)
    lin = nn.Linear(4, 5)
    nn.init_params(lin, 3)
    lin.bias.data[...] = rng.standard_normal(5)
    w = _probe(rng, (2, 3, 5))
    return (lambda: _weighted(lin(x), w)), [x, lin.weight, lin.bias]


def _activations(rng):
    x = _randn(rng, 4, 5)
    w = _probe(rng, (4, 5))
    return (lambda: _weighted(nn.relu(x) + nn.sigmoid(2.0 * x), w)), [x]


def _pools(rng):
    x = _randn(rng, 2, 3, 4, 4)
    m = _randn(rng, 2, 3, 3)
    w1, w2 = _probe(rng, (2, 3, 1, 1)), _probe(rng, (2, 3))

    def fn():
        y = _weighted(nn.global_avg_pool(x) * nn.global_max_pool(x), w1)
        return y + _weighted(nn.strided_max_pool(m, "row") - nn.strided_max_pool(m, "col"), w2)
    return fn, [x, m]


def _upsample(rng):
    x = _randn(rng, 1, 2, 3, 4)
    w1, w2 = _probe(rng, (1, 2, 6, 8)), _probe(rng, (1, 2, 7, 5))
    return (lambda: _weighted(nn.upsample(x, scale=2), w1)
            + _weighted(nn.upsample(x, size=(7, 5)), w2)), [x]


def _attention(rng):
    tok = _randn(rng, 2, 5, 4)
    attn = TokenAttention(4)
    nn.init_params(attn, 4)
    w = _probe(rng, (2, 5, 4))
    return (lambda: _weighted(attn(tok), w)), [tok, attn.q.weight, attn.k.weight, attn.v.weight]


def _rgb_stage(rng):
    x = _randn(rng, 2, 3, 8, 8)
    stage = RGBStage(3, 4, 2)
    nn.init_params(stage, 5)
    w = _probe(rng, (2, 4, 4, 4))
    return (lambda: _weighted(stage(x), w)), [x, stage.embed.weight, stage.mlp.fc1.weight]


def _hosf(rng):
    fr, fd = _randn(rng, 2, 3, 4, 4), _randn(rng, 2, 5, 4, 4)
    blk = HOSF(3, 5, 4)
    nn.init_params(blk, 6)
    for conv in (blk.dw_a, blk.dw_b):
        conv.bias.data[...] = 0.1 * rng.standard_normal(4)
    w = _probe(rng, (2, 4, 4, 4))
    leaves = [fr, fd, blk.align.rgb.conv.weight, blk.align.depth.conv.weight,
              blk.dw_a.weight, blk.dw_b.weight, blk.dw_b.bias]
    return (lambda: _weighted(blk(fr, fd), w)), leaves


def _hocf(rng):
    fr, fd = _randn(rng, 2, 3, 2, 2), _randn(rng, 2, 5, 2, 2)
    blk = HOCF(3, 5, 4)
    nn.init_params(blk, 7)
    blk.fc.bias.data[...] = 0.1 * rng.standard_normal(4)
    w = _probe(rng, (2, 4, 2, 2))
    leaves = [fr, fd, blk.align.rgb.conv.weight, blk.align.depth.conv.weight,
              blk.fc.weight, blk.fc.bias]
    return (lambda: _weighted(blk(fr, fd), w)), leaves


def _cprn(rng):
    widths = (3, 4, 5, 6)
    fused = [_randn(rng, 2, c, 16 >> i, 16 >> i) for i, c in enumerate(widths)]
    dec = CPRN(widths, width=4)
    nn.init_params(dec, 8)
    probes = [_probe(rng, (2, 4, 16 >> i, 16 >> i)) for i in range(4)]

    def fn():
        return sum((_weighted(o, p) for o, p in zip(dec(fused), probes)), T.Tensor(0.0))
    leaves = fused + [dec.units[0][0].conv.weight, dec.units[3][1].conv.weight,
                      dec.units[2][0].bn.gamma]
    return fn, leaves


def _head(rng):
    f = _randn(rng, 2, 4, 4, 4)
    head = PredictionHead(4)
    nn.init_params(head, 9)
    w = _probe(rng, (2, 1, 10, 10))
    return (lambda: _weighted(head(f, (10, 10)), w)), [f, head.conv3.weight, head.conv1.weight,
                                                       head.conv1.bias, head.bn.beta]


def _loss(kind):
    def case(rng):
        p = T.Tensor(rng.uniform(0.05, 0.95, (2, 1, 14, 13)))
        g = (rng.uniform(size=p.shape) > 0.5).astype(np.float64)
        f = {"bce": losses.bce_loss, "ssim": losses.ssim_loss, "iou": losses.iou_loss}[kind]
        return (lambda: f(p, g)), [p]
    return case


def _end_to_end(rng, max_entries=6):
    """Total loss of a small full model against every decoder and head parameter."""
    cfg = ModelConfig(input_size=(64, 64), rgb_channels=(4, 8, 8, 16),
                      depth_channels=(4, 8, 8, 16), decoder_width=8,
                      seed=int(rng.integers(1 << 30)))
    model = HODINet(cfg)
    rgb = rng.uniform(size=(2, 3, 64, 64))
    depth = np.repeat(rng.uniform(size=(2, 1, 64, 64)), 3, axis=1)
    g = (rng.uniform(size=(2, 1, 64, 64)) > 0.5).astype(np.float64)
    leaves = model.decoder.parameters() + [p for h in model.heads for p in h.parameters()]
    return (lambda: losses.total_loss(model(rgb, depth), g).total_tensor), leaves, max_entries


CASES = [
    ("elementwise", _elementwise),
    ("matmul_concat", _linear_algebra),
    ("reductions", _reductions),
    ("softmax_l2norm_mo", _normalisers),
    ("conv2d", _conv),
    ("batchnorm_train", _bn(True)),
    ("batchnorm_eval", _bn(False)),
    ("linear", _linear),
    ("relu_sigmoid", _activations),
    ("pools", _pools),
    ("upsample", _upsample),
    ("token_attention", _attention),
    ("rgb_stage", _rgb_stage),
    ("hosf", _hosf),
    ("hocf", _hocf),
    ("cprn", _cprn),
    ("prediction_head", _head),
    ("bce_loss", _loss("bce")),
    ("ssim_loss", _loss("ssim")),
    ("iou_loss", _loss("iou")),
]


def run(seed=0, include_end_to_end=True, names=None) -> List[CheckResult]:
    results = []
    for i, (name, build) in enumerate(CASES):
        if names is not None and name not in names:
            continue
        rng = np.random.default_rng([seed, i])
        t0 = time.perf_counter()
        fn, leaves = build(rng)
        err, n = check(fn, leaves)
        results.append(CheckResult(name, n, err, COMPONENT_TOL, time.perf_counter() - t0))
    if include_end_to_end and (names is None or "end_to_end" in names):
        rng = np.random.default_rng([seed, len(CASES)])
        t0 = time.perf_counter()
        fn, leaves, cap = _end_to_end(rng)
        err, n = check(fn, leaves, max_entries=cap, rng=rng)
        results.append(CheckResult("end_to_end", n, err, END_TO_END_TOL, time.perf_counter() - t0))
    return results


def format_report(results):
    width = max(len(r.name) for r in results)
    lines = [f"{'component':<{width}}  {'entries':>7}  {'max_rel_err':>11}  {'tol':>7}  status"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {r.checked:>7d}  {r.rel_err:>11.3e}  {r.tol:>7.0e}  "
                     f"{'ok' if r.ok else 'FAIL'}")
    return "\n".join(lines)
