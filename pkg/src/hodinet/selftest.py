"""Invariant checks that ship with the package and back the ``selftest`` command."""
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint, gradcheck, losses, metrics, nn, oracles, pnm
from . import tensor as T
from .fusion import HOCF, HOSF, high_order_spatial
from .model import HODINet, ModelConfig


@dataclass
class Outcome:
    name: str
    ok: bool
    detail: str
    seconds: float = 0.0


def _cbr_params(unit):
    return {
        "w": unit.conv.weight.data, "b": unit.conv.bias.data,
        "gamma": unit.bn.gamma.data, "beta": unit.bn.beta.data,
        "mean": unit.bn.running_mean.data, "var": unit.bn.running_var.data,
    }


def oracle_params(block):
    """Export a fusion block's weights in the layout the loop oracles expect."""
    p = {"rgb": _cbr_params(block.align.rgb), "depth": _cbr_params(block.align.depth)}
    if isinstance(block, HOSF):
        p["dw_a"] = (block.dw_a.weight.data, block.dw_a.bias.data)
        p["dw_b"] = (block.dw_b.weight.data, block.dw_b.bias.data)
    else:
        p["fc"] = (block.fc.weight.data, block.fc.bias.data)
    return p


def randomise(module, rng, scale=0.3):
    """Give every parameter generic values, including biases and BN affine terms."""
    for t in module.parameters():
        t.data[...] = rng.normal(0.0, scale, t.shape)
    for m in module.modules():
        if isinstance(m, nn.BatchNorm2d):
            m.gamma.data[...] = rng.uniform(0.5, 1.5, m.gamma.shape)
    return module


def fusion_oracle_error(kind, rng):
    if kind == "hosf":
        shape, block = (1, 4, 4, 4), HOSF(4, 4, 4)
    else:
        shape, block = (1, 8, 2, 2), HOCF(8, 8, 8)
    randomise(block, rng)
    fr, fd = rng.standard_normal(shape), rng.standard_normal(shape)
    with T.no_grad():
        fast = block(fr, fd).data
    ref = getattr(oracles, kind)(fr, fd, oracle_params(block))
    return float(np.max(np.abs(fast - np.array(ref))))


def _check_oracles(rng):
    errs = [fusion_oracle_error(k, rng) for k in ("hosf", "hocf") for _ in range(5)]
    worst = max(errs)
    return worst <= 1e-9, f"max |fast - loop oracle| = {worst:.2e}"


def _check_residuals(rng):
    f_rgb = T.Tensor(rng.standard_normal((1, 4, 4, 4)))
    blk = randomise(HOSF(4, 4, 4), rng)
    out = high_order_spatial(f_rgb, T.zeros((1, 4, 4, 4)), blk.dw_a, blk.dw_b).out
    spatial_exact = np.array_equal(out.data, f_rgb.data)
    hocf = randomise(HOCF(8, 8, 8), rng)
    hocf.fc.weight.data[...] = 0.0
    hocf.fc.bias.data[...] = -30.0
    fr, fd = rng.standard_normal((1, 8, 2, 2)), rng.standard_normal((1, 8, 2, 2))
    with T.no_grad():
        res = hocf(fr, fd, parts=True)
        aligned = hocf.align(fr, fd)[0].data
    dev = float(np.max(np.abs(res.out.data - aligned)))
    return spatial_exact and dev <= 1e-6, f"spatial exact={spatial_exact}, channel dev={dev:.2e}"


def _check_shapes(rng):
    model = HODINet(ModelConfig(input_size=(64, 64)))
    with T.no_grad():
        out = model(rng.uniform(size=(1, 3, 64, 64)), rng.uniform(size=(1, 3, 64, 64)))
    ok = all(p.shape == (1, 1, 64, 64) and p.data.min() > 0 and p.data.max() < 1
             for p in out.stages())
    return ok, "four maps at 64x64 in (0,1)" if ok else "bad output shapes or range"


def _check_losses(rng):
    bad = []
    for _ in range(20):
        p = rng.uniform(size=(1, 1, 16, 16))
        g = (rng.uniform(size=p.shape) > 0.5).astype(float)
        b = losses.bce_loss(p, g).item()
        s = losses.ssim_loss(p, g).item()
        i = losses.iou_loss(p, g).item()
        if not (b >= 0 and 0 <= s <= 2 and 0 <= i <= 1):
            bad.append((b, s, i))
    g = (rng.uniform(size=(1, 1, 16, 16)) > 0.5).astype(float)
    # summed BCE is bounded per pixel
    perfect = max(losses.bce_loss(g, g).item() / g.size,
                  losses.ssim_loss(g, g).item(), losses.iou_loss(g, g).item())
    return not bad and perfect <= 1e-5, f"{len(bad)} out of bounds, perfect-case max {perfect:.1e}"


def _check_metrics(rng):
    worst = 0.0
    for _ in range(10):
        p = rng.uniform(size=(8, 8))
        g = (rng.uniform(size=(8, 8)) > 0.5).astype(float)
        fast = [metrics.mae(p, g), metrics.s_measure(p, g),
                metrics.f_measure_max(p, g), metrics.e_measure_max(p, g)]
        ref = [oracles.mae(p, g), oracles.s_measure(p, g),
               oracles.f_measure_max(p, g), oracles.e_measure_max(p, g)]
        worst = max(worst, max(abs(a - b) for a, b in zip(fast, ref)))
    return worst <= 1e-9, f"max |fast - oracle| = {worst:.2e}"


def _check_persistence(rng):
    cfg = ModelConfig(input_size=(32, 32), rgb_channels=(4, 8, 8, 16),
                      depth_channels=(4, 8, 8, 16), decoder_width=8, seed=3)
    a = checkpoint.dumps(HODINet(cfg).state_dict(), cfg.to_dict())
    b = checkpoint.dumps(HODINet(cfg).state_dict(), cfg.to_dict())
    model = HODINet(cfg)
    model.load_state_dict(checkpoint.loads(a)[1])
    c = checkpoint.dumps(model.state_dict(), cfg.to_dict())
    p = rng.uniform(size=(9, 7))
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "p.pgm"
        pnm.save_saliency(p, path)
        err = float(np.max(np.abs(pnm.read(path) / 255.0 - p)))
    ok = a == b == c and err <= 0.5 / 255
    return ok, f"checkpoint stable={a == b == c}, pgm error={err:.4f}"


def _check_gradients(seed):
    results = gradcheck.run(seed)
    failed = [r.name for r in results if not r.ok]
    worst = max(r.rel_err for r in results)
    return not failed, f"{len(results)} components, worst {worst:.1e}" + (
        f", failed: {', '.join(failed)}" if failed else "")


def run(seed=0):
    rng = np.random.default_rng(seed)
    checks = [
        ("fusion_oracles", lambda: _check_oracles(rng)),
        ("residual_identities", lambda: _check_residuals(rng)),
        ("shape_contract", lambda: _check_shapes(rng)),
        ("loss_bounds", lambda: _check_losses(rng)),
        ("metric_oracles", lambda: _check_metrics(rng)),
        ("persistence", lambda: _check_persistence(rng)),
        ("gradients", lambda: _check_gradients(seed)),
    ]
    outcomes = []
    for name, fn in checks:
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # report and keep going
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        outcomes.append(Outcome(name, bool(ok), detail, time.perf_counter() - t0))
    return outcomes
