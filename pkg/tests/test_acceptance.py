"""Acceptance criteria 1-9. Each test records a PASS/FAIL line shown in the terminal summary."""
import functools
import time

import numpy as np
import pytest

from hodinet import HODINet, ModelConfig, checkpoint, gradcheck, metrics, oracles
from hodinet import tensor as T
from hodinet.fusion import HOCF, HOSF, high_order_spatial
from hodinet.losses import bce_loss, iou_loss, ssim_loss
from hodinet.selftest import oracle_params, randomise
from hodinet.train import predict_final, synthetic_corpus, train

from helpers import verdict

TOY = dict(rgb_channels=(16, 32, 64, 128), depth_channels=(16, 32, 64, 128), decoder_width=32)
OVERFIT_SEEDS = (0, 1, 2)
ABLATION_SEEDS = (0, 1, 2, 3, 4)
STEPS_PER_EPOCH, EPOCHS = 50, 6


@functools.lru_cache(maxsize=None)
def toy_run(variant, seed):
    """300 Adam steps on the four-image corpus; cached because criteria 7 and 8 share runs."""
    corpus = synthetic_corpus()
    model = HODINet(ModelConfig(variant=variant, seed=seed, **TOY))
    t0 = time.perf_counter()
    hist = train(model, corpus, lr=1e-4, lr_decay=0.9, epochs=EPOCHS,
                 steps_per_epoch=STEPS_PER_EPOCH, batch_size=4, seed=seed)
    p1 = predict_final(model, corpus.rgb, corpus.depth).p1.data
    mae = float(np.mean([metrics.mae(p1[i, 0], corpus.gt[i, 0]) for i in range(len(corpus))]))
    return {"initial": hist.initial, "final": hist.final, "mae": mae,
            "seconds": time.perf_counter() - t0}


def test_criterion_1_gradient_suite():
    t0 = time.perf_counter()
    results = gradcheck.run(seed=0)
    elapsed = time.perf_counter() - t0
    comp = [r for r in results if r.tol == gradcheck.COMPONENT_TOL]
    e2e = [r for r in results if r.tol == gradcheck.END_TO_END_TOL]
    worst_c = max(r.rel_err for r in comp)
    worst_e = max(r.rel_err for r in e2e)
    ok = (all(r.rel_err <= 1e-5 for r in comp) and all(r.rel_err <= 1e-4 for r in e2e)
          and len(comp) >= 10 and elapsed < 120)
    verdict(1, ok, f"{len(comp)} components worst {worst_c:.1e}, end-to-end {worst_e:.1e}, "
                   f"{elapsed:.1f}s")


def test_criterion_2_fusion_oracles():
    worst = {"hosf": 0.0, "hocf": 0.0}
    for case in range(20):
        rng = np.random.default_rng(case)
        for kind, shape, block in (("hosf", (1, 4, 4, 4), HOSF(4, 4, 4)),
                                   ("hocf", (1, 8, 2, 2), HOCF(8, 8, 8))):
            randomise(block, rng)
            fr, fd = rng.standard_normal(shape), rng.standard_normal(shape)
            with T.no_grad():
                fast = block(fr, fd).data
            ref = np.array(getattr(oracles, kind)(fr, fd, oracle_params(block)))
            worst[kind] = max(worst[kind], float(np.max(np.abs(fast - ref))))
    ok = max(worst.values()) <= 1e-9
    verdict(2, ok, f"20 cases each, max |diff| hosf {worst['hosf']:.1e} hocf {worst['hocf']:.1e}")


def test_criterion_3_residual_identities():
    rng = np.random.default_rng(3)
    blk = randomise(HOSF(4, 4, 4), rng)
    f_rgb = T.Tensor(rng.standard_normal((2, 4, 4, 4)))
    direct = high_order_spatial(f_rgb, T.zeros(f_rgb.shape), blk.dw_a, blk.dw_b).out
    # through the whole block: a depth alignment whose BN emits a negative constant is zeroed by ReLU
    blk.align.depth.bn.gamma.data[...] = 0.0
    blk.align.depth.bn.beta.data[...] = -1.0
    fr, fd = rng.standard_normal((2, 4, 4, 4)), rng.standard_normal((2, 4, 4, 4))
    with T.no_grad():
        parts = blk(fr, fd, parts=True)
        aligned, _ = blk.align(fr, fd)
    spatial_ok = (np.array_equal(direct.data, f_rgb.data)
                  and np.all(parts.attention.data == 0)
                  and np.array_equal(parts.out.data, aligned.data))
    hocf = randomise(HOCF(8, 8, 8), rng)
    hocf.fc.bias.data[...] = -30.0
    hocf.fc.weight.data[...] = 0.0
    fr, fd = rng.standard_normal((1, 8, 2, 2)), rng.standard_normal((1, 8, 2, 2))
    with T.no_grad():
        dev = float(np.max(np.abs(hocf(fr, fd).data - hocf.align(fr, fd)[0].data)))
    verdict(3, spatial_ok and dev <= 1e-6,
            f"HOSF bitwise residual {spatial_ok}, HOCF max deviation at bias -30 {dev:.1e}")


def test_criterion_4_shape_contract():
    problems = []
    for size in (64, 96, 256):
        model = HODINet(ModelConfig(input_size=(size, size), **TOY))
        rng = np.random.default_rng(size)
        rgb, depth = rng.uniform(size=(1, 3, size, size)), rng.uniform(size=(1, 3, size, size))
        with T.no_grad():
            f_rgb, f_depth = model.encode(rgb, depth)
            out = model(rgb, depth)
        for stride, fr, fd in zip((4, 8, 16, 32), f_rgb, f_depth):
            if fr.shape[2:] != (size // stride,) * 2 or fd.shape[2:] != (size // stride,) * 2:
                problems.append(f"{size}: stride {stride} gave {fr.shape[2:]}/{fd.shape[2:]}")
        for i, p in enumerate(out.stages(), 1):
            if p.shape != (1, 1, size, size):
                problems.append(f"{size}: P{i} shape {p.shape}")
            if not np.all((p.data > 0) & (p.data < 1)):
                problems.append(f"{size}: P{i} leaves (0, 1)")
    verdict(4, not problems, "; ".join(problems) or "sizes 64/96/256, strides 4/8/16/32, P1..P4 in (0,1)")


def test_criterion_5_loss_bounds():
    bad = []
    for trial in range(100):
        rng = np.random.default_rng(trial)
        side = int(rng.choice([4, 8, 16]))
        p = rng.uniform(size=(1, 1, side, side))
        g = (rng.uniform(size=p.shape) > 0.5).astype(float)
        b, s, u = bce_loss(p, g).item(), ssim_loss(p, g).item(), iou_loss(p, g).item()
        if not (b >= 0 and 0 <= s <= 2 and 0 <= u <= 1):
            bad.append(trial)
    rng = np.random.default_rng(5)
    g = (rng.uniform(size=(1, 1, 16, 16)) > 0.5).astype(float)
    perfect = [bce_loss(g, g).item() / g.size, ssim_loss(g, g).item(), iou_loss(g, g).item()]
    p = rng.uniform(size=g.shape)
    sym = abs(ssim_loss(p, g).item() - ssim_loss(g, p).item())
    ok = not bad and max(abs(v) for v in perfect) <= 1e-5 and sym <= 1e-12
    verdict(5, ok, f"bound violations {len(bad)}/100, perfect (bce/px, ssim, iou) "
                   f"{perfect[0]:.1e} {perfect[1]:.1e} {perfect[2]:.1e}, ssim asymmetry {sym:.1e}")


def test_criterion_6_metrics():
    pairs = [(metrics.mae, oracles.mae), (metrics.s_measure, oracles.s_measure),
             (metrics.f_measure_max, oracles.f_measure_max),
             (metrics.e_measure_max, oracles.e_measure_max)]
    worst = 0.0
    for case in range(50):
        rng = np.random.default_rng(600 + case)
        p = rng.uniform(size=(8, 8))
        g = (rng.uniform(size=(8, 8)) < rng.uniform(0.2, 0.8)).astype(float)
        for fast, slow in pairs:
            worst = max(worst, abs(fast(p, g) - slow(p, g)))
    g = np.zeros((8, 8))
    g[2:6, 1:5] = 1
    scores = [fast(g, g) for fast, _ in pairs]
    perfect_ok = np.allclose(scores, [0, 1, 1, 1], atol=1e-6)
    verdict(6, worst <= 1e-9 and perfect_ok,
            f"50 pairs max |fast - oracle| {worst:.1e}, perfect scores {np.round(scores, 8).tolist()}")


@pytest.mark.slow
def test_criterion_7_toy_overfit():
    runs = {s: toy_run("full", s) for s in OVERFIT_SEEDS}
    lines, ok = [], True
    for s, r in runs.items():
        ratio = r["final"] / r["initial"]
        passed = ratio < 0.25 and r["mae"] < 0.05 and r["seconds"] < 600
        ok &= passed
        lines.append(f"seed {s}: ratio {ratio:.3f} P1 MAE {r['mae']:.3f} {r['seconds']:.0f}s")
    verdict(7, ok, "; ".join(lines))


@pytest.mark.slow
def test_criterion_8_ablation_direction():
    means = {v: float(np.mean([toy_run(v, s)["final"] for s in ABLATION_SEEDS]))
             for v in ("full", "no_hosf", "no_hocf")}
    ok = means["full"] <= means["no_hosf"] and means["full"] <= means["no_hocf"]
    verdict(8, ok, "mean final loss over 5 seeds: " +
            ", ".join(f"{k} {v:.1f}" for k, v in means.items()))


def test_criterion_9_determinism(tmp_path):
    cfg = ModelConfig(input_size=(32, 32), rgb_channels=(4, 8, 8, 8), depth_channels=(4, 8, 8, 8),
                      decoder_width=8, seed=7)
    corpus = synthetic_corpus(32, sides=(8, 12, 16, 20))
    blobs, preds = [], []
    for k in range(2):
        model = HODINet(cfg)
        train(model, corpus, epochs=2, steps_per_epoch=3, seed=7)
        path = tmp_path / f"run{k}.ckpt"
        checkpoint.save(path, model, cfg.to_dict())
        blobs.append(path.read_bytes())
        preds.append(predict_final(model, corpus.rgb, corpus.depth).p1.data)
    same_ckpt = blobs[0] == blobs[1]
    same_pred = np.array_equal(preds[0], preds[1])
    cfg_back, state = checkpoint.load(tmp_path / "run0.ckpt")
    reloaded = HODINet(ModelConfig(**{**cfg_back, "seed": 99}))
    reloaded.load_state_dict(state)
    checkpoint.save(tmp_path / "again.ckpt", reloaded, cfg_back)
    round_trip = (tmp_path / "again.ckpt").read_bytes() == blobs[0]
    verdict(9, same_ckpt and same_pred and round_trip,
            f"identical checkpoints {same_ckpt}, identical P1 {same_pred}, byte round trip {round_trip}")
