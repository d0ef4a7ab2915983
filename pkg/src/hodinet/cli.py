"""Command-line front end: infer, train-toy, eval, gradcheck, selftest, synth-corpus."""
import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint, gradcheck, kernels, pnm, selftest
from . import tensor as T
from .config import RunConfig
from .errors import ConfigError, HodinetError
from .metrics import METRIC_NAMES, EvalReport
from .model import HODINet
from .train import load_corpus, synthetic_corpus, train, write_corpus

log = logging.getLogger("hodinet")


def build_model(cfg: RunConfig, ckpt_path=None):
    model = HODINet(cfg.model_config())
    path = ckpt_path or cfg.checkpoint
    if path:
        _, state = checkpoint.load(path)
        model.load_state_dict(state)
    return model


# -- infer -----------------------------------------------------------------

def infer(cfg: RunConfig, rgb_path, depth_path, out_path, all_stages=False, ckpt_path=None):
    """Write P1 (and optionally P2..P4) at the original RGB image size."""
    rgb_raw = pnm.read(rgb_path)
    orig = rgb_raw.shape[:2]
    rgb = pnm.load_image(rgb_path, "rgb", cfg.input_size)
    depth = pnm.load_image(depth_path, "depth", cfg.input_size)
    model = build_model(cfg, ckpt_path).eval()
    with T.no_grad():
        out = model(rgb, depth)
    out_path = Path(out_path)
    written = []
    for i, p in enumerate(out.stages(), 1):
        if i > 1 and not all_stages:
            break
        data = p.data
        if data.shape[2:] != orig:
            data = kernels.resize_forward(data, *orig)
        target = out_path if i == 1 else out_path.with_name(f"{out_path.stem}_p{i}{out_path.suffix}")
        pnm.save_saliency(data[0, 0], target)
        written.append(target)
    return written


# -- eval ------------------------------------------------------------------

def _pgms(folder):
    folder = Path(folder)
    if not folder.is_dir():
        raise ConfigError(f"{folder} is not a directory")
    return {p.stem: p for p in sorted(folder.iterdir()) if p.suffix.lower() in (".pgm", ".ppm")}


def _soft_map(path):
    arr = pnm.read(path).astype(np.float64) / 255.0
    return arr.mean(axis=2) if arr.ndim == 3 else arr


def evaluate_dirs(pred_dir, gt_dir):
    """Returns ``(report, errors)``; mismatched or unpaired files are skipped and listed."""
    preds, gts = _pgms(pred_dir), _pgms(gt_dir)
    report, errors = EvalReport(), []
    for name in sorted(set(preds) | set(gts)):
        if name not in gts:
            errors.append(f"{preds[name]}: no ground truth named {name}")
            continue
        if name not in preds:
            errors.append(f"{gts[name]}: no prediction named {name}")
            continue
        p = _soft_map(preds[name])
        g = _soft_map(gts[name])
        if p.shape != g.shape:
            errors.append(f"{preds[name]}: size {p.shape[1]}x{p.shape[0]} does not match "
                          f"ground truth {g.shape[1]}x{g.shape[0]}; skipped")
            continue
        report.add(name, p, g)
    return report, errors


def report_text(report):
    """``key = value`` sections with four decimal places."""
    lines = ["[mean]", f"count = {report.count}"]
    lines += [f"{k} = {v:.4f}" for k, v in report.means().items()]
    for name, row in zip(report.names, report.rows):
        lines += ["", f"[image {name}]"]
        lines += [f"{k} = {row[k]:.4f}" for k in METRIC_NAMES]
        if name in report.flags:
            lines.append(f"flag = {report.flags[name]}")
    return "\n".join(lines) + "\n"


# -- subcommand handlers ---------------------------------------------------

def cmd_infer(args):
    cfg = RunConfig.load(args.config)
    for path in infer(cfg, args.rgb, args.depth, args.out, args.all_stages, args.checkpoint):
        print(f"wrote {path}")
    return 0


def cmd_train_toy(args):
    cfg = RunConfig.load(args.config)
    corpus = load_corpus(args.corpus, cfg.input_size)
    model = HODINet(cfg.model_config())

    def on_step(step, epoch, report):
        log.debug("step %d total %.4f", step, report.total)

    hist = train(model, corpus, lr=cfg.lr, lr_decay=cfg.lr_decay, epochs=cfg.epochs,
                 steps_per_epoch=cfg.steps_per_epoch, batch_size=cfg.batch_size,
                 seed=cfg.seed, on_step=on_step)
    for e in hist.epoch_losses:
        stages = " ".join(f"P{i + 1}:{b:.3f}/{s:.3f}/{u:.3f}"
                          for i, (b, s, u) in enumerate(zip(e["bce"], e["ssim"], e["iou"])))
        print(f"epoch {e['epoch']:3d}  lr {e['lr']:.3e}  total {e['total']:.4f}  {stages}")
    checkpoint.save(args.out, model, cfg.to_dict())
    print(f"initial loss {hist.initial:.4f}  final loss {hist.final:.4f}  "
          f"ratio {hist.final / hist.initial:.3f}")
    print(f"wrote {args.out}")
    return 0


def cmd_eval(args):
    report, errors = evaluate_dirs(args.pred, args.gt)
    for msg in errors:
        print(f"error: {msg}", file=sys.stderr)
    print(report.table())
    if args.report:
        Path(args.report).write_text(report_text(report))
    if report.count == 0:
        print("error: no valid prediction/ground-truth pairs", file=sys.stderr)
    return 1 if errors or report.count == 0 else 0


def cmd_gradcheck(args):
    results = gradcheck.run(args.seed)
    print(gradcheck.format_report(results))
    worst = max(r.rel_err for r in results)
    over = [r.name for r in results if r.rel_err > gradcheck.END_TO_END_TOL]
    print(f"worst relative error {worst:.3e}")
    return 1 if over or not all(r.ok for r in results) else 0


def cmd_selftest(args):
    outcomes = selftest.run(args.seed)
    width = max(len(o.name) for o in outcomes)
    for o in outcomes:
        print(f"{'PASS' if o.ok else 'FAIL'}  {o.name:<{width}}  {o.seconds:6.2f}s  {o.detail}")
    return 0 if all(o.ok for o in outcomes) else 1


def cmd_synth_corpus(args):
    write_corpus(synthetic_corpus(args.size), args.out)
    print(f"wrote toy corpus to {args.out}")
    return 0


def make_parser():
    ap = argparse.ArgumentParser(prog="hodinet", description="RGB-D salient object detection toolkit")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("infer", help="predict a saliency map for one RGB-D pair")
    p.add_argument("--config", required=True)
    p.add_argument("--rgb", required=True)
    p.add_argument("--depth", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--all-stages", action="store_true", help="also write P2..P4 as <out>_p<i>.pgm")
    p.add_argument("--checkpoint", help="overrides the config's checkpoint path")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("train-toy", help="train on a small rgb/depth/gt corpus")
    p.add_argument("--config", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("selftest", help="run the invariant suite")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("synth-corpus", help="write the synthetic toy corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, default=64)
    p.set_defaults(func=cmd_synth_corpus)
    return ap


def main(argv=None):
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (HodinetError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
