"""Training loop, corpus loading and the synthetic toy corpus."""
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional

import numpy as np

from . import pnm
from . import tensor as T
from .errors import ConfigError
from .losses import total_loss
from .model import HODINet
from .nn import Adam, lr_at_epoch

logger = logging.getLogger(__name__)

RGB_DIR, DEPTH_DIR, GT_DIR = "rgb", "depth", "gt"


@dataclass
class Corpus:
    names: List[str]
    rgb: np.ndarray    # (n, 3, h, w)
    depth: np.ndarray  # (n, 3, h, w)
    gt: np.ndarray     # (n, 1, h, w), binary

    def __len__(self):
        return len(self.names)


def synthetic_corpus(size=64, sides=(16, 20, 24, 28)):
    """Centred squares on textured backgrounds; the square is nearer in depth.

    Fully deterministic. One image per entry of ``sides``.
    """
    n = len(sides)
    yy, xx = np.mgrid[0:size, 0:size] / size
    palette = [(0.9, 0.2, 0.2), (0.2, 0.8, 0.3), (0.2, 0.3, 0.9), (0.9, 0.8, 0.2)]
    rgb = np.zeros((n, 3, size, size))
    depth = np.zeros((n, 1, size, size))
    gt = np.zeros((n, 1, size, size))
    for i, s in enumerate(sides):
        a = (size - s) // 2
        mask = np.zeros((size, size), dtype=bool)
        mask[a:a + s, a:a + s] = True
        gt[i, 0] = mask
        for c in range(3):
            rgb[i, c] = 0.35 + 0.15 * np.sin(6.0 * (xx + 0.3 * i) + 2.0 * c * yy)
            rgb[i, c][mask] = palette[i % len(palette)][c]
        depth[i, 0] = 0.2 + 0.2 * yy
        depth[i, 0][mask] = 0.85
    return Corpus([f"toy{i}" for i in range(n)], rgb, np.repeat(depth, 3, axis=1), gt)


def write_corpus(corpus, root):
    root = Path(root)
    for sub in (RGB_DIR, DEPTH_DIR, GT_DIR):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for i, name in enumerate(corpus.names):
        pnm.write(root / RGB_DIR / f"{name}.ppm", pnm.to_bytes(corpus.rgb[i].transpose(1, 2, 0)))
        pnm.write(root / DEPTH_DIR / f"{name}.pgm", pnm.to_bytes(corpus.depth[i, 0]))
        pnm.write(root / GT_DIR / f"{name}.pgm", pnm.to_bytes(corpus.gt[i, 0]))


def _stems(folder, ext):
    if not folder.is_dir():
        return {}
    return {p.stem: p for p in sorted(folder.iterdir()) if p.suffix.lower() == ext}


def load_corpus(root, size):
    """Read ``rgb/*.ppm``, ``depth/*.pgm`` and ``gt/*.pgm`` triples matched by file stem."""
    root = Path(root)
    rgb = _stems(root / RGB_DIR, ".ppm")
    depth = _stems(root / DEPTH_DIR, ".pgm")
    gt = _stems(root / GT_DIR, ".pgm")
    names = sorted(set(rgb) & set(depth) & set(gt))
    orphans = sorted(
        os.fspath(p) for d in (rgb, depth, gt) for stem, p in d.items() if stem not in names)
    if orphans:
        raise ConfigError("unmatched corpus files: " + ", ".join(orphans))
    if not names:
        raise ConfigError(f"no rgb/depth/gt triples found under {root}")
    r = np.concatenate([pnm.load_image(rgb[n], "rgb", size).data for n in names])
    d = np.concatenate([pnm.load_image(depth[n], "depth", size).data for n in names])
    g = np.concatenate([pnm.load_image(gt[n], "gt", size).data for n in names])
    return Corpus(names, r, d, g)


@dataclass
class History:
    step_losses: List[float] = field(default_factory=list)
    epoch_losses: List[dict] = field(default_factory=list)
    lrs: List[float] = field(default_factory=list)

    @property
    def initial(self):
        return self.step_losses[0]

    @property
    def final(self):
        return self.step_losses[-1]


def train(model: HODINet, corpus: Corpus, *, lr=1e-4, lr_decay=0.9, epochs=1,
          steps_per_epoch: Optional[int] = None, batch_size=4, seed=0,
          on_step: Optional[Callable] = None, terms=("bce", "ssim", "iou")) -> History:
    """Adam on the summed deep-supervision loss; the rate decays by ``lr_decay`` each epoch.

    With ``steps_per_epoch=None`` an epoch is one shuffled pass over the corpus.
    """
    rng = np.random.default_rng(seed)
    n = len(corpus)
    batch_size = min(batch_size, n)
    if steps_per_epoch is None:
        steps_per_epoch = math.ceil(n / batch_size)
    opt = Adam(model.parameters(), lr=lr)
    hist = History()
    model.train()
    order = np.arange(n)
    cursor = n
    step = 0
    for epoch in range(epochs):
        opt.lr = lr_at_epoch(lr, lr_decay, epoch)
        parts = []
        for _ in range(steps_per_epoch):
            if cursor + batch_size > n:
                order = rng.permutation(n) if n > batch_size else np.arange(n)
                cursor = 0
            idx = order[cursor:cursor + batch_size]
            cursor += batch_size
            out = model(corpus.rgb[idx], corpus.depth[idx])
            report = total_loss(out, corpus.gt[idx], terms)
            if not np.isfinite(report.total):
                raise FloatingPointError(f"non-finite loss at step {step}")
            opt.zero_grad()
            report.total_tensor.backward()
            opt.step()
            hist.step_losses.append(report.total)
            hist.lrs.append(opt.lr)
            parts.append(report.as_dict())
            if on_step is not None:
                on_step(step, epoch, report)
            step += 1
        summary = {
            "epoch": epoch,
            "lr": opt.lr,
            "total": float(np.mean([p["total"] for p in parts])),
            "bce": np.mean([p["bce"] for p in parts], axis=0).tolist(),
            "ssim": np.mean([p["ssim"] for p in parts], axis=0).tolist(),
            "iou": np.mean([p["iou"] for p in parts], axis=0).tolist(),
        }
        hist.epoch_losses.append(summary)
        logger.info("epoch %d lr %.3g total %.4f", epoch, opt.lr, summary["total"])
    return hist


def predict_final(model, rgb, depth, eval_mode=True):
    """All four stage predictions for a batch, without recording a graph."""
    prev = model.training
    model.train(not eval_mode)
    with T.no_grad():
        out = model(rgb, depth)
    model.train(prev)
    return out
