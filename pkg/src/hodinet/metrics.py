"""Saliency evaluation: MAE, S-measure, max F-measure and max E-measure.

All functions take a prediction ``p`` with values in [0, 1] and a ground truth
``g`` (binarised at 0.5), both 2-D arrays of the same shape.
"""
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from .errors import DimensionError

EPS = np.spacing(1.0)
BETA2 = 0.3
ALPHA = 0.5
THRESHOLDS = np.arange(256) / 255.0


def _prepare(p, g):
    p = np.asarray(p, dtype=np.float64)
    g = np.asarray(g)
    if p.shape != g.shape:
        raise DimensionError(f"prediction {p.shape} and ground truth {g.shape} differ")
    if p.ndim != 2:
        p, g = np.squeeze(p), np.squeeze(g)
        if p.ndim != 2:
            raise DimensionError(f"expected a single-channel map, got shape {p.shape}")
    return p, g.astype(np.float64) > 0.5


def mae(p, g):
    p, g = _prepare(p, g)
    return float(np.abs(p - g).mean())


# ---------------------------------------------------------------------------
# S-measure
# ---------------------------------------------------------------------------

def _object_score(x, mask):
    vals = x[mask]
    if vals.size == 0:
        return 0.0
    mu = vals.mean()
    sd = vals.std(ddof=1) if vals.size > 1 else 0.0
    return 2.0 * mu / (mu * mu + 1.0 + sd + EPS)


def s_object(p, g):
    fg = np.where(g, p, 0.0)
    bg = np.where(~g, 1.0 - p, 0.0)
    u = g.mean()
    return u * _object_score(fg, g) + (1.0 - u) * _object_score(bg, ~g)


def centroid(g):
    """1-based split position (x, y) from the ground-truth centre of mass, rounded half up."""
    h, w = g.shape
    if not g.any():
        return int(np.floor(w / 2 + 0.5)) + 1, int(np.floor(h / 2 + 0.5)) + 1
    rows, cols = np.nonzero(g)
    y = int(np.floor(rows.mean() + 0.5)) + 1
    x = int(np.floor(cols.mean() + 0.5)) + 1
    return x, y


def _block_ssim(p, g):
    n = p.size
    x, y = p.mean(), g.mean()
    if n > 1:
        sx = ((p - x) ** 2).sum() / (n - 1)
        sy = ((g - y) ** 2).sum() / (n - 1)
        sxy = ((p - x) * (g - y)).sum() / (n - 1)
    else:
        sx = sy = sxy = 0.0
    a = 4.0 * x * y * sxy
    b = (x * x + y * y) * (sx + sy)
    if a != 0:
        return a / (b + EPS)
    if b == 0:
        return 1.0
    return 0.0


def s_region(p, g):
    h, w = g.shape
    x, y = centroid(g)
    gf = g.astype(np.float64)
    area = h * w
    score = 0.0
    for rs, cs in ((slice(0, y), slice(0, x)), (slice(0, y), slice(x, w)),
                   (slice(y, h), slice(0, x)), (slice(y, h), slice(x, w))):
        blk = p[rs, cs]
        if blk.size == 0:
            continue
        score += blk.size / area * _block_ssim(blk, gf[rs, cs])
    return score


def s_measure(p, g, alpha=ALPHA):
    p, g = _prepare(p, g)
    y = g.mean()
    if y == 0:
        return float(1.0 - p.mean())
    if y == 1:
        return float(p.mean())
    return float(max(alpha * s_object(p, g) + (1.0 - alpha) * s_region(p, g), 0.0))


# ---------------------------------------------------------------------------
# threshold sweeps
# ---------------------------------------------------------------------------

def _sweep_counts(p, g):
    """True/false positives for every threshold in :data:`THRESHOLDS` (binary = p >= t)."""
    above = p.reshape(1, -1) >= THRESHOLDS.reshape(-1, 1)
    gv = g.reshape(1, -1)
    tp = (above & gv).sum(axis=1).astype(np.float64)
    fp = (above & ~gv).sum(axis=1).astype(np.float64)
    return tp, fp


def f_measure_curve(p, g, beta2=BETA2):
    p, g = _prepare(p, g)
    n_fg = g.sum()
    if n_fg == 0:
        return np.zeros(len(THRESHOLDS))
    tp, fp = _sweep_counts(p, g)
    pos = tp + fp
    prec = np.divide(tp, pos, out=np.zeros_like(tp), where=pos > 0)
    rec = tp / n_fg
    den = beta2 * prec + rec
    return np.divide((1 + beta2) * prec * rec, den, out=np.zeros_like(den), where=den > 0)


def f_measure_max(p, g, beta2=BETA2):
    """Maximum F-beta over 256 thresholds; 0 when the ground truth has no foreground."""
    return float(f_measure_curve(p, g, beta2).max())


def e_measure_curve(p, g):
    p, g = _prepare(p, g)
    n = g.size
    n_fg = int(g.sum())
    tp, fp = _sweep_counts(p, g)
    pred_fg = tp + fp
    if n_fg == 0:
        return (n - pred_fg) / n
    if n_fg == n:
        return pred_fg / n
    fn = n_fg - tp
    tn = n - n_fg - fp
    mu_p = pred_fg / n
    mu_g = n_fg / n
    total = np.zeros(len(THRESHOLDS))
    # (prediction value, gt value, pixel count) for the four agreement classes
    for pv, gv, cnt in ((1.0, 1.0, tp), (1.0, 0.0, fp), (0.0, 1.0, fn), (0.0, 0.0, tn)):
        dp = pv - mu_p
        dg = gv - mu_g
        align = 2.0 * dp * dg / (dp * dp + dg * dg + EPS)
        total += (align + 1.0) ** 2 / 4.0 * cnt
    return total / n


def e_measure_max(p, g):
    return float(e_measure_curve(p, g).max())


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

METRIC_NAMES = ("mae", "s_alpha", "f_beta_max", "e_xi_max")


def evaluate(p, g):
    p, gb = _prepare(p, g)
    row = {
        "mae": mae(p, gb),
        "s_alpha": s_measure(p, gb),
        "f_beta_max": f_measure_max(p, gb),
        "e_xi_max": e_measure_max(p, gb),
    }
    return row, ("gt_empty" if not gb.any() else None)


@dataclass
class EvalReport:
    names: List[str] = field(default_factory=list)
    rows: List[Dict[str, float]] = field(default_factory=list)
    flags: Dict[str, str] = field(default_factory=dict)

    def add(self, name, p, g):
        row, flag = evaluate(p, g)
        self.names.append(name)
        self.rows.append(row)
        if flag:
            self.flags[name] = flag
        return row

    @property
    def count(self):
        return len(self.rows)

    def means(self):
        if not self.rows:
            return {k: float("nan") for k in METRIC_NAMES}
        return {k: float(np.mean([r[k] for r in self.rows])) for k in METRIC_NAMES}

    def table(self):
        width = max([len("image"), len("mean")] + [len(n) for n in self.names])
        head = f"{'image':<{width}}  " + "  ".join(f"{k:>10}" for k in METRIC_NAMES)
        lines = [head, "-" * len(head)]
        for name, row in zip(self.names, self.rows):
            mark = f"  [{self.flags[name]}]" if name in self.flags else ""
            lines.append(f"{name:<{width}}  " + "  ".join(f"{row[k]:>10.4f}" for k in METRIC_NAMES) + mark)
        lines.append("-" * len(head))
        m = self.means()
        lines.append(f"{'mean':<{width}}  " + "  ".join(f"{m[k]:>10.4f}" for k in METRIC_NAMES))
        return "\n".join(lines)

    def to_dict(self):
        def fmt(v):
            return float(f"{v:.4f}")
        return {
            "count": self.count,
            "mean": {k: fmt(v) for k, v in self.means().items()},
            "images": {n: {k: fmt(v) for k, v in r.items()} for n, r in zip(self.names, self.rows)},
            "flags": dict(self.flags),
        }
