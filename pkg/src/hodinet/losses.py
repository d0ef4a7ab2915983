"""Hybrid saliency loss: BCE + SSIM + IoU per supervised stage, summed over stages."""
from dataclasses import dataclass, field
from typing import List

from . import kernels
from . import tensor as T
from .errors import DimensionError

PROB_CLAMP = 1e-7
IOU_EPS = 1e-7
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def _check_pair(p, g):
    if p.shape != g.shape:
        raise DimensionError(f"prediction {p.shape} and ground truth {g.shape} differ")
    if p.ndim != 4:
        raise DimensionError(f"expected (n, c, h, w) maps, got {p.shape}")


def bce_loss(p, g, reduction="sum"):
    """Binary cross-entropy, summed over pixels (``reduction="sum"``) or averaged, then
    averaged over the batch."""
    p, g = T.as_tensor(p), T.as_tensor(g)
    _check_pair(p, g)
    pc = T.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    per_px = -(g * T.log(pc) + (1.0 - g) * T.log(1.0 - pc))
    if reduction == "sum":
        per_img = T.reduce_sum(per_px, axis=(1, 2, 3))
    elif reduction == "mean":
        per_img = T.reduce_mean(per_px, axis=(1, 2, 3))
    else:
        raise ValueError(f"unknown reduction {reduction!r}")
    return T.reduce_mean(per_img)


def _window_ops(h, w, size, sigma):
    if h < size or w < size:
        return kernels.uniform_window_matrix(h), kernels.uniform_window_matrix(w)
    taps = kernels.gaussian_window(size, sigma)
    return kernels.window_matrix(h, taps), kernels.window_matrix(w, taps)


def ssim_map(p, g, size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    """Local SSIM at every valid window position.

    Images smaller than the window are treated as one global patch with
    uniform weights.
    """
    p, g = T.as_tensor(p), T.as_tensor(g)
    _check_pair(p, g)
    rows, cols = _window_ops(p.shape[2], p.shape[3], size, sigma)

    def filt(x):
        return T.separable_filter(x, rows, cols)

    mu_p, mu_g = filt(p), filt(g)
    mu_pp, mu_gg, mu_pg = mu_p * mu_p, mu_g * mu_g, mu_p * mu_g
    var_p = filt(p * p) - mu_pp
    var_g = filt(g * g) - mu_gg
    cov = filt(p * g) - mu_pg
    num = (2.0 * mu_pg + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_pp + mu_gg + SSIM_C1) * (var_p + var_g + SSIM_C2)
    return num / den


def ssim_loss(p, g, size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    return 1.0 - T.reduce_mean(ssim_map(p, g, size, sigma))


def iou_loss(p, g):
    """1 - soft intersection over union, per image, averaged over the batch."""
    p, g = T.as_tensor(p), T.as_tensor(g)
    _check_pair(p, g)
    pg = p * g
    inter = T.reduce_sum(pg, axis=(1, 2, 3))
    union = T.reduce_sum(p + g - pg, axis=(1, 2, 3))
    return T.reduce_mean(1.0 - inter / (union + IOU_EPS))


def hybrid_loss(p, g, terms=("bce", "ssim", "iou")):
    parts = {}
    if "bce" in terms:
        parts["bce"] = bce_loss(p, g)
    if "ssim" in terms:
        parts["ssim"] = ssim_loss(p, g)
    if "iou" in terms:
        parts["iou"] = iou_loss(p, g)
    total = None
    for v in parts.values():
        total = v if total is None else total + v
    return total, parts


@dataclass
class LossBreakdown:
    bce: List[float] = field(default_factory=list)
    ssim: List[float] = field(default_factory=list)
    iou: List[float] = field(default_factory=list)
    hybrid: List[float] = field(default_factory=list)
    total: float = 0.0
    total_tensor: T.Tensor = None

    def as_dict(self):
        return {"bce": self.bce, "ssim": self.ssim, "iou": self.iou,
                "hybrid": self.hybrid, "total": self.total}


def total_loss(outputs, g, terms=("bce", "ssim", "iou")):
    """Sum of the per-stage hybrid losses over every prediction in ``outputs``."""
    g = T.as_tensor(g)
    preds = outputs.stages() if hasattr(outputs, "stages") else list(outputs)
    report = LossBreakdown()
    total = None
    for p in preds:
        if p.shape != g.shape:
            raise DimensionError(
                f"prediction {p.shape} is not at ground-truth resolution {g.shape}")
        h, parts = hybrid_loss(p, g, terms)
        for key in ("bce", "ssim", "iou"):
            getattr(report, key).append(parts[key].item() if key in parts else 0.0)
        report.hybrid.append(h.item())
        total = h if total is None else total + h
    report.total = total.item()
    report.total_tensor = total
    return report


__all__ = ["bce_loss", "ssim_map", "ssim_loss", "iou_loss", "hybrid_loss",
           "total_loss", "LossBreakdown"]

