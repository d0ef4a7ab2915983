"""Cross-modality fusion of RGB and depth stage features.

Shallow stages use :class:`HOSF` (spatial attention from the pixel-by-pixel
correlation between the two modalities), deep stages use :class:`HOCF`
(channel attention from the outer product of pooled channel descriptors).
:class:`ConcatFusion` is the plain baseline used for ablations.

Reading of the composition operators
------------------------------------
* spatial attention: with ``R, D`` the aligned maps reshaped to
  ``(C, h*w)``, ``A = Norm(MO(R^T D)) R^T``, i.e. two matrix products
  giving an (hw x hw) correlation and then an (hw x C) map, transposed back to
  ``(C, h, w)``;
* channel attention: ``A_ch = a_rgb a_depth^T``, the outer product of the two
  pooled vectors;
* ``MO`` is the signed square root and ``Norm`` divides each row by its
  Euclidean norm (``+1e-12``).
"""
from dataclasses import dataclass
from typing import Optional

from . import tensor as T
from .errors import ConfigError, DimensionError
from .nn import Conv2d, ConvBNReLU, Linear, Module, global_avg_pool, global_max_pool, strided_max_pool

NORM_EPS = 1e-12


def moment_normalize(x):
    """Elementwise signed square root."""
    return T.signed_sqrt(T.as_tensor(x))


def l2_normalize(x, eps=NORM_EPS):
    """Row-wise unit l2 norm over the last axis; all-zero rows stay zero."""
    return T.l2_normalize(T.as_tensor(x), axis=-1, eps=eps)


class AlignOp(Module):
    """1x1 conv + BN + ReLU on each stream, bringing both to ``width`` channels."""

    def __init__(self, rgb_ch, depth_ch, width):
        self.width = width
        self.rgb = ConvBNReLU(rgb_ch, width, 1)
        self.depth = ConvBNReLU(depth_ch, width, 1)

    def forward(self, f_rgb, f_depth):
        if f_rgb.shape[2:] != f_depth.shape[2:]:
            raise DimensionError(
                f"RGB and depth stage maps differ in size: {f_rgb.shape[2:]} vs {f_depth.shape[2:]}")
        return self.rgb(f_rgb), self.depth(f_depth)


@dataclass
class SpatialParts:
    out: T.Tensor
    attention: T.Tensor
    depth_weight: T.Tensor


@dataclass
class ChannelParts:
    out: T.Tensor
    interaction: T.Tensor
    weights: T.Tensor


def spatial_attention(f_rgb, f_depth):
    """(n, C, h, w) x2 -> (n, C, h, w) high-order spatial attention map."""
    n, c, h, w = f_rgb.shape
    r = T.reshape(f_rgb, (n, c, h * w))
    d = T.reshape(f_depth, (n, c, h * w))
    r_t = T.transpose(r)
    corr = T.matmul(r_t, d)
    att = T.matmul(l2_normalize(moment_normalize(corr)), r_t)
    return T.reshape(T.transpose(att), (n, c, h, w))


def high_order_spatial(f_rgb, f_depth, conv_a, conv_b):
    """Fusion on already aligned maps: ``A_sp * sigmoid(conv(conv(GMP(f_depth)))) + f_rgb``."""
    if f_rgb.shape != f_depth.shape:
        raise DimensionError(f"aligned maps differ: {f_rgb.shape} vs {f_depth.shape}")
    a_sp = spatial_attention(f_rgb, f_depth)
    f_dw = T.sigmoid(conv_b(conv_a(global_max_pool(f_depth))))
    return SpatialParts(a_sp * f_dw + f_rgb, a_sp, f_dw)


def channel_interaction(a_rgb, a_depth):
    """(n, C) x2 -> (n, C, C) with entry [j, k] = a_rgb[j] * a_depth[k]."""
    n, c = a_rgb.shape
    return T.reshape(a_rgb, (n, c, 1)) * T.reshape(a_depth, (n, 1, c))


def high_order_channel(f_rgb, f_depth, fc, row_first=True):
    """Fusion on already aligned maps: ``sigmoid(FC([rowmax; colmax])) * f_depth + f_rgb``.

    ``row_first`` puts the per-RGB-channel maxima (row-wise) first in the
    concatenation; flipping it swaps the two halves.
    """
    if f_rgb.shape != f_depth.shape:
        raise DimensionError(f"aligned maps differ: {f_rgb.shape} vs {f_depth.shape}")
    n, c = f_rgb.shape[:2]
    if fc.in_dim != 2 * c or fc.out_dim != c:
        raise ConfigError(f"channel FC must map {2 * c} -> {c}, got {fc.in_dim} -> {fc.out_dim}")
    a_rgb = T.reshape(global_avg_pool(f_rgb), (n, c))
    a_depth = T.reshape(global_avg_pool(f_depth), (n, c))
    a_ch = channel_interaction(a_rgb, a_depth)
    rows = strided_max_pool(a_ch, "row")
    cols = strided_max_pool(a_ch, "col")
    pooled = T.concat([rows, cols] if row_first else [cols, rows], axis=1)
    weights = T.sigmoid(fc(pooled))
    out = T.reshape(weights, (n, c, 1, 1)) * f_depth + f_rgb
    return ChannelParts(out, a_ch, weights)


class HOSF(Module):
    def __init__(self, rgb_ch, depth_ch, width):
        self.width = width
        self.align = AlignOp(rgb_ch, depth_ch, width)
        # 3x3 convs on the 1x1 pooled map: only the centre tap ever sees data
        self.dw_a = Conv2d(width, width, 3, padding=1)
        self.dw_b = Conv2d(width, width, 3, padding=1)

    def forward(self, F_rgb, F_depth, parts=False):
        f_rgb, f_depth = self.align(F_rgb, F_depth)
        res = high_order_spatial(f_rgb, f_depth, self.dw_a, self.dw_b)
        return res if parts else res.out


class HOCF(Module):
    def __init__(self, rgb_ch, depth_ch, width, row_first=True):
        self.width = width
        self.row_first = row_first
        self.align = AlignOp(rgb_ch, depth_ch, width)
        self.fc = Linear(2 * width, width)

    def forward(self, F_rgb, F_depth, parts=False):
        f_rgb, f_depth = self.align(F_rgb, F_depth)
        res = high_order_channel(f_rgb, f_depth, self.fc, self.row_first)
        return res if parts else res.out


class ConcatFusion(Module):
    """Ablation baseline: align both streams and concatenate (output width ``2 * width``)."""

    def __init__(self, rgb_ch, depth_ch, width):
        self.width = 2 * width
        self.align = AlignOp(rgb_ch, depth_ch, width)

    def forward(self, F_rgb, F_depth, parts=False):
        f_rgb, f_depth = self.align(F_rgb, F_depth)
        return T.concat([f_rgb, f_depth], axis=1)


FUSION_KINDS = {"hosf": HOSF, "hocf": HOCF, "concat": ConcatFusion}

VARIANTS = {
    "full": ("hosf", "hosf", "hocf", "hocf"),
    "no_hosf": ("concat", "concat", "hocf", "hocf"),
    "no_hocf": ("hosf", "hosf", "concat", "concat"),
    "swapped": ("hocf", "hocf", "hosf", "hosf"),
}


def build_fusion(kind, rgb_ch, depth_ch, width, row_first: Optional[bool] = None):
    if kind not in FUSION_KINDS:
        raise ConfigError(f"unknown fusion kind {kind!r}")
    if kind == "hocf" and row_first is not None:
        return HOCF(rgb_ch, depth_ch, width, row_first)
    return FUSION_KINDS[kind](rgb_ch, depth_ch, width)
