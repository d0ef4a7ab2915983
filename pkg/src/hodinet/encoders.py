"""Stage contract and the two desk-scale backbones.

Both encoders emit four feature maps at strides 4, 8, 16 and 32 of the input.
The RGB stream uses overlapping patch embeddings followed by token
self-attention; the depth stream is a plain convolution stack.
"""
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from . import tensor as T
from .errors import ContractError
from .nn import BatchNorm2d, Conv2d, ConvBNReLU, Linear, Module

STAGE_STRIDES = (4, 8, 16, 32)
FULL_RGB_CHANNELS = (64, 128, 320, 512)
FULL_DEPTH_CHANNELS = (256, 512, 1024, 2048)
TOY_CHANNELS = (16, 32, 64, 128)


@dataclass(frozen=True)
class StageContract:
    input_size: Tuple[int, int] = (64, 64)
    rgb_channels: Tuple[int, ...] = TOY_CHANNELS
    depth_channels: Tuple[int, ...] = TOY_CHANNELS
    stage_strides: Tuple[int, ...] = field(default=STAGE_STRIDES, init=False)

    def __post_init__(self):
        h, w = self.input_size
        if h <= 0 or w <= 0 or h % 32 or w % 32:
            raise ContractError(f"input size {self.input_size} must be positive multiples of 32")
        if len(self.rgb_channels) != 4 or len(self.depth_channels) != 4:
            raise ContractError("exactly four stage widths are required per stream")
        if min(self.rgb_channels) <= 0 or min(self.depth_channels) <= 0:
            raise ContractError("stage widths must be positive")

    def resolution(self, stage):
        """Spatial size of stage ``stage`` (1-based)."""
        s = self.stage_strides[stage - 1]
        return self.input_size[0] // s, self.input_size[1] // s

    def shapes(self, stream):
        widths = self.rgb_channels if stream == "rgb" else self.depth_channels
        return [(c,) + self.resolution(i + 1) for i, c in enumerate(widths)]


def check_input(x, contract=None):
    if x.ndim != 4:
        raise ContractError(f"expected (n, c, h, w) input, got shape {x.shape}")
    h, w = x.shape[2], x.shape[3]
    if h % 32 or w % 32:
        raise ContractError(f"input spatial size {h}x{w} is not divisible by 32")
    if contract is not None and (h, w) != tuple(contract.input_size):
        raise ContractError(f"input size {h}x{w} differs from contract {contract.input_size}")


def check_stages(features, contract, stream):
    expected = contract.shapes(stream)
    if len(features) != 4:
        raise ContractError(f"{stream} encoder produced {len(features)} stages, expected 4")
    for i, (f, exp) in enumerate(zip(features, expected), 1):
        if f.shape[1:] != exp:
            raise ContractError(f"{stream} stage {i} has shape {f.shape[1:]}, contract says {exp}")


def replicate_depth(depth):
    """Depth maps enter the backbone as three identical channels."""
    if depth.shape[1] == 1:
        return T.concat([depth, depth, depth], axis=1)
    return depth


def _entry(in_ch, out_ch, stage):
    if stage == 1:
        return dict(in_ch=in_ch, out_ch=out_ch, k=7, stride=4, padding=3)
    return dict(in_ch=in_ch, out_ch=out_ch, k=3, stride=2, padding=1)


class DepthEncoder(Module):
    """Convolution stack: per stage a strided entry block then a 3x3 block."""

    def __init__(self, channels: Sequence[int] = TOY_CHANNELS, in_ch=3):
        self.channels = tuple(channels)
        self.stages = []
        prev = in_ch
        for i, c in enumerate(self.channels, 1):
            self.stages.append([ConvBNReLU(**_entry(prev, c, i)), ConvBNReLU(c, c, 3)])
            prev = c

    def forward(self, depth) -> List[T.Tensor]:
        check_input(depth)
        x = replicate_depth(depth)
        feats = []
        for entry, block in self.stages:
            x = block(entry(x))
            feats.append(x)
        return feats


class TokenAttention(Module):
    """Single-head scaled dot-product self-attention with a residual connection.

    Operates on tokens of shape (n, L, C).
    """

    def __init__(self, dim):
        self.dim = dim
        self.q = Linear(dim, dim)
        self.k = Linear(dim, dim)
        self.v = Linear(dim, dim)

    def weights(self, tokens):
        q = self.q(tokens)
        k = self.k(tokens)
        return T.softmax(T.matmul(q, T.transpose(k)) * (1.0 / np.sqrt(self.dim)), axis=-1)

    def forward(self, tokens):
        return tokens + T.matmul(self.weights(tokens), self.v(tokens))


class TokenMLP(Module):
    def __init__(self, dim, ratio=2):
        self.fc1 = Linear(dim, dim * ratio)
        self.fc2 = Linear(dim * ratio, dim)

    def forward(self, tokens):
        return tokens + self.fc2(T.relu(self.fc1(tokens)))


class RGBStage(Module):
    def __init__(self, in_ch, out_ch, stage):
        self.embed = Conv2d(**_entry(in_ch, out_ch, stage))
        self.norm = BatchNorm2d(out_ch)
        self.attn = TokenAttention(out_ch)
        self.mlp = TokenMLP(out_ch)

    def forward(self, x):
        x = self.norm(self.embed(x))
        n, c, h, w = x.shape
        tokens = T.transpose(T.reshape(x, (n, c, h * w)))
        tokens = self.mlp(self.attn(tokens))
        return T.reshape(T.transpose(tokens), (n, c, h, w))


class RGBEncoder(Module):
    """Overlapping patch embedding + attention per stage (desk-scale transformer stream)."""

    def __init__(self, channels: Sequence[int] = TOY_CHANNELS, in_ch=3):
        self.channels = tuple(channels)
        self.stages = []
        prev = in_ch
        for i, c in enumerate(self.channels, 1):
            self.stages.append(RGBStage(prev, c, i))
            prev = c

    def forward(self, rgb) -> List[T.Tensor]:
        check_input(rgb)
        feats = []
        x = rgb
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        return feats
