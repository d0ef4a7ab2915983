"""Cascaded pyramid decoder and the per-stage prediction heads."""
from dataclasses import dataclass
from typing import List, Sequence

from . import tensor as T
from .errors import DimensionError
from .nn import BatchNorm2d, Conv2d, ConvBNReLU, Module, upsample


class NFE(ConvBNReLU):
    """1x1 conv -> BN -> ReLU."""

    def __init__(self, in_ch, out_ch):
        super().__init__(in_ch, out_ch, k=1)


class CPRN(Module):
    """Top-down decoder over four fused stages.

    Stage 4 is refined by two NFE units; every shallower stage concatenates its
    fused map with the 2x upsampled output of the stage below and refines the
    result the same way. With ``cascade=False`` the cross-stage links are
    dropped and each stage is refined on its own.
    """

    def __init__(self, fused_widths: Sequence[int], width=32, cascade=True):
        self.width = width
        self.cascade = cascade
        self.units = []
        for i, c in enumerate(fused_widths):
            top = i == len(fused_widths) - 1
            in_ch = c if (top or not cascade) else c + width
            self.units.append([NFE(in_ch, width), NFE(width, width)])

    def forward(self, fused: Sequence[T.Tensor]) -> List[T.Tensor]:
        """Returns ``[F1_out, F2_out, F3_out, F4_out]``."""
        if len(fused) != len(self.units):
            raise DimensionError(f"decoder expects {len(self.units)} stages, got {len(fused)}")
        outs = [None] * len(fused)
        below = None
        for i in reversed(range(len(fused))):
            x = fused[i]
            if below is not None and self.cascade:
                up = upsample(below, scale=2)
                if up.shape[2:] != x.shape[2:]:
                    raise DimensionError(
                        f"stage {i + 1}: upsampled map {up.shape[2:]} does not match {x.shape[2:]}")
                x = T.concat([x, up], axis=1)
            a, b = self.units[i]
            below = b(a(x))
            outs[i] = below
        return outs


class PredictionHead(Module):
    def __init__(self, width):
        self.conv3 = Conv2d(width, width, 3, padding=1)
        self.bn = BatchNorm2d(width)
        self.conv1 = Conv2d(width, 1, 1)

    def logits(self, f):
        return self.conv1(T.relu(self.bn(self.conv3(f))))

    def forward(self, f, target_size):
        return predict(self, f, target_size)


def predict(head, f, target_size):
    """Stage logits upsampled to ``target_size`` then squashed to (0, 1)."""
    return T.sigmoid(upsample(head.logits(f), size=target_size))


@dataclass
class SaliencyOutput:
    p1: T.Tensor
    p2: T.Tensor
    p3: T.Tensor
    p4: T.Tensor

    @property
    def final(self):
        return self.p1

    def stages(self):
        return [self.p1, self.p2, self.p3, self.p4]
