"""Full RGB-D saliency network: two encoders, four fusion blocks, decoder, heads."""
from dataclasses import asdict, dataclass, field
from typing import Optional, Tuple

from . import tensor as T
from .decoder import CPRN, PredictionHead, SaliencyOutput
from .encoders import DepthEncoder, RGBEncoder, StageContract, TOY_CHANNELS, check_stages
from .errors import ConfigError
from .fusion import VARIANTS, build_fusion
from .nn import Module, init_params


@dataclass
class ModelConfig:
    input_size: Tuple[int, int] = (64, 64)
    rgb_channels: Tuple[int, ...] = TOY_CHANNELS
    depth_channels: Tuple[int, ...] = TOY_CHANNELS
    fusion_widths: Optional[Tuple[int, ...]] = None
    decoder_width: int = 32
    variant: str = "full"
    cascade: bool = True
    row_first: bool = True
    seed: int = 0

    def __post_init__(self):
        self.input_size = tuple(int(v) for v in self.input_size)
        self.rgb_channels = tuple(int(v) for v in self.rgb_channels)
        self.depth_channels = tuple(int(v) for v in self.depth_channels)
        if self.fusion_widths is None:
            self.fusion_widths = self.rgb_channels
        self.fusion_widths = tuple(int(v) for v in self.fusion_widths)
        if len(self.fusion_widths) != 4 or min(self.fusion_widths) <= 0:
            raise ConfigError("fusion_widths must hold four positive integers")
        if self.decoder_width <= 0:
            raise ConfigError("decoder_width must be positive")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {sorted(VARIANTS)}")

    @property
    def contract(self):
        return StageContract(self.input_size, self.rgb_channels, self.depth_channels)

    def to_dict(self):
        return asdict(self)


class HODINet(Module):
    def __init__(self, config: ModelConfig = None):
        self.config = config or ModelConfig()
        cfg = self.config
        self.contract = cfg.contract
        self.rgb_encoder = RGBEncoder(cfg.rgb_channels)
        self.depth_encoder = DepthEncoder(cfg.depth_channels)
        kinds = VARIANTS[cfg.variant]
        self.fusions = [
            build_fusion(kind, r, d, w, cfg.row_first)
            for kind, r, d, w in zip(kinds, cfg.rgb_channels, cfg.depth_channels, cfg.fusion_widths)
        ]
        self.decoder = CPRN([f.width for f in self.fusions], cfg.decoder_width, cfg.cascade)
        self.heads = [PredictionHead(cfg.decoder_width) for _ in range(4)]
        init_params(self, cfg.seed)

    def encode(self, rgb, depth):
        f_rgb = self.rgb_encoder(rgb)
        f_depth = self.depth_encoder(depth)
        check_stages(f_rgb, self.contract, "rgb")
        check_stages(f_depth, self.contract, "depth")
        return f_rgb, f_depth

    def fuse(self, f_rgb, f_depth):
        return [fuse(r, d) for fuse, r, d in zip(self.fusions, f_rgb, f_depth)]

    def forward(self, rgb, depth) -> SaliencyOutput:
        rgb, depth = T.as_tensor(rgb), T.as_tensor(depth)
        size = rgb.shape[2:]
        fused = self.fuse(*self.encode(rgb, depth))
        outs = self.decoder(fused)
        preds = [head(f, size) for head, f in zip(self.heads, outs)]
        return SaliencyOutput(*preds)
