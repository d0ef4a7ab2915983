"""Run configuration, stored as a flat JSON object.

Every key is optional in the file; missing keys take the defaults below.
Unknown keys are rejected so typos do not pass silently.
"""
import json
from dataclasses import asdict, dataclass, fields
from typing import Optional, Tuple

from .encoders import TOY_CHANNELS
from .errors import ConfigError
from .fusion import VARIANTS
from .model import ModelConfig


@dataclass
class RunConfig:
    input_size: Tuple[int, int] = (64, 64)
    rgb_channels: Tuple[int, ...] = TOY_CHANNELS
    depth_channels: Tuple[int, ...] = TOY_CHANNELS
    fusion_widths: Optional[Tuple[int, ...]] = None
    decoder_width: int = 32
    variant: str = "full"
    seed: int = 0
    lr: float = 1e-4
    lr_decay: float = 0.9
    batch_size: int = 4
    epochs: int = 100
    steps_per_epoch: Optional[int] = None
    checkpoint: Optional[str] = None

    def __post_init__(self):
        self.input_size = tuple(self.input_size)
        self.rgb_channels = tuple(self.rgb_channels)
        self.depth_channels = tuple(self.depth_channels)
        if self.fusion_widths is not None:
            self.fusion_widths = tuple(self.fusion_widths)
        self.validate()

    def validate(self):
        h, w = self.input_size
        if h <= 0 or w <= 0 or h % 32 or w % 32:
            raise ConfigError(f"input_size {self.input_size} must be positive multiples of 32")
        for key in ("rgb_channels", "depth_channels"):
            v = getattr(self, key)
            if len(v) != 4 or min(v) <= 0:
                raise ConfigError(f"{key} must hold four positive integers")
        if self.decoder_width <= 0 or self.batch_size <= 0 or self.epochs <= 0:
            raise ConfigError("decoder_width, batch_size and epochs must be positive")
        if self.steps_per_epoch is not None and self.steps_per_epoch <= 0:
            raise ConfigError("steps_per_epoch must be positive")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if not 0 < self.lr_decay <= 1:
            raise ConfigError("lr_decay must lie in (0, 1]")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")

    def model_config(self):
        return ModelConfig(
            input_size=self.input_size,
            rgb_channels=self.rgb_channels,
            depth_channels=self.depth_channels,
            fusion_widths=self.fusion_widths,
            decoder_width=self.decoder_width,
            variant=self.variant,
            seed=self.seed,
        )

    def to_dict(self):
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(data)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
