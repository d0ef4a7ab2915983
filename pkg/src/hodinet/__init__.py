"""RGB-D salient object detection with high-order spatial and channel fusion.

Numpy autograd core, optional numba kernels (set ``HODINET_DISABLE_NUMBA=1``
to force the numpy path), toy-scale training and standard SOD metrics.
"""
from .config import RunConfig
from .errors import (ConfigError, ContractError, DimensionError, HodinetError, ParseError,
                     UnsupportedFormatError)
from .model import HODINet, ModelConfig
from .tensor import Tensor, no_grad

__version__ = "0.1.0"

__all__ = ["HODINet", "ModelConfig", "RunConfig", "Tensor", "no_grad", "HodinetError",
           "ConfigError", "ContractError", "DimensionError", "ParseError",
           "UnsupportedFormatError"]
