"""Semi-supervised phantom-segmentation trainer with robust losses.

Modules: ``tensor`` (reverse-mode autodiff core), ``losses``, ``augment``,
``model`` (compact U-Net), ``phantom`` (synthetic dataset + format),
``trainer``, ``metrics``, ``cli``, and ``kernels`` (compiled/NumPy conv
backends).
"""

__version__ = "0.1.0"

from .augment import StrongAugConfig, WeakAugConfig
from .model import UNetConfig
from .phantom import PhantomConfig, PhantomSample
from .tensor import Tensor, backward, no_grad
from .trainer import TrainConfig

__all__ = [
    "PhantomConfig", "PhantomSample", "StrongAugConfig", "Tensor",
    "TrainConfig", "UNetConfig", "WeakAugConfig", "backward", "no_grad",
    "__version__",
]
