"""mixkit: token-mixing sequence models on a minimal autodiff core."""

__version__ = "0.1.0"

from .tensor import Tape, Tensor  # noqa: F401
