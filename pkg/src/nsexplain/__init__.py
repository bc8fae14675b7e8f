"""Graph classifier training, mask-based explanation, and evaluation toolkit."""

from .tensor import Matrix, Tape

__version__ = "0.1.0"

__all__ = ["Matrix", "Tape", "__version__"]
