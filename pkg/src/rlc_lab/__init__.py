"""Randomized linear classifiers with invariant coefficient samplers."""

from .diffcore import ConfigurationError, UsageError

__version__ = "0.1.0"

__all__ = ["ConfigurationError", "UsageError", "__version__"]
