"""Desk-scale laboratory for hierarchical-latent-space disentanglement learning.

The package trains variational autoencoders whose latent representation is a
cascade of spaces connected by disentanglement-invariant transformations, each
space under its own information-bottleneck pressure, and evaluates them with a
histogram-MI based disentanglement metric suite on a procedural factor-labeled
sprite dataset.
"""

__version__ = "0.1.0"

from devae.errors import ConfigurationError, DataError, NumericalAbort

__all__ = ["ConfigurationError", "DataError", "NumericalAbort", "__version__"]
