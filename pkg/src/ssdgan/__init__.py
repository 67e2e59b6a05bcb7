"""Desk-scale GAN lab with a spectral-realness discriminator."""

from ._backend import backend_name

__version__ = "0.1.0"

__all__ = ["backend_name", "__version__"]
