"""MALA in spectral coordinates with its fluid and diffusion limits."""
__version__ = "0.1.0"
