"""swapforge: desk-scale face swapping (disentangled VAE), a real-world
perturbation engine, and a forgery-detection benchmark protocol."""

__version__ = "0.1.0"
