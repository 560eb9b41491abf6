"""Alpha-divergence bridge from maximum-likelihood to adversarial training."""

__version__ = "0.1.0"
