"""Boundary-sample anomaly detection with f-divergence GANs, on a small numpy autodiff engine."""

__version__ = "0.1.0"
