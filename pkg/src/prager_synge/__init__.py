"""A posteriori error estimates built from ensembles of steady 2D Euler
solutions computed by independent schemes."""

__version__ = "0.1.0"
