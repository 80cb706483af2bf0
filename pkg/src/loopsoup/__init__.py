"""Loop-soup percolation on Z^d: samplers, potential theory, experiments."""

__version__ = "0.1.0"
