"""Early-warning classifier horse races with resampling-based uncertainty."""
__version__ = "0.1.0"
