"""Analytics for time-stamped classroom action-detection logs."""

__version__ = "0.1.0"
