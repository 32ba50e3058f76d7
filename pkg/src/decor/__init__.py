"""Orientation-robust clustering and outlier flagging for wafer defect maps."""

__version__ = "0.1.0"
