"""Synthetic GNSS jammer snapshots, a compact multi-task CNN and robustness protocols."""

__version__ = "0.1.0"
