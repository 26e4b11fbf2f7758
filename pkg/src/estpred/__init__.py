"""Trajectory prediction from estimated object states: ingestion, smoothing,
diagnostics, windowing, kinematic baselines and consistency-aware scoring."""

__version__ = "0.1.0"
