"""Cell lineage tracking with collision-aware re-segmentation and scoring."""

__version__ = "0.1.0"
