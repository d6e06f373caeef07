"""IOU credit-network settlement engine and health-assessment toolkit."""

__version__ = "0.1.0"
