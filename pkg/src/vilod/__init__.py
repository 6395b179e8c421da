"""Visual interactive labeling engine for object detection."""

__version__ = "0.1.0"
