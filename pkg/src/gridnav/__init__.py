"""Grid-line perception and navigation for a downward-camera drone."""

__version__ = "0.1.0"
