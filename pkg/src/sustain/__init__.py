"""Early-participation modeling of long-term sustained activity in open-source projects."""

__version__ = "0.1.0"
