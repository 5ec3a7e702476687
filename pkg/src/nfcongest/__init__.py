"""NetFlow v5 flow export, collection and congestion analysis."""

__version__ = "0.1.0"
