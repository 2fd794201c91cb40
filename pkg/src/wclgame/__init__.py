"""Double-layer game scheduling for wireless EV charging lanes."""

__version__ = "0.1.0"
