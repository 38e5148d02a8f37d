"""Online learning to rank in a non-stationary cascade click model."""

__version__ = "0.1.0"
