"""Item-to-item recommendation with Fisher information over item distances."""

__version__ = "0.1.0"
