"""
Command-line interface package for csi-identify.
"""
from csi_id import __version__

__all__ = ["__version__"]
