"""
pirlab package: capacity-achieving private information retrieval.

Exposes commonly used objects for convenience and documents the package
version, e.g. `from pirlab import settings`.
"""

from .config import settings

__all__ = [
    "settings",
]

__version__ = "1.0.0"
