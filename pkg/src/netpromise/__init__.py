"""Promise-based wide-area bandwidth scheduling and fluid transfer simulation."""

__version__ = "0.1.0"
