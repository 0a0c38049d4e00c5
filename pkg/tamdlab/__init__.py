"""numerical laboratory for temperature-accelerated molecular dynamics"""

__version__ = "1.0"
