"""Table-to-text generation with row/column/time-aware encoding."""

__version__ = "0.1.0"
