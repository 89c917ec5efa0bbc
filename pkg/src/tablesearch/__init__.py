"""Self-supervised table discovery with natural-language questions."""

__version__ = "0.1.0"
