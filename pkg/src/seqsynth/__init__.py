"""Self-learning synthesis of small programs for integer sequences."""

__version__ = "0.1.0"
