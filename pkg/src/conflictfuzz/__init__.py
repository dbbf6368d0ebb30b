"""Two-stage conflict/collision scenario fuzzer for a driving controller."""

__version__ = "0.1.0"
