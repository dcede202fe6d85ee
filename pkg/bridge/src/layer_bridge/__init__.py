"""Layer-distribution server for causal language models."""

__version__ = "0.1.0"
