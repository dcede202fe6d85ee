"""Unsupervised RAG training-data construction and retrieval-robustness evaluation."""

__version__ = "0.1.0"

# Version of the on-disk record/manifest layout, bumped on breaking changes.
SCHEMA_VERSION = 1
