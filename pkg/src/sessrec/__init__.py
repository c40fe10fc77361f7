"""Session-based recommendation with gated graph networks and normalized embeddings."""

__version__ = "0.1.0"
