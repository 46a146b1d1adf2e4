"""Reservoir-computing effective connectivity, directed-graph classification
and edge-level explanations."""

__version__ = "0.1.0"
