"""Temporal point process forecasting of hyperedges in dynamic hypergraphs."""
__version__ = "0.1.0"
