"""Hybrid Seq2Seq / nearest-neighbour task-oriented dialog workbench."""

__version__ = "0.1.0"
