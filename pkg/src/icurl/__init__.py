"""Tabular concave-utility RL and its inverse problem."""
