"""Clause subordination probing toolkit.

Extracts main/subordinate clause predicates from CoNLL-U treebanks, encodes
them (toy trainable transformer or precomputed embedding files), trains small
MLP probes with exact gradients, and analyses cross-treebank transfer together
with word-order typology signals.
"""

__version__ = "0.1.0"
