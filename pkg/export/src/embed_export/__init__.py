"""Transformer embedding exporter for CoNLL-U treebanks.

Writes per-token last-layer vectors (first-subword selection, character
offset alignment) and optional attention tensors in the clauseprobe binary
embedding format, plus a JSON report of skipped sentences.
"""

__version__ = "0.1.0"
