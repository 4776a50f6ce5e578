"""Writer for the clauseprobe binary embedding format.

Little-endian throughout: 8-byte magic, a u32x5 header (version, dim,
n_layers, n_heads, flags with bit 0 marking attention blocks), then one
record per sentence: u32 sent_id byte length + UTF-8 sent_id, u32 n_tokens,
u32 n_subwords, n_tokens u32 first-subword indices, n_tokens*dim float32
vectors and, when the attention flag is set, n_layers*n_heads*n_subwords^2
float32 attention weights.
"""

import struct

import numpy as np

MAGIC = b"CLPRB1\x00\x00"
FORMAT_VERSION = 1
FLAG_ATTENTION = 1


class BinWriter:
    def __init__(self, path, dim, n_layers, n_heads, attention):
        self.dim = dim
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.attention = attention
        self.file = open(path, "wb")
        self.file.write(MAGIC)
        self.file.write(struct.pack("<5I", FORMAT_VERSION, dim, n_layers,
                                    n_heads, FLAG_ATTENTION if attention
                                    else 0))

    def add(self, sent_id, first_subword, vectors, n_subwords,
            attention=None):
        vectors = np.ascontiguousarray(vectors, dtype="<f4")
        n_tokens = vectors.shape[0]
        if vectors.shape != (n_tokens, self.dim):
            raise ValueError("vectors for %r have shape %s, expected (%d, %d)"
                             % (sent_id, vectors.shape, n_tokens, self.dim))
        first = list(first_subword)
        if len(first) != n_tokens:
            raise ValueError("%r: %d first-subword indices for %d tokens"
                             % (sent_id, len(first), n_tokens))
        prev = 0
        for index in first:
            if not (0 <= index < n_subwords):
                raise ValueError("%r: first-subword index %d outside 0..%d"
                                 % (sent_id, index, n_subwords - 1))
            if index < prev:
                raise ValueError("%r: first-subword indices decrease"
                                 % sent_id)
            prev = index
        if self.attention:
            want = (self.n_layers, self.n_heads, n_subwords, n_subwords)
            attention = np.ascontiguousarray(attention, dtype="<f4")
            if attention.shape != want:
                raise ValueError("attention for %r has shape %s, expected %s"
                                 % (sent_id, attention.shape, want))
        elif attention is not None:
            raise ValueError("writer opened without attention blocks")
        sid = sent_id.encode("utf-8")
        self.file.write(struct.pack("<I", len(sid)))
        self.file.write(sid)
        self.file.write(struct.pack("<II", n_tokens, n_subwords))
        self.file.write(np.asarray(first, dtype="<u4").tobytes())
        self.file.write(vectors.tobytes())
        if self.attention:
            self.file.write(attention.tobytes())

    def close(self):
        self.file.close()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()
        return False
