"""Sentence encoders and the binary embedding interchange format.

Two ways to obtain per-token vectors:

* an embedding file written by an external exporter (one vector per token,
  optionally per-layer/per-head attention over subwords), loaded into an
  EmbeddingTable;
* a small trainable transformer ("toy encoder") over hashed word forms plus
  fixed sinusoidal position encodings, with an exact hand-written backward
  pass so its parameters can be trained jointly with a probe.

Binary layout (all integers little-endian uint32, floats little-endian
float32):

    magic   8 bytes  "CLPRB1\\0\\0"
    header  version=1, dim, n_layers, n_heads, flags (bit 0: attention blocks)
    per sentence, until end of file:
        sent_id_len, sent_id (UTF-8)
        n_tokens, n_subwords
        n_tokens   uint32   first-subword index per token
        n_tokens*dim        float32 token vectors
        n_layers*n_heads*n_subwords^2 float32 attention, layer-major then
                            head-major then query-row-major (if flag bit 0)
"""

import struct
import zlib

import numpy as np

MAGIC = b"CLPRB1\x00\x00"
FORMAT_VERSION = 1
FLAG_ATTENTION = 1

# loader tolerance for float32-stored attention rows; the toy encoder itself
# is checked against the tighter 1e-5 in float64
ATTENTION_ROW_SUM_TOL = 1e-4


class EmbeddingFormatError(ValueError):
    """Malformed embedding file; message carries the byte offset."""

    def __init__(self, message, offset):
        super().__init__("%s (at byte offset %d)" % (message, offset))
        self.offset = offset


class SentenceEmbedding:
    """Vectors and optional attention for one sentence."""

    __slots__ = ("sent_id", "first_subword", "vectors", "attention")

    def __init__(self, sent_id, first_subword, vectors, attention=None):
        self.sent_id = sent_id
        self.first_subword = first_subword
        self.vectors = vectors
        self.attention = attention

    @property
    def n_tokens(self):
        return self.vectors.shape[0]


class EmbeddingTable:
    """All sentence embeddings of one export, addressed by sent_id."""

    def __init__(self, dim, n_layers, n_heads, has_attention):
        self.dim = dim
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.has_attention = has_attention
        self.sentences = {}

    def add(self, sentence_embedding):
        sid = sentence_embedding.sent_id
        if sid in self.sentences:
            raise ValueError("duplicate sent_id %r in embedding table" % sid)
        self.sentences[sid] = sentence_embedding

    def __contains__(self, sent_id):
        return sent_id in self.sentences

    def __len__(self):
        return len(self.sentences)

    def get(self, sent_id):
        try:
            return self.sentences[sent_id]
        except KeyError:
            raise KeyError("no embeddings for sent_id %r" % sent_id) from None

    def vector(self, sent_id, predicate_index):
        """Token vector for a 1-based token id."""
        sent = self.get(sent_id)
        if not (1 <= predicate_index <= sent.n_tokens):
            raise IndexError("token id %d outside 1..%d for sent_id %r"
                             % (predicate_index, sent.n_tokens, sent_id))
        return sent.vectors[predicate_index - 1]

    def attention(self, sent_id):
        return self.get(sent_id).attention


class EmbeddingWriter:
    """Streams sentence embeddings into the binary format."""

    def __init__(self, path, dim, n_layers, n_heads, attention):
        self.dim = dim
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.attention = bool(attention)
        self.file = open(path, "wb")
        self.file.write(MAGIC)
        flags = FLAG_ATTENTION if self.attention else 0
        self.file.write(struct.pack("<5I", FORMAT_VERSION, dim, n_layers,
                                    n_heads, flags))

    def add(self, sent_id, first_subword, vectors, attention=None):
        vectors = np.asarray(vectors, dtype="<f4")
        n_tokens = vectors.shape[0]
        if vectors.ndim != 2 or vectors.shape[1] != self.dim:
            raise ValueError("expected vectors of shape (n_tokens, %d), got %s"
                             % (self.dim, vectors.shape))
        first = np.asarray(first_subword, dtype="<u4")
        if first.shape != (n_tokens,):
            raise ValueError("need one first-subword index per token")
        sid = sent_id.encode("utf-8")
        out = self.file
        out.write(struct.pack("<I", len(sid)))
        out.write(sid)
        if self.attention:
            attention = np.asarray(attention, dtype="<f4")
            n_subwords = attention.shape[-1]
            want = (self.n_layers, self.n_heads, n_subwords, n_subwords)
            if attention.shape != want:
                raise ValueError("expected attention of shape %s, got %s"
                                 % (want, attention.shape))
        elif attention is not None:
            raise ValueError("writer opened without attention flag")
        else:
            n_subwords = int(first.max()) + 1 if n_tokens else 0
        out.write(struct.pack("<II", n_tokens, n_subwords))
        out.write(first.tobytes())
        out.write(vectors.tobytes())
        if self.attention:
            out.write(attention.tobytes())

    def close(self):
        self.file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class EmbeddingReader:
    """Reads and validates the binary format, tracking byte offsets."""

    def __init__(self, path):
        self.file = open(path, "rb")
        self.offset = 0

    def _read(self, n, what):
        data = self.file.read(n)
        if len(data) != n:
            raise EmbeddingFormatError(
                "truncated file: wanted %d bytes for %s, got %d"
                % (n, what, len(data)), self.offset)
        self.offset += n
        return data

    def _read_u32(self, what):
        return struct.unpack("<I", self._read(4, what))[0]

    def read_table(self):
        magic = self._read(len(MAGIC), "magic")
        if magic != MAGIC:
            raise EmbeddingFormatError("bad magic %r" % magic, 0)
        version = self._read_u32("version")
        if version != FORMAT_VERSION:
            raise EmbeddingFormatError("unsupported version %d" % version, 8)
        dim = self._read_u32("dim")
        n_layers = self._read_u32("n_layers")
        n_heads = self._read_u32("n_heads")
        flags = self._read_u32("flags")
        if flags & ~FLAG_ATTENTION:
            raise EmbeddingFormatError("unknown flag bits 0x%x" % flags,
                                       self.offset - 4)
        has_attention = bool(flags & FLAG_ATTENTION)
        table = EmbeddingTable(dim, n_layers, n_heads, has_attention)
        while True:
            head = self.file.read(4)
            if len(head) == 0:
                break
            if len(head) != 4:
                raise EmbeddingFormatError(
                    "truncated file: wanted 4 bytes for sent_id length, got %d"
                    % len(head), self.offset)
            self.offset += 4
            (sid_len,) = struct.unpack("<I", head)
            sent_id = self._read(sid_len, "sent_id").decode("utf-8")
            table.add(self._read_sentence(sent_id, table))
        self.file.close()
        return table

    def _read_sentence(self, sent_id, table):
        n_tokens = self._read_u32("n_tokens")
        n_subwords = self._read_u32("n_subwords")
        first_off = self.offset
        first = np.frombuffer(
            self._read(4 * n_tokens, "first-subword indices"), dtype="<u4")
        if n_tokens and n_subwords == 0:
            raise EmbeddingFormatError(
                "sentence %r has tokens but zero subwords" % sent_id, first_off)
        if np.any(first >= max(n_subwords, 1)):
            raise EmbeddingFormatError(
                "sentence %r: first-subword index out of range (>= %d)"
                % (sent_id, n_subwords), first_off)
        if np.any(np.diff(first.astype(np.int64)) < 0):
            raise EmbeddingFormatError(
                "sentence %r: first-subword indices decrease" % sent_id,
                first_off)
        vectors = np.frombuffer(
            self._read(4 * n_tokens * table.dim, "token vectors"),
            dtype="<f4").reshape(n_tokens, table.dim)
        attention = None
        if table.has_attention:
            attn_off = self.offset
            count = table.n_layers * table.n_heads * n_subwords * n_subwords
            attention = np.frombuffer(
                self._read(4 * count, "attention"), dtype="<f4").reshape(
                    table.n_layers, table.n_heads, n_subwords, n_subwords)
            if n_subwords:
                sums = attention.sum(axis=3, dtype=np.float64)
                if np.any(np.abs(sums - 1.0) > ATTENTION_ROW_SUM_TOL):
                    raise EmbeddingFormatError(
                        "sentence %r: attention rows do not sum to 1"
                        % sent_id, attn_off)
        return SentenceEmbedding(sent_id, first, vectors, attention)


def write_embedding_file(path, table):
    """Serialize an EmbeddingTable (insertion order preserved)."""
    with EmbeddingWriter(path, table.dim, table.n_layers, table.n_heads,
                         table.has_attention) as writer:
        for sent in table.sentences.values():
            writer.add(sent.sent_id, sent.first_subword, sent.vectors,
                       sent.attention)


def read_embedding_file(path):
    return EmbeddingReader(path).read_table()


# ---------------------------------------------------------------------------
# toy trainable encoder


def hash_form(form, buckets):
    """Stable vocabulary hash (crc32 of the UTF-8 form, modulo buckets)."""
    return zlib.crc32(form.encode("utf-8")) % buckets


def position_encoding(n, dim):
    """Fixed sinusoidal positions: sin on even components, cos on odd."""
    pos = np.arange(n, dtype=np.float64)[:, None]
    idx = np.arange(0, dim, 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, idx / dim)
    pe = np.zeros((n, dim), dtype=np.float64)
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)[:, : dim // 2]   # one column fewer when dim is odd
    return pe


class ToyEncoderConfig:
    """Hyperparameters of the toy encoder."""

    def __init__(self, dim=32, n_layers=2, n_heads=4, vocab_hash_buckets=64,
                 rng_seed=0):
        if dim <= 0 or n_layers <= 0 or n_heads <= 0 or vocab_hash_buckets <= 0:
            raise ValueError("all toy encoder sizes must be positive")
        if dim % n_heads != 0:
            raise ValueError("dim (%d) must be divisible by n_heads (%d)"
                             % (dim, n_heads))
        self.dim = dim
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.vocab_hash_buckets = vocab_hash_buckets
        self.rng_seed = rng_seed

    def to_dict(self):
        return {"dim": self.dim, "n_layers": self.n_layers,
                "n_heads": self.n_heads,
                "vocab_hash_buckets": self.vocab_hash_buckets,
                "rng_seed": self.rng_seed}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class ToyLayerParams:
    __slots__ = ("wq", "wk", "wv", "wo", "w1", "b1", "w2", "b2")

    def __init__(self, wq, wk, wv, wo, w1, b1, w2, b2):
        self.wq, self.wk, self.wv, self.wo = wq, wk, wv, wo
        self.w1, self.b1, self.w2, self.b2 = w1, b1, w2, b2


class ToyEncoderParams:
    """Embedding matrix plus per-layer attention and feed-forward weights.

    Parameter order (used for checkpoints, SGD updates and gradients):
    embedding, then per layer wq, wk, wv, wo, w1, b1, w2, b2.
    """

    def __init__(self, config, embedding, layers):
        self.config = config
        self.embedding = embedding
        self.layers = layers

    def named_arrays(self):
        yield "embedding", self.embedding
        for i, layer in enumerate(self.layers):
            for name in ToyLayerParams.__slots__:
                yield "layer%d.%s" % (i, name), getattr(layer, name)

    def copy(self):
        layers = [ToyLayerParams(*(getattr(l, n).copy()
                                   for n in ToyLayerParams.__slots__))
                  for l in self.layers]
        return ToyEncoderParams(self.config, self.embedding.copy(), layers)

    def add_scaled(self, grads, factor):
        """In-place p += factor * g for every parameter array."""
        for (_, p), (_, g) in zip(self.named_arrays(), grads.named_arrays()):
            p += factor * g


def init_toy_encoder(config):
    """Seeded parameter draw; embeddings U[-1,1], matrices U[+-1/sqrt(fan_in)]."""
    rng = np.random.default_rng(config.rng_seed)
    d = config.dim
    embedding = rng.uniform(-1.0, 1.0, size=(config.vocab_hash_buckets, d))
    layers = []
    for _ in range(config.n_layers):
        s = 1.0 / np.sqrt(d)
        sf = 1.0 / np.sqrt(4 * d)
        layers.append(ToyLayerParams(
            wq=rng.uniform(-s, s, size=(d, d)),
            wk=rng.uniform(-s, s, size=(d, d)),
            wv=rng.uniform(-s, s, size=(d, d)),
            wo=rng.uniform(-s, s, size=(d, d)),
            w1=rng.uniform(-s, s, size=(d, 4 * d)),
            b1=np.zeros(4 * d),
            w2=rng.uniform(-sf, sf, size=(4 * d, d)),
            b2=np.zeros(d),
        ))
    return ToyEncoderParams(config, embedding, layers)


def zero_toy_grads(params):
    layers = [ToyLayerParams(*(np.zeros_like(getattr(l, n))
                               for n in ToyLayerParams.__slots__))
              for l in params.layers]
    return ToyEncoderParams(params.config, np.zeros_like(params.embedding),
                            layers)


def _split_heads(x, n_heads):
    n, d = x.shape
    return x.reshape(n, n_heads, d // n_heads).transpose(1, 0, 2)


def _merge_heads(x):
    h, n, dh = x.shape
    return x.transpose(1, 0, 2).reshape(n, h * dh)


def toy_encode(params, forms, return_cache=False):
    """Encode a token sequence.

    Returns (vectors, attention): final-layer token vectors of shape (n, dim)
    and the softmax attention of every layer and head, shape
    (n_layers, n_heads, n, n) with rows over key positions summing to 1.
    With return_cache=True a third element carries the intermediates needed
    by toy_encode_backward.
    """
    cfg = params.config
    n = len(forms)
    buckets = np.array([hash_form(f, cfg.vocab_hash_buckets) for f in forms],
                       dtype=np.int64)
    x = params.embedding[buckets] + position_encoding(n, cfg.dim)
    attention = np.zeros((cfg.n_layers, cfg.n_heads, n, n))
    scale = 1.0 / np.sqrt(cfg.dim // cfg.n_heads)
    caches = []
    for li, layer in enumerate(params.layers):
        x_in = x
        q = _split_heads(x_in @ layer.wq, cfg.n_heads)
        k = _split_heads(x_in @ layer.wk, cfg.n_heads)
        v = _split_heads(x_in @ layer.wv, cfg.n_heads)
        scores = np.matmul(q, k.transpose(0, 2, 1)) * scale
        scores -= scores.max(axis=2, keepdims=True)
        expo = np.exp(scores)
        attn = expo / expo.sum(axis=2, keepdims=True)
        attention[li] = attn
        ctx = _merge_heads(np.matmul(attn, v))
        x_mid = x_in + ctx @ layer.wo
        z = x_mid @ layer.w1 + layer.b1
        hidden = np.tanh(z)
        x = x_mid + hidden @ layer.w2 + layer.b2
        if return_cache:
            caches.append((x_in, q, k, v, attn, ctx, x_mid, hidden))
    if return_cache:
        return x, attention, (buckets, caches)
    return x, attention


def toy_encode_backward(params, cache, d_out):
    """Gradients of a scalar loss wrt all encoder parameters.

    d_out is the loss gradient at the encoder output, shape (n, dim); returns
    a ToyEncoderParams-shaped gradient container.
    """
    cfg = params.config
    buckets, caches = cache
    grads = zero_toy_grads(params)
    scale = 1.0 / np.sqrt(cfg.dim // cfg.n_heads)
    dx = np.asarray(d_out, dtype=np.float64).copy()
    for li in range(cfg.n_layers - 1, -1, -1):
        layer = params.layers[li]
        glayer = grads.layers[li]
        x_in, q, k, v, attn, ctx, x_mid, hidden = caches[li]
        # feed-forward block: x = x_mid + tanh(x_mid w1 + b1) w2 + b2
        glayer.w2 += hidden.T @ dx
        glayer.b2 += dx.sum(axis=0)
        dhidden = dx @ layer.w2.T
        dz = dhidden * (1.0 - hidden * hidden)
        glayer.w1 += x_mid.T @ dz
        glayer.b1 += dz.sum(axis=0)
        dx_mid = dx + dz @ layer.w1.T
        # attention block: x_mid = x_in + merge(attn @ v) wo
        dctx_merged = dx_mid @ layer.wo.T
        glayer.wo += ctx.T @ dx_mid
        dctx = _split_heads(dctx_merged, cfg.n_heads)
        dattn = np.matmul(dctx, v.transpose(0, 2, 1))
        dv = np.matmul(attn.transpose(0, 2, 1), dctx)
        # softmax backward per query row
        dscores = attn * (dattn - (dattn * attn).sum(axis=2, keepdims=True))
        dq = np.matmul(dscores, k) * scale
        dk = np.matmul(dscores.transpose(0, 2, 1), q) * scale
        dq_m, dk_m, dv_m = (_merge_heads(a) for a in (dq, dk, dv))
        glayer.wq += x_in.T @ dq_m
        glayer.wk += x_in.T @ dk_m
        glayer.wv += x_in.T @ dv_m
        dx = dx_mid + dq_m @ layer.wq.T + dk_m @ layer.wk.T + dv_m @ layer.wv.T
    np.add.at(grads.embedding, buckets, dx)
    return grads


def encode_sentence(params, sentence):
    """toy_encode over a parsed sentence's token forms."""
    return toy_encode(params, [t.form for t in sentence.tokens])


def encode_treebank(params, treebank, attention=True):
    """Run the toy encoder over a treebank into an EmbeddingTable.

    Every token is its own subword (first_subword is the identity mapping).
    """
    cfg = params.config
    table = EmbeddingTable(cfg.dim, cfg.n_layers, cfg.n_heads, attention)
    for index, sent in enumerate(treebank.sentences, start=1):
        sid = sent.sent_id if sent.sent_id is not None else str(index)
        vectors, attn = encode_sentence(params, sent)
        table.add(SentenceEmbedding(
            sid, np.arange(len(sent.tokens), dtype=np.uint32),
            vectors.astype(np.float32),
            attn.astype(np.float32) if attention else None))
    return table
