"""Binary clause probes: a two-layer MLP with hand-derived gradients.

The probe maps a token vector to MAIN/SUB logits through one tanh hidden
layer.  Training is plain mini-batch gradient descent — no adaptive state —
so runs are exactly reproducible from the rng seed and every gradient can be
verified against central finite differences.  When a toy encoder is trained
jointly, its gradients arrive through toy_encode_backward and both parameter
sets take the same SGD step.
"""

import json
import struct

import numpy as np

from . import encoder as enc
from .taskdata import MAIN, SUB

# class indices used throughout: column 0 = MAIN, column 1 = SUB
CLASSES = (MAIN, SUB)
CLASS_INDEX = {MAIN: 0, SUB: 1}

GRAD_CHECK_STEP = 1e-5
GRAD_CHECK_TOL = 1e-4


class ProbeParams:
    """w1 (dim, hidden), b1 (hidden,), w2 (hidden, 2), b2 (2,)."""

    def __init__(self, w1, b1, w2, b2):
        self.w1, self.b1, self.w2, self.b2 = w1, b1, w2, b2

    @property
    def dim(self):
        return self.w1.shape[0]

    @property
    def hidden_dim(self):
        return self.w1.shape[1]

    def named_arrays(self):
        yield "w1", self.w1
        yield "b1", self.b1
        yield "w2", self.w2
        yield "b2", self.b2

    def copy(self):
        return ProbeParams(self.w1.copy(), self.b1.copy(),
                           self.w2.copy(), self.b2.copy())

    def add_scaled(self, grads, factor):
        for (_, p), (_, g) in zip(self.named_arrays(), grads.named_arrays()):
            p += factor * g


def init_probe(dim, hidden_dim, rng):
    """Uniform +-1/sqrt(fan_in) weights, zero biases; draws w1 then w2."""
    s1 = 1.0 / np.sqrt(dim)
    s2 = 1.0 / np.sqrt(hidden_dim)
    return ProbeParams(
        rng.uniform(-s1, s1, size=(dim, hidden_dim)),
        np.zeros(hidden_dim),
        rng.uniform(-s2, s2, size=(hidden_dim, 2)),
        np.zeros(2),
    )


def probe_forward(params, x):
    """Logits and softmax probabilities for a (n, dim) batch (or one vector)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    hidden = np.tanh(x @ params.w1 + params.b1)
    logits = hidden @ params.w2 + params.b2
    shifted = logits - logits.max(axis=1, keepdims=True)
    expo = np.exp(shifted)
    probs = expo / expo.sum(axis=1, keepdims=True)
    return logits, probs


def _loss_forward_backward(params, x, y):
    """Mean NLL plus gradients wrt parameters and inputs."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    n = x.shape[0]
    hidden = np.tanh(x @ params.w1 + params.b1)
    logits = hidden @ params.w2 + params.b2
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    loss = -log_probs[np.arange(n), y].mean()
    dlogits = np.exp(log_probs)
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    dw2 = hidden.T @ dlogits
    db2 = dlogits.sum(axis=0)
    dhidden = dlogits @ params.w2.T
    dz = dhidden * (1.0 - hidden * hidden)
    dw1 = x.T @ dz
    db1 = dz.sum(axis=0)
    dx = dz @ params.w1.T
    return loss, ProbeParams(dw1, db1, dw2, db2), dx


def loss_and_grad(params, x, y):
    """Mean cross-entropy over a batch and exact parameter gradients."""
    loss, grads, _ = _loss_forward_backward(params, x, y)
    return loss, grads


def batch_loss(params, x, y):
    """Loss only (used by the finite-difference checker)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    hidden = np.tanh(x @ params.w1 + params.b1)
    logits = hidden @ params.w2 + params.b2
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return -log_probs[np.arange(x.shape[0]), y].mean()


def gradient_check(params, x, y, step=GRAD_CHECK_STEP):
    """Max relative error between analytic and central-difference gradients.

    Perturbs every component of every parameter tensor in 64-bit precision.
    """
    _, grads = loss_and_grad(params, x, y)
    worst = 0.0
    for (_, tensor), (_, analytic) in zip(params.named_arrays(),
                                          grads.named_arrays()):
        flat = tensor.reshape(-1)
        aflat = analytic.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            up = batch_loss(params, x, y)
            flat[i] = keep - step
            down = batch_loss(params, x, y)
            flat[i] = keep
            numeric = (up - down) / (2.0 * step)
            denom = max(abs(aflat[i]), abs(numeric), 1e-6)
            worst = max(worst, abs(aflat[i] - numeric) / denom)
    return worst


def predict(params, x):
    """MAIN/SUB labels; a tie at exactly equal logits resolves to SUB."""
    logits, _ = probe_forward(params, x)
    return [SUB if logits[i, 1] >= logits[i, 0] else MAIN
            for i in range(logits.shape[0])]


def predict_proba(params, x):
    return probe_forward(params, x)[1]


def accuracy(params, x, y):
    labels = predict(params, x)
    y = np.asarray(y, dtype=np.int64)
    hits = sum(1 for i, lab in enumerate(labels) if CLASS_INDEX[lab] == y[i])
    return hits / max(len(labels), 1)


class ClauseDataset:
    """Examples plus the material needed to vectorize them.

    Either fixed vectors (one row per example) or, for joint encoder
    training, the token forms of every referenced sentence.
    """

    def __init__(self, examples, labels, vectors=None, forms_by_sid=None):
        self.examples = list(examples)
        self.y = np.asarray(labels, dtype=np.int64)
        self.vectors = vectors
        self.forms_by_sid = forms_by_sid

    @classmethod
    def from_table(cls, examples, table):
        """Fixed vectors looked up in an EmbeddingTable (float64 copies)."""
        rows = [table.vector(ex.sent_id, ex.predicate_index) for ex in examples]
        x = (np.stack(rows).astype(np.float64) if rows
             else np.zeros((0, table.dim)))
        y = [CLASS_INDEX[ex.label] for ex in examples]
        return cls(examples, y, vectors=x)

    @classmethod
    def from_treebank(cls, examples, treebank):
        """Sentence-backed dataset for the toy encoder."""
        forms = {}
        for index, sent in enumerate(treebank.sentences, start=1):
            sid = sent.sent_id if sent.sent_id is not None else str(index)
            forms[sid] = [t.form for t in sent.tokens]
        missing = [ex.sent_id for ex in examples if ex.sent_id not in forms]
        if missing:
            raise KeyError("examples reference sentences missing from the "
                           "treebank: %s" % sorted(set(missing))[:5])
        y = [CLASS_INDEX[ex.label] for ex in examples]
        return cls(examples, y, forms_by_sid=forms)

    def __len__(self):
        return len(self.examples)

    def fixed_vectors(self, encoder_params=None):
        """Vector matrix under a frozen encoding (computes once if needed)."""
        if self.vectors is not None:
            return self.vectors
        if encoder_params is None:
            raise ValueError("dataset has no vectors and no encoder was given")
        if not self.examples:
            return np.zeros((0, encoder_params.config.dim))
        encoded = {}
        for ex in self.examples:
            if ex.sent_id not in encoded:
                encoded[ex.sent_id] = enc.toy_encode(
                    encoder_params, self.forms_by_sid[ex.sent_id])[0]
        return np.stack([encoded[ex.sent_id][ex.predicate_index - 1]
                         for ex in self.examples])


class TrainConfig:
    """Knobs of the SGD loop; hidden_dim=None means same as the input dim."""

    def __init__(self, epochs=5, batch_size=32, learning_rate=1e-3,
                 hidden_dim=None, rng_seed=0, train_encoder=False,
                 select_best_on_validation=True):
        if epochs < 1 or batch_size < 1 or learning_rate < 0:
            raise ValueError("epochs/batch_size must be >= 1 and "
                             "learning_rate >= 0")
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.hidden_dim = hidden_dim
        self.rng_seed = rng_seed
        self.train_encoder = train_encoder
        self.select_best_on_validation = select_best_on_validation

    def to_dict(self):
        return {"epochs": self.epochs, "batch_size": self.batch_size,
                "learning_rate": self.learning_rate,
                "hidden_dim": self.hidden_dim, "rng_seed": self.rng_seed,
                "train_encoder": self.train_encoder,
                "select_best_on_validation": self.select_best_on_validation}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class TrainResult:
    """Selected parameters plus the per-epoch dev-accuracy history."""

    def __init__(self, probe, encoder_params, history, best_epoch):
        self.probe = probe
        self.encoder_params = encoder_params
        self.history = history
        self.best_epoch = best_epoch


def _dataset_vectors(dataset, encoder_params):
    if dataset.vectors is not None:
        return dataset.vectors
    return dataset.fixed_vectors(encoder_params)


def train(train_set, dev_set, cfg, encoder_params=None):
    """Mini-batch gradient descent, optionally through the toy encoder.

    Draw order from cfg.rng_seed: probe init (w1 then w2), then one index
    permutation per epoch — so equal seeds give bit-identical runs.  With
    select_best_on_validation the parameters of the best dev epoch are
    returned (earliest epoch wins ties); otherwise the final parameters.
    """
    if cfg.select_best_on_validation and dev_set is None:
        raise ValueError("select_best_on_validation requires a dev set")
    if cfg.train_encoder:
        if encoder_params is None:
            raise ValueError("train_encoder=True but no encoder parameters")
        if train_set.forms_by_sid is None:
            raise ValueError("joint encoder training needs a sentence-backed "
                             "dataset (ClauseDataset.from_treebank)")
        encoder_params = encoder_params.copy()
        dim = encoder_params.config.dim
        x_fixed = None
    else:
        x_fixed = _dataset_vectors(train_set, encoder_params)
        dim = x_fixed.shape[1]
    hidden_dim = cfg.hidden_dim if cfg.hidden_dim else dim
    rng = np.random.default_rng(cfg.rng_seed)
    probe = init_probe(dim, hidden_dim, rng)
    lr = cfg.learning_rate
    y = train_set.y
    n = len(train_set)
    history = []
    best = None
    best_epoch = None
    dev_x_frozen = None
    if dev_set is not None and not cfg.train_encoder:
        dev_x_frozen = _dataset_vectors(dev_set, encoder_params)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            if cfg.train_encoder:
                loss = _joint_step(probe, encoder_params, train_set, idx, lr)
            else:
                loss, grads = loss_and_grad(probe, x_fixed[idx], y[idx])
                probe.add_scaled(grads, -lr)
            if not np.isfinite(loss):
                raise FloatingPointError(
                    "training aborted: loss became %r at epoch %d, batch "
                    "starting at %d" % (loss, epoch, start))
        if dev_set is not None:
            dev_x = dev_x_frozen if dev_x_frozen is not None \
                else dev_set.fixed_vectors(encoder_params)
            acc = accuracy(probe, dev_x, dev_set.y)
            history.append(acc)
            if cfg.select_best_on_validation and (best is None or acc > best[0]):
                best = (acc, probe.copy(),
                        encoder_params.copy() if cfg.train_encoder else encoder_params)
                best_epoch = epoch
    if cfg.select_best_on_validation:
        _, probe, encoder_params = best
    else:
        best_epoch = cfg.epochs - 1
    return TrainResult(probe, encoder_params, history, best_epoch)


def _joint_step(probe, encoder_params, train_set, idx, lr):
    """One SGD step where gradients flow through toy_encode."""
    examples = train_set.examples
    by_sid = {}
    for row, i in enumerate(idx):
        by_sid.setdefault(examples[i].sent_id, []).append(row)
    encoded = {}
    for sid in by_sid:
        vectors, _, cache = enc.toy_encode(
            encoder_params, train_set.forms_by_sid[sid], return_cache=True)
        encoded[sid] = (vectors, cache)
    x = np.stack([encoded[examples[i].sent_id][0][examples[i].predicate_index - 1]
                  for i in idx])
    loss, grads, dx = _loss_forward_backward(probe, x, train_set.y[idx])
    enc_grads = enc.zero_toy_grads(encoder_params)
    for sid, rows in by_sid.items():
        vectors, cache = encoded[sid]
        d_out = np.zeros_like(vectors)
        for row in rows:
            ex = examples[idx[row]]
            d_out[ex.predicate_index - 1] += dx[row]
        sent_grads = enc.toy_encode_backward(encoder_params, cache, d_out)
        enc_grads.add_scaled(sent_grads, 1.0)
    probe.add_scaled(grads, -lr)
    encoder_params.add_scaled(enc_grads, -lr)
    return loss


# ---------------------------------------------------------------------------
# checkpoints: length-prefixed JSON header + float32 little-endian blocks
# in declared order (w1, b1, w2, b2, then encoder arrays if present)


def save_checkpoint(path, probe, backend, seed, train_config,
                    encoder_params=None):
    header = {"dim": probe.dim, "hidden_dim": probe.hidden_dim,
              "backend": backend, "seed": seed,
              "config": train_config.to_dict()}
    if encoder_params is not None:
        header["encoder"] = encoder_params.config.to_dict()
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as out:
        out.write(struct.pack("<I", len(blob)))
        out.write(blob)
        for _, arr in probe.named_arrays():
            out.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        if encoder_params is not None:
            for _, arr in encoder_params.named_arrays():
                out.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_block(handle, shape):
    count = int(np.prod(shape, dtype=np.int64))
    data = handle.read(4 * count)
    if len(data) != 4 * count:
        raise ValueError("truncated checkpoint: wanted %d floats" % count)
    return np.frombuffer(data, dtype="<f4").astype(np.float64).reshape(shape)


def load_checkpoint(path):
    """Returns (probe, encoder_params or None, header dict)."""
    with open(path, "rb") as handle:
        (header_len,) = struct.unpack("<I", handle.read(4))
        header = json.loads(handle.read(header_len).decode("utf-8"))
        dim, hidden = header["dim"], header["hidden_dim"]
        probe = ProbeParams(_read_block(handle, (dim, hidden)),
                            _read_block(handle, (hidden,)),
                            _read_block(handle, (hidden, 2)),
                            _read_block(handle, (2,)))
        encoder_params = None
        if "encoder" in header:
            cfg = enc.ToyEncoderConfig.from_dict(header["encoder"])
            template = enc.init_toy_encoder(cfg)
            arrays = [_read_block(handle, arr.shape)
                      for _, arr in template.named_arrays()]
            it = iter(arrays)
            embedding = next(it)
            layers = [enc.ToyLayerParams(*(next(it) for _ in range(8)))
                      for _ in range(cfg.n_layers)]
            encoder_params = enc.ToyEncoderParams(cfg, embedding, layers)
    return probe, encoder_params, header
