"""Deterministic synthetic treebanks with controllable word order.

Each sentence is a transitive main clause in SVO, SOV or VSO order that may
recursively embed one complement (ccomp, filling the object slot) or
adverbial (advcl) clause per level, each introduced by a marker token whose
position — before (PRE) or after (POST) the embedded clause — is the second
axis of variation.  Embedded clauses follow the matrix material in SVO/VSO
and precede it in SOV, so every embedded predicate sits on the expected side
of its head.  Vocabularies are pseudowords suffixed with the rng seed, which
keeps corpora generated under different seeds lexically disjoint and forces
cross-corpus transfer to rely on order cues alone.
"""

import numpy as np

from .conllu import Sentence, Token, Treebank

ORDERS = ("SVO", "SOV", "VSO")
COMP_POSITIONS = ("PRE", "POST")

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


class SynthGrammarConfig:
    """Validated knobs of the generator."""

    def __init__(self, order, comp_position, n_sentences=1000,
                 p_subordinate=0.5, max_depth=2, n_nouns=20, n_verbs=12,
                 n_complementizers=4, n_adverbializers=4, rng_seed=0):
        if order not in ORDERS:
            raise ValueError("order must be one of %s, got %r"
                             % (", ".join(ORDERS), order))
        if comp_position not in COMP_POSITIONS:
            raise ValueError("comp_position must be PRE or POST, got %r"
                             % (comp_position,))
        if n_sentences < 1:
            raise ValueError("n_sentences must be >= 1")
        if not (0.0 <= p_subordinate < 1.0):
            raise ValueError("p_subordinate must be in [0, 1)")
        if max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if min(n_nouns, n_verbs, n_complementizers, n_adverbializers) < 1:
            raise ValueError("vocabulary sizes must be >= 1")
        self.order = order
        self.comp_position = comp_position
        self.n_sentences = n_sentences
        self.p_subordinate = p_subordinate
        self.max_depth = max_depth
        self.n_nouns = n_nouns
        self.n_verbs = n_verbs
        self.n_complementizers = n_complementizers
        self.n_adverbializers = n_adverbializers
        self.rng_seed = rng_seed

    def to_dict(self):
        return {"order": self.order, "comp_position": self.comp_position,
                "n_sentences": self.n_sentences,
                "p_subordinate": self.p_subordinate,
                "max_depth": self.max_depth, "n_nouns": self.n_nouns,
                "n_verbs": self.n_verbs,
                "n_complementizers": self.n_complementizers,
                "n_adverbializers": self.n_adverbializers,
                "rng_seed": self.rng_seed}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class _Node:
    __slots__ = ("form", "upos", "deprel", "parent")

    def __init__(self, form, upos, deprel, parent):
        self.form = form
        self.upos = upos
        self.deprel = deprel
        self.parent = parent


def _pseudoword(rng):
    n_syllables = 2 + int(rng.integers(0, 2))
    return "".join(_CONSONANTS[int(rng.integers(0, len(_CONSONANTS)))]
                   + _VOWELS[int(rng.integers(0, len(_VOWELS)))]
                   for _ in range(n_syllables))


def _vocabulary(rng, size, tag, used):
    words = []
    while len(words) < size:
        word = _pseudoword(rng) + tag
        if word not in used:
            used.add(word)
            words.append(word)
    return words


def _pick(rng, words):
    return words[int(rng.integers(0, len(words)))]


def _gen_clause(rng, cfg, vocab, depth, deprel, parent):
    """One clause as a surface-ordered node list; returns (nodes, verb)."""
    nouns, verbs, comps, advs = vocab
    verb = _Node(None, "VERB", deprel, parent)
    subj = _Node(_pick(rng, nouns), "NOUN", "nsubj", verb)
    verb.form = _pick(rng, verbs)
    embed = depth < cfg.max_depth and rng.random() < cfg.p_subordinate
    emb_type = None
    if embed:
        emb_type = "ccomp" if rng.integers(0, 2) == 0 else "advcl"
    obj = None
    if not (embed and emb_type == "ccomp"):
        obj = _Node(_pick(rng, nouns), "NOUN", "obj", verb)
    emb_seq = []
    if embed:
        markers = comps if emb_type == "ccomp" else advs
        mark = _Node(_pick(rng, markers), "SCONJ", "mark", None)
        clause, emb_verb = _gen_clause(rng, cfg, vocab, depth + 1,
                                       emb_type, verb)
        mark.parent = emb_verb
        if cfg.comp_position == "PRE":
            emb_seq = [mark] + clause
        else:
            emb_seq = clause + [mark]
    core_obj = [obj] if obj is not None else []
    if cfg.order == "SVO":
        nodes = [subj, verb] + core_obj + emb_seq
    elif cfg.order == "VSO":
        nodes = [verb, subj] + core_obj + emb_seq
    else:   # SOV: embedded clause first, verb last
        nodes = emb_seq + [subj] + core_obj + [verb]
    return nodes, verb


def generate_corpus(cfg):
    """Generate a Treebank; identical configs give identical output."""
    rng = np.random.default_rng(cfg.rng_seed)
    tag = format(cfg.rng_seed & 0xFFFFFFFF, "d")
    used = set()
    vocab = (_vocabulary(rng, cfg.n_nouns, tag, used),
             _vocabulary(rng, cfg.n_verbs, tag, used),
             _vocabulary(rng, cfg.n_complementizers, tag, used),
             _vocabulary(rng, cfg.n_adverbializers, tag, used))
    name = "synth-%s-%s-%s" % (cfg.order.lower(), cfg.comp_position.lower(),
                               tag)
    sentences = []
    for index in range(1, cfg.n_sentences + 1):
        nodes, _ = _gen_clause(rng, cfg, vocab, 0, "root", None)
        ids = {node: i for i, node in enumerate(nodes, start=1)}
        tokens = [Token(ids[node], node.form, node.form, node.upos, "_", "_",
                        ids[node.parent] if node.parent is not None else 0,
                        node.deprel, "_", "_")
                  for node in nodes]
        sid = "%s-%04d" % (name, index)
        comments = ["# sent_id = %s" % sid,
                    "# text = %s" % " ".join(node.form for node in nodes)]
        sentences.append(Sentence(tokens, comments))
    return Treebank(sentences, name=name)


def split_corpus(treebank, n_train):
    """First n_train sentences vs the rest, as two named treebanks."""
    if not (0 < n_train < len(treebank.sentences)):
        raise ValueError("n_train must split the corpus in two non-empty "
                         "parts, got %d of %d" % (n_train,
                                                  len(treebank.sentences)))
    base = treebank.name or "synth"
    train = Treebank(treebank.sentences[:n_train], name=base + "-train")
    test = Treebank(treebank.sentences[n_train:], name=base + "-test")
    return train, test
