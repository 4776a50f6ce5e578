"""Clause-classification dataset extraction from dependency treebanks.

Every clausal predicate becomes one binary example: MAIN for tokens whose
base relation is "root", SUB for tokens attached as acl, ccomp, advcl, csubj
or xcomp (relation subtypes such as "acl:relcl" count toward their base).
Also provides subword alignment between treebank tokens and the character
spans produced by an external subword tokenizer.
"""

import json

MAIN = "MAIN"
SUB = "SUB"
LABELS = (MAIN, SUB)

# base dependency relations that mark a subordinate clause predicate
SUB_DEPRELS = frozenset(["acl", "ccomp", "advcl", "csubj", "xcomp"])


class AlignmentError(ValueError):
    """Token/subword alignment failure; message names the offending token."""


class ClauseExample:
    """One predicate to classify, addressed by treebank, sentence and token id."""

    __slots__ = ("treebank", "sent_id", "predicate_index", "label", "source_deprel")

    def __init__(self, treebank, sent_id, predicate_index, label, source_deprel):
        self.treebank = treebank
        self.sent_id = sent_id
        self.predicate_index = predicate_index
        self.label = label
        self.source_deprel = source_deprel

    def to_record(self):
        return {"treebank": self.treebank,
                "sent_id": self.sent_id,
                "predicate_index": self.predicate_index,
                "label": self.label,
                "source_deprel": self.source_deprel}

    @classmethod
    def from_record(cls, record):
        return cls(record["treebank"], record["sent_id"],
                   int(record["predicate_index"]), record["label"],
                   record["source_deprel"])

    def __eq__(self, other):
        return (isinstance(other, ClauseExample)
                and self.to_record() == other.to_record())

    def __repr__(self):
        return "ClauseExample(%r, %r, %d, %s, %r)" % (
            self.treebank, self.sent_id, self.predicate_index,
            self.label, self.source_deprel)


def label_for_deprel(deprel):
    """MAIN / SUB / None for a raw dependency relation label."""
    base = deprel.split(":")[0]
    if base == "root":
        return MAIN
    if base in SUB_DEPRELS:
        return SUB
    return None


def extract_examples(treebank, name=None):
    """All clause examples of a treebank, in corpus order.

    Sentences without a sent_id comment are addressed by their 1-based
    position rendered as a string.
    """
    tb_name = name if name is not None else (treebank.name or "")
    examples = []
    for index, sent in enumerate(treebank.sentences, start=1):
        sid = sent.sent_id if sent.sent_id is not None else str(index)
        for tok in sent.tokens:
            label = label_for_deprel(tok.deprel)
            if label is not None:
                examples.append(ClauseExample(tb_name, sid, tok.id, label,
                                              tok.deprel))
    return examples


def gold_counts(examples):
    """(n_main, n_sub) over a list of examples."""
    n_main = sum(1 for ex in examples if ex.label == MAIN)
    return n_main, len(examples) - n_main


def write_examples_jsonl(examples, path):
    """One JSON object per line, UTF-8."""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for ex in examples:
            handle.write(json.dumps(ex.to_record(), ensure_ascii=False))
            handle.write("\n")


def read_examples_jsonl(path):
    examples = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                examples.append(ClauseExample.from_record(json.loads(line)))
    return examples


def token_char_spans(sentence):
    """Character span (start, end) of each token within the sentence text.

    Words covered by a multiword token all receive the surface range of that
    multiword form, since only the surface form occurs in the text.  Raises
    AlignmentError when the text metadata is missing or a form cannot be
    located left-to-right.
    """
    text = sentence.text
    if text is None:
        raise AlignmentError("sentence %r has no text metadata" % sentence.sent_id)
    mwt_by_start = {m.start: m for m in sentence.multiword_tokens}
    spans = [None] * len(sentence.tokens)
    cursor = 0
    pos = 0
    tokens = sentence.tokens
    while pos < len(tokens):
        tok = tokens[pos]
        mwt = mwt_by_start.get(tok.id)
        surface = mwt.form if mwt is not None else tok.form
        found = text.find(surface, cursor)
        if found < 0:
            raise AlignmentError(
                "token %s:%d form %r not found in sentence text"
                % (sentence.sent_id, tok.id, surface))
        span = (found, found + len(surface))
        if mwt is not None:
            while pos < len(tokens) and tokens[pos].id <= mwt.end:
                spans[pos] = span
                pos += 1
        else:
            spans[pos] = span
            pos += 1
        cursor = span[1]
    return spans


def align_subwords(sentence, subword_spans):
    """Map each token to the index of its first subword.

    subword_spans are (start, end) character offsets into the sentence text,
    non-overlapping and increasing.  A token is normally assigned the first
    subword whose span starts inside the token's character span; a token
    swallowed by a larger subword falls back to the first subword overlapping
    it.  A token overlapping no subword at all raises AlignmentError.  The
    resulting mapping is non-decreasing.
    """
    spans = token_char_spans(sentence)
    mapping = []
    for tok, (tstart, tend) in zip(sentence.tokens, spans):
        first = None
        for si, (sstart, send) in enumerate(subword_spans):
            if tstart <= sstart < tend:
                first = si
                break
            if first is None and sstart < tend and send > tstart:
                first = si   # overlap without an in-span start; keep scanning
        if first is None:
            raise AlignmentError(
                "token %s:%d form %r (chars %d..%d) overlaps no subword"
                % (sentence.sent_id, tok.id, tok.form, tstart, tend))
        mapping.append(first)
    return mapping
