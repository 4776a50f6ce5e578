"""Word-order analytics over treebanks and probe predictions.

Covers the descriptive side of the task: where heads sit relative to their
dependents, where clauses sit inside the sentence (and how that interacts
with misclassifications), where subordination markers sit relative to their
predicate, and how much encoder attention the predicate of a subordinate
clause pays to those markers.
"""

import numpy as np

from .taskdata import MAIN, SUB, SUB_DEPRELS


class HeadDirectionStats:
    """Counts of parent-to-the-right attachments for one relation."""

    __slots__ = ("deprel", "n_total", "n_parent_right")

    def __init__(self, deprel, n_total=0, n_parent_right=0):
        self.deprel = deprel
        self.n_total = n_total
        self.n_parent_right = n_parent_right

    @property
    def fraction_parent_right(self):
        return self.n_parent_right / self.n_total if self.n_total else None

    def to_dict(self):
        return {"deprel": self.deprel, "n_total": self.n_total,
                "n_parent_right": self.n_parent_right,
                "fraction_parent_right": self.fraction_parent_right}


def head_direction(treebank, deprels):
    """Per-relation head direction profile.

    A token counts toward its base relation when that base is in `deprels`;
    its parent is "right" when head id > token id.  Root attachments
    (head 0) have no direction and are ignored.
    """
    stats = {d: HeadDirectionStats(d) for d in deprels}
    for sent in treebank.sentences:
        for tok in sent.tokens:
            base = tok.base_deprel()
            if base in stats and tok.head != 0:
                stats[base].n_total += 1
                if tok.head > tok.id:
                    stats[base].n_parent_right += 1
    return stats


def _children_index(sentence):
    children = {tok.id: [] for tok in sentence.tokens}
    for tok in sentence.tokens:
        if tok.head != 0 and tok.head in children:
            children[tok.head].append(tok.id)
    return children


def clause_span(sentence, predicate_index):
    """(min_id, max_id) over the predicate's full dependency subtree."""
    children = _children_index(sentence)
    if predicate_index not in children:
        raise KeyError("no token with id %d" % predicate_index)
    lo = hi = predicate_index
    stack = [predicate_index]
    seen = {predicate_index}
    while stack:
        node = stack.pop()
        lo = min(lo, node)
        hi = max(hi, node)
        for child in children[node]:
            if child not in seen:
                seen.add(child)
                stack.append(child)
    return lo, hi


def exclusive_clause_span(sentence, predicate_index):
    """Span of the clause proper: the subtree minus embedded clause subtrees.

    Descent stops at any dependent attached by a clausal relation (acl,
    ccomp, advcl, csubj, xcomp), so a matrix clause does not inherit the
    extent of the clauses embedded in it.
    """
    children = _children_index(sentence)
    if predicate_index not in children:
        raise KeyError("no token with id %d" % predicate_index)
    by_id = {tok.id: tok for tok in sentence.tokens}
    lo = hi = predicate_index
    stack = [predicate_index]
    seen = {predicate_index}
    while stack:
        node = stack.pop()
        lo = min(lo, node)
        hi = max(hi, node)
        for child in children[node]:
            if child in seen:
                continue
            if by_id[child].base_deprel() in SUB_DEPRELS:
                continue
            seen.add(child)
            stack.append(child)
    return lo, hi


def _is_punct(token):
    return token.upos == "PUNCT" or token.base_deprel() == "punct"


def _effective_last_id(sentence, final_punct_exempt):
    last = len(sentence.tokens)
    if final_punct_exempt:
        while last > 1 and _is_punct(sentence.tokens[last - 1]):
            last -= 1
    return last


class PositionalErrorCounts:
    """Misclassifications broken down by clause position in the sentence."""

    __slots__ = ("initial_sub_as_main", "initial_main_as_sub",
                 "final_sub_as_main", "final_main_as_sub", "n_errors")

    def __init__(self):
        self.initial_sub_as_main = 0
        self.initial_main_as_sub = 0
        self.final_sub_as_main = 0
        self.final_main_as_sub = 0
        self.n_errors = 0

    def to_dict(self):
        return {name: getattr(self, name) for name in self.__slots__}


def positional_errors(sentences_by_sid, examples, predicted,
                      final_punct_exempt=True):
    """Count errors on sentence-initial and sentence-final clauses.

    The clause of an example is its exclusive span (embedded clause subtrees
    removed) so that a matrix clause does not count as sentence-initial
    merely because an embedded clause opens the sentence.  "Initial" means
    the span starts at token 1; "final" means it ends at the last token,
    where trailing punctuation is ignored unless final_punct_exempt is off.
    An error adds to at most one initial and at most one final bucket.
    """
    predicted = list(predicted)
    if len(predicted) != len(examples):
        raise ValueError("need one prediction per example (%d vs %d)"
                         % (len(predicted), len(examples)))
    counts = PositionalErrorCounts()
    for ex, pred in zip(examples, predicted):
        if pred == ex.label:
            continue
        counts.n_errors += 1
        sent = sentences_by_sid[ex.sent_id]
        lo, hi = exclusive_clause_span(sent, ex.predicate_index)
        initial = lo == 1
        final = hi >= _effective_last_id(sent, final_punct_exempt)
        if ex.label == SUB and pred == MAIN:
            if initial:
                counts.initial_sub_as_main += 1
            if final:
                counts.final_sub_as_main += 1
        elif ex.label == MAIN and pred == SUB:
            if initial:
                counts.initial_main_as_sub += 1
            if final:
                counts.final_main_as_sub += 1
    return counts


class CompPositionStats:
    """How often the first subordination marker precedes its predicate."""

    __slots__ = ("n_clauses_with_mark", "n_mark_before_predicate")

    def __init__(self, n_clauses_with_mark=0, n_mark_before_predicate=0):
        self.n_clauses_with_mark = n_clauses_with_mark
        self.n_mark_before_predicate = n_mark_before_predicate

    @property
    def fraction_pre(self):
        if self.n_clauses_with_mark == 0:
            return None
        return self.n_mark_before_predicate / self.n_clauses_with_mark

    def to_dict(self):
        return {"n_clauses_with_mark": self.n_clauses_with_mark,
                "n_mark_before_predicate": self.n_mark_before_predicate,
                "fraction_pre": self.fraction_pre}


def _mark_children(sentence, predicate_index):
    return sorted(tok.id for tok in sentence.tokens
                  if tok.head == predicate_index
                  and tok.base_deprel() == "mark")


def comp_position(treebank):
    """Position of subordination markers across a treebank.

    Considers every subordinate-clause predicate with at least one "mark"
    dependent; the clause counts as marker-before when its first (leftmost)
    mark precedes the predicate.  fraction_pre is None when no clause has a
    marker at all.
    """
    stats = CompPositionStats()
    for sent in treebank.sentences:
        for tok in sent.tokens:
            if tok.base_deprel() not in SUB_DEPRELS:
                continue
            marks = _mark_children(sent, tok.id)
            if not marks:
                continue
            stats.n_clauses_with_mark += 1
            if marks[0] < tok.id:
                stats.n_mark_before_predicate += 1
    return stats


class AttentionProfile:
    """Mean predicate-to-marker attention mass per encoder layer."""

    def __init__(self, per_layer, n_examples):
        self.per_layer = per_layer       # numpy array, one value per layer
        self.n_examples = n_examples

    def to_dict(self):
        return {"per_layer": [float(v) for v in self.per_layer],
                "n_examples": self.n_examples}


def attention_profile(table, examples, sentences_by_sid, head_agg="mean"):
    """Attention from subordinate predicates to their subordination markers.

    For every SUB example whose predicate has mark dependents, reads the
    stored attention of its sentence, takes the predicate's first-subword row,
    sums the mass on the markers' first-subword columns, aggregates heads by
    mean (or max), and averages the result over examples, per layer.  Raises
    when a sentence carries no attention, naming its sent_id.
    """
    if head_agg not in ("mean", "max"):
        raise ValueError("head_agg must be 'mean' or 'max', got %r" % head_agg)
    if not table.has_attention:
        raise ValueError("embedding table was exported without attention")
    totals = np.zeros(table.n_layers)
    n_used = 0
    for ex in examples:
        if ex.label != SUB:
            continue
        sent = sentences_by_sid[ex.sent_id]
        marks = _mark_children(sent, ex.predicate_index)
        if not marks:
            continue
        emb = table.get(ex.sent_id)
        if emb.attention is None:
            raise ValueError("sentence %r has no attention data" % ex.sent_id)
        row = int(emb.first_subword[ex.predicate_index - 1])
        cols = [int(emb.first_subword[m - 1]) for m in marks]
        # (n_layers, n_heads): marker mass in the predicate's query row
        mass = emb.attention[:, :, row, :][:, :, cols].sum(axis=2,
                                                           dtype=np.float64)
        per_layer = mass.mean(axis=1) if head_agg == "mean" else mass.max(axis=1)
        totals += per_layer
        n_used += 1
    if n_used == 0:
        return AttentionProfile(np.zeros(table.n_layers), 0)
    return AttentionProfile(totals / n_used, n_used)
