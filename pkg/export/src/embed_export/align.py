"""Token-to-subword alignment through character offsets.

Mirrors the consumer's alignment rules exactly: each treebank token gets a
character span by scanning the sentence text left to right (words inside a
multiword token all share the surface form's span), and is then assigned
the first subword whose span starts inside the token's span, falling back
to the first merely overlapping subword when the token was swallowed by a
larger piece.  A token overlapping nothing is an error.
"""


class AlignError(ValueError):
    pass


def token_spans(sentence):
    """(start, end) character offsets of every token of a UDSentence."""
    text = sentence.text
    if text is None:
        raise AlignError("sentence %r has no text metadata"
                         % (sentence.sent_id,))
    spans = [None] * len(sentence.tokens)
    cursor = 0
    pos = 0
    while pos < len(sentence.tokens):
        token_id, form = sentence.tokens[pos]
        mwt = sentence.mwts.get(token_id)
        surface = mwt[1] if mwt is not None else form
        found = text.find(surface, cursor)
        if found < 0:
            raise AlignError("token %s:%d form %r not found in sentence text"
                             % (sentence.sent_id, token_id, surface))
        span = (found, found + len(surface))
        if mwt is not None:
            end_id = mwt[0]
            while pos < len(sentence.tokens) \
                    and sentence.tokens[pos][0] <= end_id:
                spans[pos] = span
                pos += 1
        else:
            spans[pos] = span
            pos += 1
        cursor = span[1]
    return spans


def first_subwords(sentence, subword_spans):
    """Index of the first subword of each token, given subword offsets."""
    spans = token_spans(sentence)
    mapping = []
    for (token_id, form), (tstart, tend) in zip(sentence.tokens, spans):
        first = None
        for si, (sstart, send) in enumerate(subword_spans):
            if tstart <= sstart < tend:
                first = si
                break
            if first is None and sstart < tend and send > tstart:
                first = si
        if first is None:
            raise AlignError(
                "token %s:%d form %r (chars %d..%d) overlaps no subword"
                % (sentence.sent_id, token_id, form, tstart, tend))
        mapping.append(first)
    return mapping
