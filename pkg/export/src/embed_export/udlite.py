"""Minimal CoNLL-U reading: just enough structure to export embeddings.

Keeps token ids and forms, multiword-token surface ranges (their form is
what actually occurs in the text), and the sent_id/text comments.  Empty
nodes (ids like "5.1") carry no surface material and are dropped.  Accepts
LF or CRLF line endings and a UTF-8 BOM.
"""


class UDParseError(ValueError):
    pass


class UDSentence:
    __slots__ = ("sent_id", "text", "tokens", "mwts")

    def __init__(self, sent_id=None, text=None, tokens=None, mwts=None):
        self.sent_id = sent_id
        self.text = text
        self.tokens = tokens if tokens is not None else []   # [(id, form)]
        self.mwts = mwts if mwts is not None else {}         # start -> (end, form)


def parse_text(text):
    if text.startswith("﻿"):
        text = text[1:]
    sentences = []
    current = UDSentence()

    def flush(line_no):
        if current.tokens:
            want = list(range(1, len(current.tokens) + 1))
            if [tid for tid, _ in current.tokens] != want:
                raise UDParseError("line %d: token ids are not 1..n" % line_no)
            sentences.append(UDSentence(current.sent_id, current.text,
                                        current.tokens, current.mwts))
        elif current.sent_id is not None or current.text is not None:
            raise UDParseError("line %d: sentence has comments but no tokens"
                               % line_no)
        current.sent_id = None
        current.text = None
        current.tokens = []
        current.mwts = {}

    for line_no, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        if not line:
            flush(line_no)
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("sent_id ="):
                current.sent_id = body[len("sent_id ="):].strip()
            elif body.startswith("text ="):
                current.text = body[len("text ="):].strip()
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise UDParseError("line %d: expected 10 tab-separated columns, "
                               "got %d" % (line_no, len(cols)))
        token_id, form = cols[0], cols[1]
        if "-" in token_id:
            try:
                start, end = (int(p) for p in token_id.split("-", 1))
            except ValueError:
                raise UDParseError("line %d: bad token range %r"
                                   % (line_no, token_id)) from None
            current.mwts[start] = (end, form)
        elif "." in token_id:
            continue
        else:
            try:
                current.tokens.append((int(token_id), form))
            except ValueError:
                raise UDParseError("line %d: bad token id %r"
                                   % (line_no, token_id)) from None
    flush(len(text.split("\n")) + 1)
    return sentences


def parse_file(path):
    with open(path, "r", encoding="utf-8-sig", newline="") as handle:
        return parse_text(handle.read())
