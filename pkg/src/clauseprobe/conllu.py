"""Reading, writing and validating CoNLL-U dependency treebanks.

Implements the ten-column CoNLL-U layout: comment lines starting with '#',
one token per line, blank line terminating a sentence.  Multiword token
ranges ("4-5") and empty nodes ("8.1") are kept alongside the basic word
sequence so that a parsed file can be serialized back verbatim.
"""

import io

# column indices of the CoNLL-U format
ID, FORM, LEMMA, UPOS, XPOS, FEATS, HEAD, DEPREL, DEPS, MISC = range(10)
N_COLUMNS = 10


class ConlluParseError(ValueError):
    """Malformed CoNLL-U input; carries the 1-based line number."""

    def __init__(self, message, line_no):
        super().__init__("line %d: %s" % (line_no, message))
        self.line_no = line_no


class Token:
    """A syntactic word: integer ID, integer HEAD, the rest kept as strings."""

    __slots__ = ("id", "form", "lemma", "upos", "xpos", "feats",
                 "head", "deprel", "deps", "misc")

    def __init__(self, id, form, lemma="_", upos="_", xpos="_", feats="_",
                 head=0, deprel="root", deps="_", misc="_"):
        self.id = id
        self.form = form
        self.lemma = lemma
        self.upos = upos
        self.xpos = xpos
        self.feats = feats
        self.head = head
        self.deprel = deprel
        self.deps = deps
        self.misc = misc

    def base_deprel(self):
        """Relation label with any subtype stripped ('acl:relcl' -> 'acl')."""
        return self.deprel.split(":")[0]

    def to_line(self):
        return "\t".join((str(self.id), self.form, self.lemma, self.upos,
                          self.xpos, self.feats, str(self.head), self.deprel,
                          self.deps, self.misc))

    def __eq__(self, other):
        return isinstance(other, Token) and self.to_line() == other.to_line()

    def __repr__(self):
        return "Token(%d, %r, head=%d, deprel=%r)" % (
            self.id, self.form, self.head, self.deprel)


class MultiwordToken:
    """A surface token spanning the word range start..end (inclusive)."""

    __slots__ = ("start", "end", "columns")

    def __init__(self, start, end, columns):
        self.start = start
        self.end = end
        self.columns = list(columns)   # the 10 raw columns

    @property
    def form(self):
        return self.columns[FORM]

    def to_line(self):
        return "\t".join(self.columns)

    def __eq__(self, other):
        return isinstance(other, MultiwordToken) and self.columns == other.columns

    def __repr__(self):
        return "MultiwordToken(%d-%d, %r)" % (self.start, self.end, self.form)


class EmptyNode:
    """An enhanced-dependency empty node with decimal id anchor.minor."""

    __slots__ = ("anchor", "minor", "columns")

    def __init__(self, anchor, minor, columns):
        self.anchor = anchor
        self.minor = minor
        self.columns = list(columns)

    @property
    def form(self):
        return self.columns[FORM]

    def to_line(self):
        return "\t".join(self.columns)

    def __eq__(self, other):
        return isinstance(other, EmptyNode) and self.columns == other.columns

    def __repr__(self):
        return "EmptyNode(%d.%d, %r)" % (self.anchor, self.minor, self.form)


class Sentence:
    """One sentence: comments plus tokens, multiword ranges and empty nodes."""

    def __init__(self, tokens=None, comments=None, multiword_tokens=None,
                 empty_nodes=None):
        self.tokens = list(tokens) if tokens else []
        self.comments = list(comments) if comments else []
        self.multiword_tokens = list(multiword_tokens) if multiword_tokens else []
        self.empty_nodes = list(empty_nodes) if empty_nodes else []

    def _comment_value(self, key):
        prefix = "# %s = " % key
        for line in self.comments:
            if line.startswith(prefix):
                return line[len(prefix):]
            # tolerate missing space after '#'
            alt = "#%s = " % key
            if line.startswith(alt):
                return line[len(alt):]
        return None

    @property
    def sent_id(self):
        return self._comment_value("sent_id")

    @property
    def text(self):
        return self._comment_value("text")

    def token_by_id(self, token_id):
        """Look up a token by its 1-based id (ids are contiguous in valid data)."""
        if 1 <= token_id <= len(self.tokens):
            tok = self.tokens[token_id - 1]
            if tok.id == token_id:
                return tok
        for tok in self.tokens:           # fall back for malformed id sequences
            if tok.id == token_id:
                return tok
        raise KeyError("no token with id %d" % token_id)

    def root_token(self):
        """The unique head=0 token, or None if absent/ambiguous."""
        roots = [t for t in self.tokens if t.head == 0]
        return roots[0] if len(roots) == 1 else None

    def children(self, token_id):
        """Tokens whose head is token_id, in surface order."""
        return [t for t in self.tokens if t.head == token_id]

    def to_conllu(self):
        """Serialize this sentence, trailing blank line included."""
        out = io.StringIO()
        for line in self.comments:
            out.write(line)
            out.write("\n")
        mwt_by_start = {m.start: m for m in self.multiword_tokens}
        empties_by_anchor = {}
        for node in self.empty_nodes:
            empties_by_anchor.setdefault(node.anchor, []).append(node)
        for nodes in empties_by_anchor.values():
            nodes.sort(key=lambda n: n.minor)
        for node in empties_by_anchor.get(0, ()):   # 0.1 style, before word 1
            out.write(node.to_line())
            out.write("\n")
        for tok in self.tokens:
            if tok.id in mwt_by_start:
                out.write(mwt_by_start[tok.id].to_line())
                out.write("\n")
            out.write(tok.to_line())
            out.write("\n")
            for node in empties_by_anchor.get(tok.id, ()):
                out.write(node.to_line())
                out.write("\n")
        out.write("\n")
        return out.getvalue()

    def __len__(self):
        return len(self.tokens)

    def __repr__(self):
        return "Sentence(%r, %d tokens)" % (self.sent_id, len(self.tokens))


class Treebank:
    """An ordered collection of sentences, optionally named."""

    def __init__(self, sentences=None, name=None):
        self.sentences = list(sentences) if sentences else []
        self.name = name

    def __iter__(self):
        return iter(self.sentences)

    def __len__(self):
        return len(self.sentences)

    def __getitem__(self, i):
        return self.sentences[i]

    def sentence_by_id(self, sent_id):
        for sent in self.sentences:
            if sent.sent_id == sent_id:
                return sent
        raise KeyError("no sentence with sent_id %r" % sent_id)

    def __repr__(self):
        return "Treebank(%r, %d sentences)" % (self.name, len(self.sentences))


def _parse_int(text, what, line_no):
    try:
        value = int(text)
    except ValueError:
        raise ConlluParseError("%s is not an integer: %r" % (what, text), line_no)
    if value < 0:
        raise ConlluParseError("%s must be non-negative: %r" % (what, text), line_no)
    return value


def _finish_sentence(state, sentences, line_no):
    tokens, comments, mwts, empties = state
    if not tokens and not comments and not mwts and not empties:
        return
    if not tokens:
        raise ConlluParseError("sentence block with no token lines", line_no)
    sentences.append(Sentence(tokens, comments, mwts, empties))


def parse_conllu(text, name=None):
    """Parse CoNLL-U text into a Treebank.

    Accepts LF or CRLF line endings.  Raises ConlluParseError with the
    offending 1-based line number on malformed input.
    """
    sentences = []
    tokens, comments, mwts, empties = [], [], [], []
    last_line_no = 0
    for line_no, raw in enumerate(text.split("\n"), start=1):
        last_line_no = line_no
        line = raw[:-1] if raw.endswith("\r") else raw
        if line == "":
            _finish_sentence((tokens, comments, mwts, empties), sentences, line_no)
            tokens, comments, mwts, empties = [], [], [], []
            continue
        if line.startswith("#"):
            comments.append(line)
            continue
        cols = line.split("\t")
        if len(cols) != N_COLUMNS:
            raise ConlluParseError(
                "expected %d tab-separated columns, got %d"
                % (N_COLUMNS, len(cols)), line_no)
        if any(col == "" for col in cols):
            raise ConlluParseError("empty column (use '_' for missing values)",
                                   line_no)
        ident = cols[ID]
        if "-" in ident:
            start_s, _, end_s = ident.partition("-")
            start = _parse_int(start_s, "multiword range start", line_no)
            end = _parse_int(end_s, "multiword range end", line_no)
            mwts.append(MultiwordToken(start, end, cols))
        elif "." in ident:
            anchor_s, _, minor_s = ident.partition(".")
            anchor = _parse_int(anchor_s, "empty node anchor", line_no)
            minor = _parse_int(minor_s, "empty node minor id", line_no)
            empties.append(EmptyNode(anchor, minor, cols))
        else:
            tok_id = _parse_int(ident, "token id", line_no)
            head = _parse_int(cols[HEAD], "head", line_no)
            tokens.append(Token(tok_id, cols[FORM], cols[LEMMA], cols[UPOS],
                                cols[XPOS], cols[FEATS], head, cols[DEPREL],
                                cols[DEPS], cols[MISC]))
    _finish_sentence((tokens, comments, mwts, empties), sentences, last_line_no + 1)
    return Treebank(sentences, name=name)


def parse_conllu_file(path, name=None):
    """Parse a UTF-8 CoNLL-U file (BOM tolerated) into a Treebank."""
    with open(path, "r", encoding="utf-8-sig", newline="") as handle:
        text = handle.read()
    if name is None:
        name = str(path)
    return parse_conllu(text, name=name)


def serialize(treebank):
    """Render a Treebank back to CoNLL-U text with LF line endings."""
    return "".join(sent.to_conllu() for sent in treebank.sentences)


def write_conllu_file(treebank, path):
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(serialize(treebank))


def _where(sent, index):
    sid = sent.sent_id
    return "sentence %s" % sid if sid is not None else "sentence #%d" % (index + 1)


def validate(treebank):
    """Check structural well-formedness; returns a list of violation strings.

    An empty list means the treebank is valid: contiguous 1..n ids, heads in
    range, exactly one root (head 0 with base deprel 'root'), an acyclic and
    connected head graph, well-formed multiword ranges and anchored empty
    nodes.
    """
    violations = []
    for index, sent in enumerate(treebank.sentences):
        where = _where(sent, index)
        n = len(sent.tokens)
        ids_ok = True
        for pos, tok in enumerate(sent.tokens, start=1):
            if tok.id != pos:
                violations.append("%s: token ids not contiguous from 1 "
                                  "(position %d has id %d)" % (where, pos, tok.id))
                ids_ok = False
                break
        for tok in sent.tokens:
            if not (0 <= tok.head <= n):
                violations.append("%s: token %d head %d out of range 0..%d"
                                  % (where, tok.id, tok.head, n))
            elif tok.head == tok.id:
                violations.append("%s: token %d is its own head" % (where, tok.id))
        roots = [t for t in sent.tokens if t.head == 0]
        if len(roots) != 1:
            violations.append("%s: expected exactly one head=0 token, found %d"
                              % (where, len(roots)))
        elif roots[0].base_deprel() != "root":
            violations.append("%s: head=0 token %d has deprel %r, not 'root'"
                              % (where, roots[0].id, roots[0].deprel))
        if ids_ok and all(0 <= t.head <= n and t.head != t.id for t in sent.tokens):
            # walk head chains; every token must reach 0 without revisiting
            for tok in sent.tokens:
                seen = set()
                cur = tok.id
                while cur != 0:
                    if cur in seen:
                        violations.append("%s: cycle in head chain through "
                                          "token %d" % (where, tok.id))
                        break
                    seen.add(cur)
                    cur = sent.tokens[cur - 1].head
        covered = set()
        for mwt in sent.multiword_tokens:
            if not (1 <= mwt.start <= mwt.end <= n):
                violations.append("%s: multiword range %d-%d outside 1..%d"
                                  % (where, mwt.start, mwt.end, n))
                continue
            span = set(range(mwt.start, mwt.end + 1))
            if span & covered:
                violations.append("%s: overlapping multiword ranges at %d-%d"
                                  % (where, mwt.start, mwt.end))
            covered |= span
        anchors = {}
        for node in sent.empty_nodes:
            if not (0 <= node.anchor <= n):
                violations.append("%s: empty node %d.%d anchored outside 0..%d"
                                  % (where, node.anchor, node.minor, n))
            anchors.setdefault(node.anchor, []).append(node.minor)
        for anchor, minors in anchors.items():
            if sorted(minors) != list(range(1, len(minors) + 1)):
                violations.append("%s: empty node minor ids after word %d are "
                                  "%s, expected 1..%d" %
                                  (where, anchor, sorted(minors), len(minors)))
    return violations
