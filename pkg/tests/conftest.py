import glob
import os

import pytest

from clauseprobe import conllu

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


def data_path(name):
    return os.path.join(DATA_DIR, name)


def valid_fixture_paths():
    return sorted(glob.glob(os.path.join(DATA_DIR, "*.conllu")))


def make_sentence(rows, comments=None):
    """Build a Sentence from (id, form, upos, head, deprel) tuples."""
    tokens = [conllu.Token(i, form, lemma=form, upos=upos, head=head,
                           deprel=deprel)
              for i, form, upos, head, deprel in rows]
    return conllu.Sentence(tokens=tokens, comments=comments or [])


@pytest.fixture
def basic_treebank():
    return conllu.parse_conllu_file(data_path("basic_en.conllu"))


@pytest.fixture
def spans_treebank():
    return conllu.parse_conllu_file(data_path("spans_fixture.conllu"))
