import json
import os

import pytest
import torch
from transformers import AutoTokenizer, BertConfig, BertModel

# fixture treebanks shipped with the consumer package
PRIMARY_DATA = os.path.abspath(os.path.join(os.path.dirname(__file__),
                                            "..", "..", "tests", "data"))

FIXTURES = ("basic_en.conllu", "mwt_es.conllu", "bom_header.conllu",
            "empty_nodes.conllu", "punct_final.conllu",
            "spans_fixture.conllu")


def fixture_path(name):
    return os.path.join(PRIMARY_DATA, name)


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory):
    """A tiny seeded BERT checkpoint + character-level fast tokenizer.

    The vocabulary is every character occurring in the fixture treebanks, so
    each word splits into one subword per character and nothing falls to
    [UNK]; that makes multi-subword alignment the normal case.  The
    tokenizer has to be materialized via from_pretrained on a directory
    holding vocab.txt: the BertTokenizer(vocab_file=...) constructor no
    longer reads the file.
    """
    directory = tmp_path_factory.mktemp("tiny-bert")
    chars = set()
    for name in FIXTURES:
        with open(fixture_path(name), encoding="utf-8-sig") as handle:
            chars.update(handle.read())
    chars = sorted(c for c in chars if not c.isspace())
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    vocab += chars + ["##" + c for c in chars]
    (directory / "vocab.txt").write_text("\n".join(vocab) + "\n",
                                         encoding="utf-8")
    (directory / "tokenizer_config.json").write_text(
        json.dumps({"tokenizer_class": "BertTokenizer",
                    "do_lower_case": False}),
        encoding="utf-8")
    tokenizer = AutoTokenizer.from_pretrained(str(directory))
    assert tokenizer.is_fast and tokenizer.vocab_size == len(vocab)
    tokenizer.save_pretrained(str(directory))
    config = BertConfig(vocab_size=len(vocab), hidden_size=32,
                        num_hidden_layers=2, num_attention_heads=2,
                        intermediate_size=64, max_position_embeddings=128)
    torch.manual_seed(7)
    BertModel(config).save_pretrained(str(directory))
    return str(directory)
