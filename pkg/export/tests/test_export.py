"""End-to-end tests of the exporter against a tiny local checkpoint.

The binary files are re-parsed here with a standalone struct-based reader
so nothing about the writer is taken on faith; the conformance test then
additionally loads every export through the consumer's own reader and
alignment code.
"""

import json
import shutil
import struct
import subprocess
import sys
import time
import types

import numpy as np
import pytest
import torch
from transformers import AutoModel, AutoTokenizer

from embed_export import cli, exporter
from embed_export.exporter import ExportError, ExportJob, export

from conftest import FIXTURES, fixture_path

MAGIC = b"CLPRB1\x00\x00"


def read_export(path):
    """Independent reader: header tuple, sent_id order, per-sentence data."""
    with open(path, "rb") as handle:
        blob = handle.read()
    assert blob[:8] == MAGIC
    version, dim, n_layers, n_heads, flags = struct.unpack_from("<5I", blob, 8)
    offset = 28
    order = []
    sentences = {}
    while offset < len(blob):
        (sid_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        sid = blob[offset:offset + sid_len].decode("utf-8")
        offset += sid_len
        n_tokens, n_subwords = struct.unpack_from("<II", blob, offset)
        offset += 8
        firsts = np.frombuffer(blob, "<u4", n_tokens, offset)
        offset += 4 * n_tokens
        vectors = np.frombuffer(blob, "<f4", n_tokens * dim, offset)
        vectors = vectors.reshape(n_tokens, dim)
        offset += vectors.nbytes
        attention = None
        if flags & 1:
            count = n_layers * n_heads * n_subwords * n_subwords
            attention = np.frombuffer(blob, "<f4", count, offset)
            attention = attention.reshape(n_layers, n_heads,
                                          n_subwords, n_subwords)
            offset += attention.nbytes
        order.append(sid)
        sentences[sid] = (firsts, vectors, n_subwords, attention)
    assert offset == len(blob)
    return (version, dim, n_layers, n_heads, flags), order, sentences


@pytest.fixture(scope="module")
def basic_export(model_dir, tmp_path_factory):
    out = str(tmp_path_factory.mktemp("exp") / "basic.embbin")
    job = ExportJob(model_dir, fixture_path("basic_en.conllu"), out,
                    include_attention=True)
    report = export(job)
    return job, report


def test_header_records_model_geometry(basic_export):
    job, report = basic_export
    header, order, _ = read_export(job.out_path)
    assert header == (1, 32, 2, 2, 1)
    assert order == ["basic-en-001", "basic-en-002", "basic-en-003"]
    assert report["dim"] == 32 and report["n_layers"] == 2
    assert report["n_heads"] == 2 and report["attention"] is True


def test_header_without_attention_clears_flag(model_dir, tmp_path):
    out = str(tmp_path / "plain.embbin")
    export(ExportJob(model_dir, fixture_path("basic_en.conllu"), out))
    header, _, sentences = read_export(out)
    assert header[4] == 0
    assert all(att is None for _, _, _, att in sentences.values())


def test_token_counts_and_index_invariants(basic_export):
    job, _ = basic_export
    _, _, sentences = read_export(job.out_path)
    n_tokens = {sid: len(firsts)
                for sid, (firsts, _, _, _) in sentences.items()}
    assert n_tokens == {"basic-en-001": 6, "basic-en-002": 7,
                        "basic-en-003": 8}
    for firsts, vectors, n_subwords, _ in sentences.values():
        assert vectors.shape == (len(firsts), 32)
        assert all(0 <= f < n_subwords for f in firsts)
        assert list(firsts) == sorted(firsts)


def test_first_subwords_by_character_arithmetic(basic_export):
    # "She said that he left." with one subword per character and [CLS] at
    # index 0: She->1..3, said->4..7, that->8..11, he->12..13, left->14..17,
    # the period at 18, [SEP] at 19.
    job, _ = basic_export
    _, _, sentences = read_export(job.out_path)
    firsts, _, n_subwords, att = sentences["basic-en-001"]
    assert list(firsts) == [1, 4, 8, 12, 14, 18]
    assert n_subwords == 20
    assert att.shape == (2, 2, 20, 20)


def test_multiword_tokens_share_first_subword(model_dir, tmp_path):
    # "Hablamos del proyecto.": Hablamos->1, the words "de" and "el" both
    # map to the surface "del" starting at subword 9, proyecto->12, .->20.
    out = str(tmp_path / "mwt.embbin")
    export(ExportJob(model_dir, fixture_path("mwt_es.conllu"), out))
    _, _, sentences = read_export(out)
    assert list(sentences["mwt-es-001"][0]) == [1, 9, 9, 12, 20]
    firsts2 = list(sentences["mwt-es-002"][0])
    assert firsts2[3] == firsts2[4]          # a + el share "al"
    assert len(firsts2) == 7


def test_empty_nodes_carry_no_vectors(model_dir, tmp_path):
    out = str(tmp_path / "empty.embbin")
    export(ExportJob(model_dir, fixture_path("empty_nodes.conllu"), out))
    _, _, sentences = read_export(out)
    assert [len(f) for f, _, _, _ in
            (sentences["empty-001"], sentences["empty-002"])] == [6, 6]


def test_vectors_match_a_direct_forward_pass(model_dir, basic_export):
    job, _ = basic_export
    _, _, sentences = read_export(job.out_path)
    tokenizer = AutoTokenizer.from_pretrained(model_dir)
    model = AutoModel.from_pretrained(model_dir,
                                      attn_implementation="eager")
    model.eval()
    encoding = tokenizer("She said that he left.")
    batch = {key: torch.tensor([encoding[key]]) for key in encoding}
    with torch.no_grad():
        output = model(**batch, output_attentions=True)
    hidden = output.last_hidden_state[0].numpy()
    firsts, vectors, _, attention = sentences["basic-en-001"]
    np.testing.assert_array_equal(
        vectors, hidden[list(firsts)].astype("<f4"))
    direct = torch.stack(output.attentions)[:, 0].numpy().astype("<f4")
    np.testing.assert_array_equal(attention, direct)


def test_attention_rows_sum_to_one(basic_export):
    job, _ = basic_export
    _, _, sentences = read_export(job.out_path)
    for _, _, _, attention in sentences.values():
        rows = attention.reshape(-1, attention.shape[-1]).sum(axis=1)
        assert np.abs(rows - 1.0).max() < 1e-4


def test_length_limit_skips_and_reports(model_dir, tmp_path):
    # basic_en tokenizes to 20/26/27 subwords; a limit of 22 keeps only the
    # first sentence and routes the other two into the report, untruncated.
    out = str(tmp_path / "limited.embbin")
    job = ExportJob(model_dir, fixture_path("basic_en.conllu"), out,
                    max_sequence_length=22)
    report = export(job)
    assert report["n_sentences"] == 3 and report["n_written"] == 1
    assert [entry["sent_id"] for entry in report["skipped"]] \
        == ["basic-en-002", "basic-en-003"]
    assert all(entry["n_subwords"] > entry["limit"] == 22
               for entry in report["skipped"])
    _, order, _ = read_export(out)
    assert order == ["basic-en-001"]
    with open(job.report_path, encoding="utf-8") as handle:
        assert json.load(handle) == report


def test_model_position_limit_caps_max_len(model_dir, tmp_path):
    # the checkpoint has max_position_embeddings=128, so asking for more
    # cannot produce sequences the model would reject
    out = str(tmp_path / "capped.embbin")
    report = export(ExportJob(model_dir, fixture_path("basic_en.conllu"),
                              out, max_sequence_length=10000))
    assert report["max_sequence_length"] == 128


def test_duplicate_sent_id_rejected(model_dir, tmp_path):
    conllu = tmp_path / "dup.conllu"
    block = ("# sent_id = dup-1\n# text = Hi.\n"
             "1\tHi\thi\tINTJ\t_\t_\t0\troot\t_\t_\n"
             "2\t.\t.\tPUNCT\t_\t_\t1\tpunct\t_\t_\n\n")
    conllu.write_text(block + block, encoding="utf-8")
    with pytest.raises(ExportError, match="duplicate sent_id 'dup-1'"):
        export(ExportJob(model_dir, str(conllu),
                         str(tmp_path / "dup.embbin")))


def test_sentence_without_text_metadata_rejected(model_dir, tmp_path):
    with pytest.raises(ExportError, match="no text metadata"):
        export(ExportJob(model_dir, fixture_path("no_meta.conllu"),
                         str(tmp_path / "nometa.embbin")))


def test_slow_tokenizer_rejected(model_dir, tmp_path, monkeypatch):
    stub = types.SimpleNamespace(is_fast=False)
    monkeypatch.setattr(exporter.AutoTokenizer, "from_pretrained",
                        staticmethod(lambda name: stub))
    with pytest.raises(ExportError, match="character offsets"):
        export(ExportJob(model_dir, fixture_path("basic_en.conllu"),
                         str(tmp_path / "slow.embbin")))


def test_nonpositive_max_len_rejected(model_dir, tmp_path):
    with pytest.raises(ValueError, match="max_sequence_length"):
        ExportJob(model_dir, fixture_path("basic_en.conllu"),
                  str(tmp_path / "x.embbin"), max_sequence_length=0)


def test_criterion_9_exporter_conformance(model_dir, tmp_path):
    """Exports load through the consumer with zero invariant violations,
    first-subword choices agree with the consumer's own alignment, and a
    second run is byte-identical."""
    sys.path.insert(0, "/root/pkg/src")
    try:
        from clauseprobe import conllu as primary_conllu
        from clauseprobe import taskdata
        from clauseprobe.encoder import read_embedding_file
    finally:
        sys.path.pop(0)
    tokenizer = AutoTokenizer.from_pretrained(model_dir)
    started = time.monotonic()
    for name in FIXTURES:
        out = str(tmp_path / (name + ".embbin"))
        export(ExportJob(model_dir, fixture_path(name), out,
                         include_attention=True))
        again = str(tmp_path / (name + ".again.embbin"))
        export(ExportJob(model_dir, fixture_path(name), again,
                         include_attention=True))
        with open(out, "rb") as first, open(again, "rb") as second:
            assert first.read() == second.read(), name

        # the consumer's reader enforces index ranges, monotonicity and
        # attention row sums on load; reaching here means zero violations
        table = read_embedding_file(out)
        treebank = primary_conllu.parse_conllu_file(fixture_path(name))
        assert len(table) == len(treebank.sentences)
        for sentence in treebank.sentences:
            stored = table.get(sentence.sent_id)
            assert len(stored.first_subword) == len(sentence.tokens)
            encoding = tokenizer(sentence.text,
                                 return_offsets_mapping=True,
                                 return_special_tokens_mask=True)
            content = [(i, (int(s), int(e)))
                       for i, ((s, e), flag)
                       in enumerate(zip(encoding["offset_mapping"],
                                        encoding["special_tokens_mask"]))
                       if not flag]
            expected = taskdata.align_subwords(
                sentence, [span for _, span in content])
            expected = [content[k][0] for k in expected]
            assert list(stored.first_subword) == expected, sentence.sent_id
    elapsed = time.monotonic() - started
    assert elapsed < 300.0
    print("criterion 9 (exporter conformance): PASS  [%d fixtures, %.1fs]"
          % (len(FIXTURES), elapsed))


def test_cli_reports_summary_line(model_dir, tmp_path, capsys):
    out = str(tmp_path / "cli.embbin")
    code = cli.main(["--model", model_dir,
                     "--conllu", fixture_path("basic_en.conllu"),
                     "--out", out, "--attention"])
    captured = capsys.readouterr()
    assert code == 0
    assert captured.out == ("wrote %s: 3 of 3 sentences (0 skipped), "
                            "dim 32, with attention\n" % out)
    header, _, _ = read_export(out)
    assert header == (1, 32, 2, 2, 1)


def test_cli_missing_input_exits_2(model_dir, tmp_path, capsys):
    code = cli.main(["--model", model_dir,
                     "--conllu", str(tmp_path / "absent.conllu"),
                     "--out", str(tmp_path / "x.embbin")])
    captured = capsys.readouterr()
    assert code == 2
    assert captured.err.startswith("error: ")


def test_console_script_installed(model_dir, tmp_path):
    exe = shutil.which("embed-export")
    assert exe is not None
    out = str(tmp_path / "script.embbin")
    run = subprocess.run(
        [exe, "--model", model_dir,
         "--conllu", fixture_path("mwt_es.conllu"), "--out", out],
        capture_output=True, text=True)
    assert run.returncode == 0, run.stderr
    assert run.stdout.startswith("wrote %s: 2 of 2 sentences" % out)
