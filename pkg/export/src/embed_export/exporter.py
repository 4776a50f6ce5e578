"""Export per-token transformer states from a treebank to the binary format.

For each sentence: tokenize the raw text with a fast (offset-producing)
tokenizer, align treebank tokens to their first subwords, run the encoder,
and write the last hidden layer's vector of every token's first subword —
plus, optionally, the full attention tensors over all subword positions
(special tokens included, so rows keep summing to one).  Sentences whose
tokenization exceeds the length limit are skipped and listed in a JSON
report next to the output file, never truncated.
"""

import json
import logging

import numpy as np
import torch
from transformers import AutoModel, AutoTokenizer

from .align import AlignError, first_subwords
from .binfmt import BinWriter
from .udlite import parse_file

log = logging.getLogger("embed_export")


class ExportError(RuntimeError):
    pass


class ExportJob:
    def __init__(self, model_name, conllu_path, out_path,
                 include_attention=False, max_sequence_length=512,
                 device="cpu"):
        if max_sequence_length < 1:
            raise ValueError("max_sequence_length must be >= 1")
        self.model_name = model_name
        self.conllu_path = conllu_path
        self.out_path = out_path
        self.include_attention = include_attention
        self.max_sequence_length = max_sequence_length
        self.device = device

    @property
    def report_path(self):
        return self.out_path + ".report.json"


def load_model(job):
    tokenizer = AutoTokenizer.from_pretrained(job.model_name)
    if not getattr(tokenizer, "is_fast", False):
        raise ExportError(
            "tokenizer of %r does not produce character offsets; "
            "a fast tokenizer is required for alignment" % job.model_name)
    # eager attention so weights can be returned; also keeps runs reproducible
    model = AutoModel.from_pretrained(job.model_name,
                                      attn_implementation="eager")
    model.to(job.device)
    model.eval()
    return tokenizer, model


def _content_subwords(encoding):
    """(sequence_index, (start, end)) of every non-special subword."""
    offsets = encoding["offset_mapping"]
    special = encoding["special_tokens_mask"]
    return [(i, (int(start), int(end)))
            for i, ((start, end), flag) in enumerate(zip(offsets, special))
            if not flag]


def export(job):
    """Run one export job; returns the report dict it also writes to disk."""
    sentences = parse_file(job.conllu_path)
    tokenizer, model = load_model(job)
    config = model.config
    limit = min(job.max_sequence_length,
                getattr(config, "max_position_embeddings",
                        job.max_sequence_length))
    seen = set()
    skipped = []
    n_written = 0
    with BinWriter(job.out_path, config.hidden_size,
                   config.num_hidden_layers, config.num_attention_heads,
                   job.include_attention) as writer:
        for index, sent in enumerate(sentences, start=1):
            sid = sent.sent_id if sent.sent_id is not None else str(index)
            if sid in seen:
                raise ExportError("duplicate sent_id %r in %s"
                                  % (sid, job.conllu_path))
            seen.add(sid)
            encoding = tokenizer(sent.text if sent.text is not None else "",
                                 return_offsets_mapping=True,
                                 return_special_tokens_mask=True)
            n_subwords = len(encoding["input_ids"])
            if n_subwords > limit:
                log.warning("skipping %s: %d subwords exceed the limit %d",
                            sid, n_subwords, limit)
                skipped.append({"sent_id": sid, "n_subwords": n_subwords,
                                "limit": limit})
                continue
            content = _content_subwords(encoding)
            try:
                firsts = first_subwords(sent, [span for _, span in content])
            except AlignError as err:
                raise ExportError(str(err)) from None
            firsts = [content[f][0] for f in firsts]
            batch = {key: torch.tensor([encoding[key]], device=job.device)
                     for key in ("input_ids", "token_type_ids",
                                 "attention_mask") if key in encoding}
            with torch.no_grad():
                output = model(**batch,
                               output_attentions=job.include_attention)
            hidden = output.last_hidden_state[0].cpu().numpy()
            attention = None
            if job.include_attention:
                attention = torch.stack(output.attentions)[:, 0] \
                    .cpu().numpy()
            writer.add(sid, firsts, hidden[firsts], n_subwords, attention)
            n_written += 1
    report = {
        "model": job.model_name,
        "conllu": job.conllu_path,
        "out": job.out_path,
        "dim": config.hidden_size,
        "n_layers": config.num_hidden_layers,
        "n_heads": config.num_attention_heads,
        "attention": job.include_attention,
        "max_sequence_length": limit,
        "n_sentences": len(sentences),
        "n_written": n_written,
        "skipped": skipped,
    }
    with open(job.report_path, "w", encoding="utf-8") as handle:
        json.dump(report, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return report
