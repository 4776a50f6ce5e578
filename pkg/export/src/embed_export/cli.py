"""The embed-export command."""

import argparse
import logging
import os
import sys

from .exporter import ExportError, ExportJob, export
from .udlite import UDParseError


def build_parser():
    parser = argparse.ArgumentParser(
        prog="embed-export",
        description="Export per-token transformer embeddings from a CoNLL-U "
                    "treebank into the clauseprobe binary format.")
    parser.add_argument("--model", required=True,
                        help="model name or local checkpoint directory")
    parser.add_argument("--conllu", required=True, help="input .conllu file")
    parser.add_argument("--out", required=True,
                        help="output embedding file (a JSON skip report is "
                             "written next to it)")
    parser.add_argument("--attention", action="store_true",
                        help="also store attention tensors")
    parser.add_argument("--max-len", type=int, default=512,
                        help="skip sentences tokenizing to more subwords")
    parser.add_argument("--device", default="cpu")
    return parser


def main(argv=None):
    level = os.environ.get("EMBED_EXPORT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        job = ExportJob(args.model, args.conllu, args.out,
                        include_attention=args.attention,
                        max_sequence_length=args.max_len,
                        device=args.device)
        report = export(job)
    except (ExportError, UDParseError, ValueError, OSError) as err:
        sys.stderr.write("error: %s\n" % err)
        return 2
    sys.stdout.write(
        "wrote %s: %d of %d sentences (%d skipped), dim %d%s\n"
        % (report["out"], report["n_written"], report["n_sentences"],
           len(report["skipped"]), report["dim"],
           ", with attention" if report["attention"] else ""))
    return 0


if __name__ == "__main__":
    sys.exit(main())
