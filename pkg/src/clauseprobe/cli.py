"""Command-line entry points.

Subcommands: build-dataset, train, zeroshot, typology, attn-report, synth,
baseline.  Multi-treebank commands read a JSON manifest; reports are written
as machine JSON plus an aligned text table, with matplotlib figures rendered
next to them.  The CLAUSEPROBE_LOG environment variable sets the log level.
"""

import argparse
import json
import logging
import os
import sys

from . import conllu, evaluation, figures, synthlang, taskdata, typology
from . import encoder as enc
from . import probe as probe_mod
from .manifest import ManifestError, load_manifest

log = logging.getLogger("clauseprobe")


class CliError(Exception):
    """User-facing failure: printed as 'error: ...' with exit status 2."""


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _write_text(path, text):
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(text)


def _ensure_out_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _load_config_file(path):
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as handle:
            cfg = json.load(handle)
    except (OSError, json.JSONDecodeError) as err:
        raise CliError("cannot read config %s: %s" % (path, err))
    if not isinstance(cfg, dict):
        raise CliError("config %s must be a JSON object" % path)
    return cfg


def _load_entry_treebank(entry):
    try:
        treebank = conllu.parse_conllu_file(entry.path, name=entry.name)
    except (OSError, conllu.ConlluParseError) as err:
        raise CliError("cannot parse %s: %s" % (entry.path, err))
    violations = conllu.validate(treebank)
    if violations:
        for line in violations[:10]:
            log.error("%s: %s", entry.path, line)
        raise CliError("treebank %s (%s) failed validation with %d "
                       "violation(s)" % (entry.name, entry.path,
                                         len(violations)))
    return treebank


def _merge_group_treebank(entries):
    """Entries of one name/role group as a single treebank."""
    sentences = []
    seen = set()
    for entry in entries:
        treebank = _load_entry_treebank(entry)
        for index, sent in enumerate(treebank.sentences, start=1):
            sid = sent.sent_id if sent.sent_id is not None else str(index)
            if sid in seen:
                raise CliError("duplicate sent_id %r within group %r"
                               % (sid, entry.name))
            seen.add(sid)
            sentences.append(sent)
    return conllu.Treebank(sentences, name=entries[0].name)


def _merge_tables(entries, backend_path=None):
    """EmbeddingTables of a group, merged; duplicate sent_ids rejected."""
    paths = []
    if backend_path is not None:
        paths = [backend_path]
    else:
        for entry in entries:
            if not entry.embeddings:
                raise CliError("file backend needs an 'embeddings' path for "
                               "manifest entry %r (role %s)"
                               % (entry.name, entry.role))
            paths.append(entry.embeddings)
    merged = None
    for path in paths:
        try:
            table = enc.read_embedding_file(path)
        except (OSError, enc.EmbeddingFormatError) as err:
            raise CliError("cannot read embeddings %s: %s" % (path, err))
        if merged is None:
            merged = table
        else:
            if (table.dim, table.n_layers, table.n_heads) != \
                    (merged.dim, merged.n_layers, merged.n_heads):
                raise CliError("embedding headers disagree across %s" % path)
            for sent in table.sentences.values():
                merged.add(sent)
    return merged


def _parse_backend(text):
    if text == "toy":
        return ("toy", None)
    if text == "file":
        return ("file", None)
    if text.startswith("file:"):
        return ("file", text[len("file:"):])
    raise CliError("unknown backend %r (use 'toy', 'file' or 'file:PATH')"
                   % text)


def _train_config(args, config_file, default_select_best=True,
                  default_epochs=None):
    section = dict(config_file.get("train", {}))
    if args.epochs is not None:
        section["epochs"] = args.epochs
    elif "epochs" not in section and default_epochs is not None:
        section["epochs"] = default_epochs
    if args.seed is not None:
        section["rng_seed"] = args.seed
    if args.no_dev_selection:
        section["select_best_on_validation"] = False
    elif "select_best_on_validation" not in section:
        section["select_best_on_validation"] = default_select_best
    try:
        return probe_mod.TrainConfig.from_dict(section)
    except (TypeError, ValueError) as err:
        raise CliError("bad train config: %s" % err)


def _encoder_config(args, config_file):
    section = dict(config_file.get("encoder", {}))
    if args.seed is not None and "rng_seed" not in section:
        section["rng_seed"] = args.seed + 1
    try:
        return enc.ToyEncoderConfig.from_dict(section)
    except (TypeError, ValueError) as err:
        raise CliError("bad encoder config: %s" % err)


def _build_dataset_for(entries, backend, backend_path):
    """(examples, ClauseDataset) for the entries of one name/role group."""
    treebank = _merge_group_treebank(entries)
    examples = taskdata.extract_examples(treebank)
    if backend == "toy":
        dataset = probe_mod.ClauseDataset.from_treebank(examples, treebank)
    else:
        table = _merge_tables(entries, backend_path)
        try:
            dataset = probe_mod.ClauseDataset.from_table(examples, table)
        except (KeyError, IndexError) as err:
            raise CliError("embeddings do not cover group %r: %s"
                           % (entries[0].name, err))
    return examples, dataset


def cmd_build_dataset(args):
    man = load_manifest(args.manifest)
    out_dir = _ensure_out_dir(args.out)
    counts = {}
    lines = []
    for entry in man.entries:
        treebank = _load_entry_treebank(entry)
        examples = taskdata.extract_examples(treebank)
        n_main, n_sub = taskdata.gold_counts(examples)
        stem = "%s-%s" % (entry.name, entry.role)
        taskdata.write_examples_jsonl(examples,
                                      os.path.join(out_dir, stem + ".jsonl"))
        baseline = evaluation.majority_baseline([ex.label for ex in examples])
        counts[stem] = {"main": n_main, "sub": n_sub,
                        "majority_baseline": baseline}
        lines.append("%-24s %6d MAIN %6d SUB  baseline %s%%"
                     % (stem, n_main, n_sub,
                        evaluation.format_percent(baseline)))
    _write_json(os.path.join(out_dir, "counts.json"), counts)
    text = "\n".join(lines) + "\n"
    _write_text(os.path.join(out_dir, "counts.txt"), text)
    sys.stdout.write(text)
    return 0


def _train_one(name, roles, backend, backend_path, train_cfg, encoder_cfg):
    if "train" not in roles:
        raise CliError("treebank %r has no entry with role 'train'" % name)
    encoder_params = None
    if backend == "toy":
        encoder_params = enc.init_toy_encoder(encoder_cfg)
    elif train_cfg.train_encoder:
        raise CliError("train_encoder=true requires the toy backend")
    _, train_set = _build_dataset_for(roles["train"], backend, backend_path)
    dev_set = None
    if "dev" in roles:
        _, dev_set = _build_dataset_for(roles["dev"], backend, backend_path)
    if train_cfg.select_best_on_validation and dev_set is None:
        raise CliError("treebank %r has no dev entry; add one or disable "
                       "best-epoch selection (config train."
                       "select_best_on_validation=false or --no-dev-selection)"
                       % name)
    result = probe_mod.train(train_set, dev_set, train_cfg,
                             encoder_params=encoder_params)
    return result


def cmd_train(args):
    man = load_manifest(args.manifest)
    names = man.names()
    if len(names) != 1:
        raise CliError("'train' expects a manifest with exactly one treebank "
                       "name, found %s (use 'zeroshot' for grids)" % names)
    name = names[0]
    config_file = _load_config_file(args.config)
    backend, backend_path = _parse_backend(args.backend)
    train_cfg = _train_config(args, config_file)
    encoder_cfg = _encoder_config(args, config_file)
    out_dir = _ensure_out_dir(args.out)
    roles = man.by_role(name)
    result = _train_one(name, roles, backend, backend_path, train_cfg,
                        encoder_cfg)
    ckpt = os.path.join(out_dir, "model.ckpt")
    probe_mod.save_checkpoint(ckpt, result.probe, backend,
                              train_cfg.rng_seed, train_cfg,
                              encoder_params=result.encoder_params)
    report = {"treebank": name, "backend": backend,
              "history": result.history, "best_epoch": result.best_epoch,
              "config": train_cfg.to_dict(), "tests": {}}
    lines = ["treebank: %s" % name, "backend: %s" % backend]
    if result.history:
        lines.append("dev accuracy by epoch: %s" %
                     "  ".join(evaluation.format_percent(h)
                               for h in result.history))
        lines.append("best epoch: %d" % (result.best_epoch + 1))
        figures.save_history_curve(result.history,
                                   os.path.join(out_dir, "history.png"))
    for entry_role in ("test", "dev"):
        if entry_role not in roles or (entry_role == "dev" and not args.eval_dev):
            continue
        _, dataset = _build_dataset_for(roles[entry_role], backend,
                                        backend_path)
        scored = evaluation.evaluate_probe(result.probe, dataset,
                                           result.encoder_params)
        report["tests"][entry_role] = scored.to_dict()
        flag = "" if scored.beats_baseline else "  [at/below baseline]"
        lines.append("%s accuracy %s%% (baseline %s%%)%s" % (
            entry_role, evaluation.format_percent(scored.accuracy),
            evaluation.format_percent(scored.baseline), flag))
        cm = scored.confusion
        lines.append("  confusion  gold MAIN: %d/%d   gold SUB: %d/%d" %
                     (cm.main_main, cm.main_sub, cm.sub_main, cm.sub_sub))
    _write_json(os.path.join(out_dir, "report.json"), report)
    text = "\n".join(lines) + "\n"
    _write_text(os.path.join(out_dir, "report.txt"), text)
    sys.stdout.write(text)
    return 0


def cmd_zeroshot(args):
    man = load_manifest(args.manifest)
    config_file = _load_config_file(args.config)
    backend, backend_path = _parse_backend(args.backend)
    # zero-shot convention: few epochs, keep the final parameters
    train_cfg = _train_config(args, config_file, default_select_best=False,
                              default_epochs=2)
    encoder_cfg = _encoder_config(args, config_file)
    out_dir = _ensure_out_dir(args.out)
    models = {}
    for name in man.names():
        roles = man.by_role(name)
        if "train" not in roles:
            continue
        log.info("training source model %s", name)
        result = _train_one(name, roles, backend, backend_path, train_cfg,
                            encoder_cfg)
        models[name] = (result.probe, result.encoder_params)
        probe_mod.save_checkpoint(
            os.path.join(out_dir, "model-%s.ckpt" % name), result.probe,
            backend, train_cfg.rng_seed, train_cfg,
            encoder_params=result.encoder_params)
    if not models:
        raise CliError("manifest has no treebank with a 'train' entry")
    testsets = {}
    test_sentences = {}
    for name in man.names():
        roles = man.by_role(name)
        if "test" not in roles:
            continue
        treebank = _merge_group_treebank(roles["test"])
        examples = taskdata.extract_examples(treebank)
        if backend == "toy":
            testsets[name] = probe_mod.ClauseDataset.from_treebank(
                examples, treebank)
        else:
            table = _merge_tables(roles["test"], backend_path)
            testsets[name] = probe_mod.ClauseDataset.from_table(examples,
                                                                table)
        test_sentences[name] = {
            (s.sent_id if s.sent_id is not None else str(i)): s
            for i, s in enumerate(treebank.sentences, start=1)}
    if not testsets:
        raise CliError("manifest has no treebank with a 'test' entry")
    matrix = evaluation.build_transfer_matrix(models, testsets)
    payload = matrix.to_dict()
    # positional error breakdown for every scored cell
    for sname, (params, encoder_params) in models.items():
        for tname, dataset in testsets.items():
            cell = matrix.cells.get((sname, tname))
            if cell is None:
                continue
            predicted = probe_mod.predict(
                params, dataset.fixed_vectors(encoder_params))
            counts = typology.positional_errors(
                test_sentences[tname], dataset.examples, predicted)
            payload["cells"][sname][tname]["positional_errors"] = \
                counts.to_dict()
    _write_json(os.path.join(out_dir, "transfer.json"), payload)
    text = matrix.format_text()
    _write_text(os.path.join(out_dir, "transfer.txt"), text)
    figures.save_transfer_heatmap(matrix,
                                  os.path.join(out_dir, "transfer.png"))
    sys.stdout.write(text)
    return 0


def cmd_typology(args):
    man = load_manifest(args.manifest)
    out_dir = _ensure_out_dir(args.out)
    deprels = (args.deprels.split(",") if args.deprels
               else sorted(taskdata.SUB_DEPRELS) + ["nsubj", "obj"])
    report = {}
    stats_by_name = {}
    lines = []
    for name in man.names():
        entries = [e for e in man.entries if e.name == name]
        treebank = _merge_group_treebank(entries)
        directions = typology.head_direction(treebank, deprels)
        comp = typology.comp_position(treebank)
        stats_by_name[name] = directions
        report[name] = {
            "head_direction": {d: s.to_dict()
                               for d, s in directions.items()},
            "comp_position": comp.to_dict(),
        }
        lines.append(name)
        for deprel in deprels:
            stat = directions[deprel]
            frac = stat.fraction_parent_right
            shown = ("%s%%" % evaluation.format_percent(frac)
                     if frac is not None else "n/a")
            lines.append("  %-8s parent right %8s   (%d/%d)"
                         % (deprel, shown, stat.n_parent_right, stat.n_total))
        frac_pre = comp.fraction_pre
        lines.append("  marker before predicate: %s  (%d/%d clauses)"
                     % ("%s%%" % evaluation.format_percent(frac_pre)
                        if frac_pre is not None else "n/a",
                        comp.n_mark_before_predicate,
                        comp.n_clauses_with_mark))
    _write_json(os.path.join(out_dir, "typology.json"), report)
    text = "\n".join(lines) + "\n"
    _write_text(os.path.join(out_dir, "typology.txt"), text)
    figures.save_head_direction_bars(
        stats_by_name, os.path.join(out_dir, "head_direction.png"))
    sys.stdout.write(text)
    return 0


def cmd_attn_report(args):
    out_dir = _ensure_out_dir(args.out)
    try:
        treebank = conllu.parse_conllu_file(args.conllu)
    except (OSError, conllu.ConlluParseError) as err:
        raise CliError("cannot parse %s: %s" % (args.conllu, err))
    try:
        table = enc.read_embedding_file(args.embeddings)
    except (OSError, enc.EmbeddingFormatError) as err:
        raise CliError("cannot read embeddings %s: %s"
                       % (args.embeddings, err))
    examples = taskdata.extract_examples(treebank)
    sentences = {(s.sent_id if s.sent_id is not None else str(i)): s
                 for i, s in enumerate(treebank.sentences, start=1)}
    try:
        profile = typology.attention_profile(table, examples, sentences,
                                             head_agg=args.head_agg)
    except (ValueError, KeyError) as err:
        raise CliError(str(err))
    _write_json(os.path.join(out_dir, "attention.json"),
                {"head_agg": args.head_agg, **profile.to_dict()})
    lines = ["marker attention profile over %d subordinate clauses"
             % profile.n_examples]
    for layer, value in enumerate(profile.per_layer, start=1):
        lines.append("  layer %2d: %.6f" % (layer, value))
    text = "\n".join(lines) + "\n"
    _write_text(os.path.join(out_dir, "attention.txt"), text)
    figures.save_attention_profile({"markers": profile.per_layer},
                                   os.path.join(out_dir, "attention.png"))
    sys.stdout.write(text)
    return 0


def cmd_synth(args):
    try:
        cfg = synthlang.SynthGrammarConfig(
            order=args.order, comp_position=args.comp_position,
            n_sentences=args.n, p_subordinate=args.p_subordinate,
            max_depth=args.max_depth, rng_seed=args.seed or 0)
    except ValueError as err:
        raise CliError(str(err))
    treebank = synthlang.generate_corpus(cfg)
    conllu.write_conllu_file(treebank, args.out)
    examples = taskdata.extract_examples(treebank)
    n_main, n_sub = taskdata.gold_counts(examples)
    sys.stdout.write("wrote %s: %d sentences, %d MAIN / %d SUB examples\n"
                     % (args.out, len(treebank.sentences), n_main, n_sub))
    return 0


def cmd_baseline(args):
    man = load_manifest(args.manifest)
    out_dir = _ensure_out_dir(args.out)
    report = {}
    lines = []
    for entry in man.entries:
        treebank = _load_entry_treebank(entry)
        examples = taskdata.extract_examples(treebank)
        n_main, n_sub = taskdata.gold_counts(examples)
        baseline = evaluation.majority_baseline([ex.label for ex in examples])
        stem = "%s-%s" % (entry.name, entry.role)
        report[stem] = {"main": n_main, "sub": n_sub,
                        "majority_baseline": baseline}
        lines.append("%-24s baseline %6s%%  (%d MAIN / %d SUB)"
                     % (stem, evaluation.format_percent(baseline),
                        n_main, n_sub))
    _write_json(os.path.join(out_dir, "baseline.json"), report)
    text = "\n".join(lines) + "\n"
    _write_text(os.path.join(out_dir, "baseline.txt"), text)
    sys.stdout.write(text)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="clauseprobe",
        description="Clause subordination probing over CoNLL-U treebanks.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, manifest=True, backend=False, training=False):
        if manifest:
            p.add_argument("--manifest", required=True,
                           help="JSON manifest of treebank files")
        p.add_argument("--out", required=True,
                       help="output directory (or file for 'synth')")
        if backend:
            p.add_argument("--backend", default="toy",
                           help="'toy', 'file' (per-entry embeddings) or "
                                "'file:PATH'")
        if training:
            p.add_argument("--epochs", type=int, default=None)
            p.add_argument("--seed", type=int, default=None)
            p.add_argument("--config", default=None,
                           help="JSON config with 'train'/'encoder' sections")
            p.add_argument("--no-dev-selection", action="store_true",
                           help="keep final-epoch parameters instead of the "
                                "best dev epoch")

    p = sub.add_parser("build-dataset",
                       help="extract MAIN/SUB examples to JSONL")
    add_common(p)
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("train", help="train one probe")
    add_common(p, backend=True, training=True)
    p.add_argument("--eval-dev", action="store_true",
                   help="also score the dev split in the report")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("zeroshot",
                       help="train per-source probes and evaluate the grid")
    add_common(p, backend=True, training=True)
    p.set_defaults(func=cmd_zeroshot)

    p = sub.add_parser("typology",
                       help="head direction and marker position per treebank")
    add_common(p)
    p.add_argument("--deprels", default=None,
                   help="comma-separated base relations to profile")
    p.set_defaults(func=cmd_typology)

    p = sub.add_parser("attn-report",
                       help="marker attention profile from an embedding file")
    p.add_argument("--conllu", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--head-agg", choices=("mean", "max"), default="mean")
    p.set_defaults(func=cmd_attn_report)

    p = sub.add_parser("synth", help="generate a synthetic treebank")
    p.add_argument("--order", required=True, choices=synthlang.ORDERS)
    p.add_argument("--comp-position", required=True,
                   choices=synthlang.COMP_POSITIONS)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--p-subordinate", type=float, default=0.5)
    p.add_argument("--max-depth", type=int, default=2)
    p.add_argument("--out", required=True, help="output .conllu path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("baseline",
                       help="majority baselines and gold counts")
    add_common(p)
    p.set_defaults(func=cmd_baseline)
    return parser


def main(argv=None):
    level = os.environ.get("CLAUSEPROBE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "eval_dev"):
        args.eval_dev = False
    if not hasattr(args, "no_dev_selection"):
        args.no_dev_selection = False
    try:
        return args.func(args)
    except (CliError, ManifestError) as err:
        sys.stderr.write("error: %s\n" % err)
        return 2


if __name__ == "__main__":
    sys.exit(main())
