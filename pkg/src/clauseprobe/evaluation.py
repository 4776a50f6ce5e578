"""Scoring clause probes: confusion counts, baselines, transfer matrices.

Counts are kept gold-then-predicted (main_sub = gold MAIN predicted SUB).
Reports store full-precision fractions; percentages rounded to one decimal
(half away from zero) are display-only.  A cell that does not beat the
always-majority baseline is flagged rather than suppressed, and a cell whose
model/testset vector widths disagree is marked failed while the rest of the
grid is still produced.
"""

import math

from . import probe as probe_mod
from .taskdata import MAIN, SUB


def round_half_away_from_zero(value, ndigits=1):
    """Displayed rounding: 87.25 -> 87.3 and -87.25 -> -87.3."""
    factor = 10.0 ** ndigits
    scaled = abs(value) * factor
    rounded = math.floor(scaled + 0.5)
    return math.copysign(rounded / factor, value)


def format_percent(fraction, ndigits=1):
    """A fraction in [0,1] as a percent string with ndigits decimals."""
    return "%.*f" % (ndigits, round_half_away_from_zero(fraction * 100.0,
                                                        ndigits))


class ConfusionMatrix:
    """2x2 gold-by-predicted counts for the MAIN/SUB task."""

    __slots__ = ("main_main", "main_sub", "sub_main", "sub_sub")

    def __init__(self, main_main=0, main_sub=0, sub_main=0, sub_sub=0):
        self.main_main = main_main
        self.main_sub = main_sub
        self.sub_main = sub_main
        self.sub_sub = sub_sub

    @classmethod
    def from_labels(cls, gold, predicted):
        gold = list(gold)
        predicted = list(predicted)
        if len(gold) != len(predicted):
            raise ValueError("gold and predicted label counts differ "
                             "(%d vs %d)" % (len(gold), len(predicted)))
        cm = cls()
        for g, p in zip(gold, predicted):
            if g == MAIN:
                if p == MAIN:
                    cm.main_main += 1
                else:
                    cm.main_sub += 1
            elif g == SUB:
                if p == MAIN:
                    cm.sub_main += 1
                else:
                    cm.sub_sub += 1
            else:
                raise ValueError("unknown gold label %r" % (g,))
        return cm

    @property
    def total(self):
        return self.main_main + self.main_sub + self.sub_main + self.sub_sub

    @property
    def accuracy(self):
        total = self.total
        return (self.main_main + self.sub_sub) / total if total else 0.0

    def to_dict(self):
        return {"main_main": self.main_main, "main_sub": self.main_sub,
                "sub_main": self.sub_main, "sub_sub": self.sub_sub}

    def __eq__(self, other):
        return (isinstance(other, ConfusionMatrix)
                and self.to_dict() == other.to_dict())

    def __repr__(self):
        return ("ConfusionMatrix(main_main=%d, main_sub=%d, sub_main=%d, "
                "sub_sub=%d)" % (self.main_main, self.main_sub,
                                 self.sub_main, self.sub_sub))


def majority_baseline(gold_labels):
    """Accuracy of always answering SUB: the SUB share of the gold labels.

    SUB is the majority class on natural treebanks — every sentence yields
    one MAIN example but however many subordinate predicates it contains.
    """
    gold = list(gold_labels)
    if not gold:
        return 0.0
    return sum(1 for g in gold if g == SUB) / len(gold)


class EvalResult:
    """Confusion counts plus accuracy-vs-baseline for one model/testset pair."""

    def __init__(self, confusion, baseline):
        self.confusion = confusion
        self.baseline = baseline

    @property
    def accuracy(self):
        return self.confusion.accuracy

    @property
    def beats_baseline(self):
        return self.accuracy > self.baseline

    def to_dict(self):
        return {"confusion": self.confusion.to_dict(),
                "n_examples": self.confusion.total,
                "accuracy": self.accuracy,
                "baseline": self.baseline,
                "beats_baseline": self.beats_baseline}


def evaluate_predictions(gold, predicted):
    return EvalResult(ConfusionMatrix.from_labels(gold, predicted),
                      majority_baseline(gold))


def evaluate_probe(probe_params, dataset, encoder_params=None):
    """Score one probe on one dataset (vectors from its own backend)."""
    x = dataset.fixed_vectors(encoder_params)
    if x.shape[1] != probe_params.dim:
        raise ValueError("vector width %d does not match probe input %d"
                         % (x.shape[1], probe_params.dim))
    predicted = probe_mod.predict(probe_params, x)
    gold = [ex.label for ex in dataset.examples]
    return evaluate_predictions(gold, predicted)


class TransferMatrix:
    """Grid of EvalResults for every trained source on every target testset."""

    def __init__(self, sources, targets):
        self.sources = list(sources)
        self.targets = list(targets)
        self.cells = {}      # (source, target) -> EvalResult
        self.failures = {}   # (source, target) -> reason string

    def row_mean(self, source):
        """Arithmetic mean accuracy over the source's non-failed cells."""
        accs = [self.cells[(source, t)].accuracy for t in self.targets
                if (source, t) in self.cells]
        return sum(accs) / len(accs) if accs else None

    def to_dict(self):
        grid = {}
        for s in self.sources:
            row = {}
            for t in self.targets:
                if (s, t) in self.cells:
                    row[t] = self.cells[(s, t)].to_dict()
                else:
                    row[t] = {"failed": self.failures[(s, t)]}
            grid[s] = row
        return {"sources": self.sources, "targets": self.targets,
                "cells": grid,
                "row_means": {s: self.row_mean(s) for s in self.sources}}

    def format_text(self):
        """Aligned table of percent accuracies, one decimal.

        '*' marks cells at or below the majority baseline, '--' failed cells.
        """
        def cell_text(s, t):
            res = self.cells.get((s, t))
            if res is None:
                return "--"
            flag = "" if res.beats_baseline else "*"
            return format_percent(res.accuracy) + flag

        header = ["source"] + list(self.targets) + ["mean"]
        rows = [header]
        for s in self.sources:
            row = [s] + [cell_text(s, t) for t in self.targets]
            mean = self.row_mean(s)
            row.append(format_percent(mean) if mean is not None else "--")
            rows.append(row)
        widths = [max(len(r[c]) for r in rows) for c in range(len(header))]
        lines = []
        for r in rows:
            lines.append("  ".join(
                r[0].ljust(widths[0]) if c == 0 else r[c].rjust(widths[c])
                for c in range(len(r))))
        lines.append("")
        lines.append("* at or below the majority baseline; -- failed cell")
        return "\n".join(lines) + "\n"


def build_transfer_matrix(models, testsets):
    """Evaluate every source model on every target testset.

    models: ordered mapping source name -> (ProbeParams, encoder or None)
    (a bare ProbeParams is accepted); testsets: ordered mapping target name
    -> ClauseDataset.  Incompatible pairs become failed cells, never raise.
    """
    normalized = {}
    for name, model in models.items():
        if isinstance(model, tuple):
            normalized[name] = model
        else:
            normalized[name] = (model, None)
    matrix = TransferMatrix(list(normalized), list(testsets))
    for sname, (params, encoder_params) in normalized.items():
        for tname, dataset in testsets.items():
            try:
                matrix.cells[(sname, tname)] = evaluate_probe(
                    params, dataset, encoder_params)
            except (ValueError, KeyError) as err:
                matrix.failures[(sname, tname)] = str(err)
    return matrix
