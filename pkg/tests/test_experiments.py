import numpy as np
import pytest

from clauseprobe import experiments, synthlang, typology


def test_language_configs_are_distinct_and_seeded():
    configs = {key: experiments.language_config(key, seed=4, n_sentences=10)
               for key in experiments.LANGUAGES}
    assert configs["svo_pre"].order == "SVO"
    assert configs["svo_pre"].comp_position == "PRE"
    assert configs["vso_pre"].order == "VSO"
    assert configs["sov_post"].comp_position == "POST"
    seeds = {cfg.rng_seed for cfg in configs.values()}
    assert len(seeds) == 3
    again = experiments.language_config("svo_pre", seed=4, n_sentences=10)
    assert again.to_dict() == configs["svo_pre"].to_dict()


def test_language_vocabularies_disjoint_within_seed():
    forms = {}
    for key in experiments.LANGUAGES:
        cfg = experiments.language_config(key, seed=0, n_sentences=50)
        tb = synthlang.generate_corpus(cfg)
        forms[key] = {t.form for s in tb.sentences for t in s.tokens}
    assert not (forms["svo_pre"] & forms["vso_pre"])
    assert not (forms["svo_pre"] & forms["sov_post"])
    assert not (forms["vso_pre"] & forms["sov_post"])


@pytest.fixture(scope="module")
def small_run():
    return experiments.run_congruence_experiment(
        seed=0, epochs=2, n_train=300, n_test=100, dim=16, n_layers=2,
        n_heads=2, vocab_hash_buckets=32)


def test_result_shape(small_run):
    assert set(small_run) == {"transfer", "accuracies", "baselines",
                              "positional", "attention"}
    acc = small_run["accuracies"]
    assert set(acc) == set(experiments.SOURCES)
    for source in experiments.SOURCES:
        assert set(acc[source]) == set(experiments.LANGUAGES)
        for value in acc[source].values():
            assert 0.0 <= value <= 1.0
    for baseline in small_run["baselines"].values():
        assert 0.0 < baseline < 1.0
    assert isinstance(small_run["positional"],
                      typology.PositionalErrorCounts)


def test_own_language_accuracy_is_high(small_run):
    acc = small_run["accuracies"]
    assert acc["svo_pre"]["svo_pre"] >= 0.9
    assert acc["sov_post"]["sov_post"] >= 0.9


def test_transfer_matrix_has_no_failed_cells(small_run):
    matrix = small_run["transfer"]
    assert not matrix.failures
    assert len(matrix.cells) == len(experiments.SOURCES) * \
        len(experiments.LANGUAGES)


def test_attention_block_is_paired(small_run):
    att = small_run["attention"]
    assert len(att["trained_per_layer"]) == 2
    assert len(att["untrained_per_layer"]) == 2
    assert att["trained_last_layer"] == float(att["trained_per_layer"][-1])
    assert att["n_examples"] > 0
    assert np.isfinite(att["trained_per_layer"]).all()
    assert np.isfinite(att["untrained_per_layer"]).all()


def test_experiment_is_deterministic():
    kwargs = dict(seed=1, epochs=1, n_train=120, n_test=60, dim=8,
                  n_layers=1, n_heads=2, vocab_hash_buckets=16)
    a = experiments.run_congruence_experiment(**kwargs)
    b = experiments.run_congruence_experiment(**kwargs)
    assert a["accuracies"] == b["accuracies"]
    assert a["attention"]["trained_last_layer"] == \
        b["attention"]["trained_last_layer"]
    assert a["positional"].to_dict() == b["positional"].to_dict()


def test_summarize_runs_averages():
    def fake(acc, att):
        return {"accuracies": {s: {t: acc for t in experiments.LANGUAGES}
                               for s in experiments.SOURCES},
                "attention": {"trained_last_layer": att,
                              "untrained_last_layer": att / 2}}
    summary = experiments.summarize_runs([fake(0.4, 0.10), fake(0.8, 0.20)])
    mean = summary["mean_accuracies"]
    assert mean["svo_pre"]["sov_post"] == pytest.approx(0.6)
    assert summary["attention_pairs"] == [(0.10, 0.05), (0.20, 0.10)]
