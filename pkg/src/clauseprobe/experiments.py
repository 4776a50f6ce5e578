"""Word-order congruence experiment on synthetic languages.

Trains toy-encoder+probe models on an SVO corpus with preposed markers and
an SOV corpus with postposed markers, then scores both on SVO, VSO and SOV
test splits with lexically disjoint vocabularies.  Transfer should degrade
with word-order incongruence, the SVO model's failures on SOV should pile up
on sentence-initial subordinate clauses (read as MAIN) and sentence-final
main clauses (read as SUB), and training should raise the subordinate
predicates' attention on their markers.
"""

from . import encoder as enc
from . import evaluation, probe, synthlang, taskdata, typology

LANGUAGES = {
    "svo_pre": ("SVO", "PRE"),
    "vso_pre": ("VSO", "PRE"),
    "sov_post": ("SOV", "POST"),
}
SOURCES = ("svo_pre", "sov_post")


def language_config(key, seed, n_sentences, p_subordinate=0.7, max_depth=2):
    """Grammar config for one of the three experiment languages.

    Each language derives a distinct rng seed from the experiment seed, so
    vocabularies stay disjoint across languages as well as across reruns.
    """
    order, comp = LANGUAGES[key]
    offset = list(LANGUAGES).index(key) + 1
    return synthlang.SynthGrammarConfig(
        order, comp, n_sentences=n_sentences, p_subordinate=p_subordinate,
        max_depth=max_depth, rng_seed=seed * 10 + offset)


def _sentence_map(treebank):
    out = {}
    for index, sent in enumerate(treebank.sentences, start=1):
        sid = sent.sent_id if sent.sent_id is not None else str(index)
        out[sid] = sent
    return out


def run_congruence_experiment(seed=0, epochs=2, n_train=2000, n_test=500,
                              dim=32, n_layers=2, n_heads=4,
                              vocab_hash_buckets=64, learning_rate=0.2,
                              batch_size=16, p_subordinate=0.7, max_depth=2):
    """One full seed of the experiment; returns a result dict.

    Keys: "transfer" (TransferMatrix over sources x targets), "accuracies"
    (plain nested dict), "positional" (PositionalErrorCounts of the SVO model
    on the SOV test), "attention" (trained vs untrained last-layer SUB->mark
    mass on the SVO test), "baselines" (majority baseline per test split).
    """
    splits = {}
    for key in LANGUAGES:
        corpus = synthlang.generate_corpus(
            language_config(key, seed, n_train + n_test, p_subordinate,
                            max_depth))
        splits[key] = synthlang.split_corpus(corpus, n_train)
    encoder_cfg = enc.ToyEncoderConfig(
        dim=dim, n_layers=n_layers, n_heads=n_heads,
        vocab_hash_buckets=vocab_hash_buckets, rng_seed=seed * 10 + 7)
    train_cfg = probe.TrainConfig(
        epochs=epochs, batch_size=batch_size, learning_rate=learning_rate,
        rng_seed=seed * 10 + 8, train_encoder=True,
        select_best_on_validation=False)
    models = {}
    for src in SOURCES:
        train_tb, _ = splits[src]
        dataset = probe.ClauseDataset.from_treebank(
            taskdata.extract_examples(train_tb), train_tb)
        result = probe.train(dataset, None, train_cfg,
                             encoder_params=enc.init_toy_encoder(encoder_cfg))
        models[src] = (result.probe, result.encoder_params)
    testsets = {}
    for key in LANGUAGES:
        _, test_tb = splits[key]
        testsets[key] = probe.ClauseDataset.from_treebank(
            taskdata.extract_examples(test_tb), test_tb)
    matrix = evaluation.build_transfer_matrix(models, testsets)
    accuracies = {s: {t: matrix.cells[(s, t)].accuracy for t in LANGUAGES}
                  for s in SOURCES}
    baselines = {t: evaluation.majority_baseline(
        [ex.label for ex in testsets[t].examples]) for t in LANGUAGES}

    # positional breakdown of the incongruent SVO -> SOV cell
    svo_probe, svo_encoder = models["svo_pre"]
    sov_test = testsets["sov_post"]
    predicted = probe.predict(svo_probe, sov_test.fixed_vectors(svo_encoder))
    positional = typology.positional_errors(
        _sentence_map(splits["sov_post"][1]), sov_test.examples, predicted)

    # attention on markers before vs after training, on the SVO test split
    svo_test_tb = splits["svo_pre"][1]
    svo_examples = testsets["svo_pre"].examples
    svo_sentences = _sentence_map(svo_test_tb)
    profiles = {}
    for label, params in (("trained", svo_encoder),
                          ("untrained", enc.init_toy_encoder(encoder_cfg))):
        table = enc.encode_treebank(params, svo_test_tb, attention=True)
        profiles[label] = typology.attention_profile(
            table, svo_examples, svo_sentences)
    attention = {
        "trained_per_layer": profiles["trained"].per_layer,
        "untrained_per_layer": profiles["untrained"].per_layer,
        "trained_last_layer": float(profiles["trained"].per_layer[-1]),
        "untrained_last_layer": float(profiles["untrained"].per_layer[-1]),
        "n_examples": profiles["trained"].n_examples,
    }
    return {"transfer": matrix, "accuracies": accuracies,
            "baselines": baselines, "positional": positional,
            "attention": attention}


def summarize_runs(results):
    """Mean cross-seed accuracies and the per-seed attention comparisons."""
    mean_acc = {s: {t: sum(r["accuracies"][s][t] for r in results) / len(results)
                    for t in LANGUAGES} for s in SOURCES}
    attention = [(r["attention"]["trained_last_layer"],
                  r["attention"]["untrained_last_layer"]) for r in results]
    return {"mean_accuracies": mean_acc, "attention_pairs": attention}
