"""End-to-end runs shared by the command line and the test suite.

Everything here is deterministic under one master seed: the seed is
split into independent child streams (initialization, dropout,
augmentation, batching, permutations) so each subsystem draws from its
own sequence regardless of the others.  Checkpoints written here carry
the full run configuration, the training alphabet, the iteration
counter, optimizer accumulators, and the rng states, so a resumed run
continues bit-exactly where it stopped.
"""

import numpy as np

from wordspot import augment, datasets, embeddings, optim, retrieval
from wordspot.config import RunConfig
from wordspot.errors import ConfigError, DataError
from wordspot.losses import LOSSES
from wordspot.nn import network as nets

SEED_STREAMS = ("init", "dropout", "augment", "batch", "permutation")


def split_seed(master_seed):
    """Per-subsystem child seed sequences from one master seed."""
    children = np.random.SeedSequence(master_seed).spawn(len(SEED_STREAMS))
    return dict(zip(SEED_STREAMS, children))


def build_architecture(config, d, init_rng):
    if config.arch == "custom":
        spec = nets.NetworkSpec.from_dict(config.custom_spec)
        if spec.d != d:
            raise ConfigError("custom architecture ends at width %d but the "
                              "embedding needs d=%d" % (spec.d, d))
    else:
        spec = nets.PRESETS[config.arch](d, pooling=config.pooling)
    return nets.build_network(spec, init_rng)


def _string_embedder(config, alphabet):
    def embed_fn(word):
        try:
            return embeddings.embed_word(word, alphabet, config.embedding,
                                         config.levels, config.dct_coeffs)
        except ValueError as exc:
            raise DataError("cannot embed %r: %s" % (word, exc)) from exc
    return embed_fn


def _load_corpus(manifest, partition, embed_fn):
    records = manifest.partition(partition)
    corpus = []
    for record in records:
        image = datasets.load_record_image(record, manifest)
        label = embed_fn(record.transcription.lower())
        corpus.append((image, label))
    return records, corpus


def make_eval_hook(config, manifest):
    """QbE mAP on the manifest's test partition, for the training trace."""
    test_records = manifest.partition("test")
    if not test_records:
        return None
    images = [datasets.load_record_image(r, manifest) for r in test_records]
    activation = config.embed_activation()

    def eval_hook(network, iteration):
        vectors = network.embed(images, activation=activation)
        items = [(r.path, v, r.transcription) for r, v in zip(test_records, vectors)]
        try:
            report = retrieval.run_qbe_almazan(items)
        except DataError:
            return float("nan")
        return report.map_value

    return eval_hook


def _optimizer_state_blocks(network):
    blocks = []
    for p in network.parameters():
        for key in sorted(p.state):
            blocks.append(("opt:%s:%s" % (p.name, key), p.state[key]))
    return blocks


def _restore_optimizer_state(network, arrays):
    for p in network.parameters():
        prefix = "opt:%s:" % p.name
        for name in list(arrays):
            if name.startswith(prefix):
                p.state[name[len(prefix):]] = arrays.pop(name).copy()


def save_training_checkpoint(path, network, config, alphabet, state, seed):
    header = {
        "config": config.to_dict(),
        "alphabet": alphabet,
        "train": {"iteration": state.iteration, "rng_states": state.rng_states()},
    }
    nets.save_network(path, network, seed=seed, extra_header=header,
                      extra_blocks=_optimizer_state_blocks(network))


def load_training_checkpoint(path):
    """Returns (network, config, alphabet, state, header)."""
    network, header, arrays = nets.load_network(path)
    if "config" not in header or "alphabet" not in header:
        raise DataError("checkpoint %s lacks training provenance" % path)
    config = RunConfig.from_dict(header["config"])
    alphabet = header["alphabet"]
    train = header.get("train")
    if train is None:
        raise DataError("checkpoint %s lacks training state" % path)
    state = optim.TrainState.from_rng_states(train["iteration"],
                                             train["rng_states"])
    _restore_optimizer_state(network, arrays)
    return network, config, alphabet, state, header


def train_run(config, manifest, checkpoint_out, trace_out=None, resume=None,
              extend_to=None):
    """Train per config on the manifest's train partition.

    Returns (network, trace, alphabet).  With ``resume``, the config,
    alphabet, parameters, optimizer accumulators, and rng streams all
    come from the earlier checkpoint (the ``config`` argument is
    ignored) and training continues to ``extend_to`` total iterations,
    defaulting to the checkpointed budget.
    """
    if resume is not None:
        network, config, alphabet, state, _ = load_training_checkpoint(resume)
        if extend_to is not None:
            config.iterations = int(extend_to)
    else:
        seeds = split_seed(config.seed)
        state = optim.TrainState(
            0,
            np.random.default_rng(seeds["batch"]),
            np.random.default_rng(seeds["dropout"]),
            np.random.default_rng(seeds["augment"]),
        )
        alphabet = None
        network = None
    train_records = manifest.partition("train")
    if not train_records:
        raise DataError("manifest has no train partition")
    if alphabet is None:
        alphabet = embeddings.build_alphabet(
            r.transcription for r in train_records)
    embed_fn = _string_embedder(config, alphabet)
    if network is None:
        d = embeddings.embedding_dim(alphabet, config.embedding, config.levels,
                                     config.dct_coeffs)
        network = build_architecture(config, d,
                                     np.random.default_rng(seeds["init"]))
    _, corpus = _load_corpus(manifest, "train", embed_fn)
    loss_fn = LOSSES[config.loss]
    augment_hook = augment.augment_word_image if config.augment else None
    eval_hook = (make_eval_hook(config, manifest)
                 if config.eval_every > 0 else None)
    trace, state = optim.train_loop(
        network, corpus, loss_fn, config.optimizer_config(),
        max_iterations=config.iterations, batch_size=config.batch_size,
        state=state, augment_hook=augment_hook, eval_hook=eval_hook,
        eval_every=config.eval_every, log_every=config.log_every)
    save_training_checkpoint(checkpoint_out, network, config, alphabet, state,
                             seed=config.seed)
    if trace_out is not None:
        optim.write_trace(trace_out, trace)
    return network, trace, alphabet


def embed_manifest_images(checkpoint_path, manifest, partition):
    """Predict attribute vectors for a manifest partition's images.

    Returns (records, vectors, config): dump-ready inputs where each
    record's name is its manifest path and the kind is the embedding the
    checkpointed run was trained against.
    """
    network, config, _, _, _ = load_training_checkpoint(checkpoint_path)
    records = manifest.partition(partition)
    if not records:
        raise DataError("manifest has no %r partition" % (partition,))
    images = [datasets.load_record_image(r, manifest) for r in records]
    vectors = network.embed(images, activation=config.embed_activation())
    return records, vectors, config


def embed_strings(words, kind, levels, dct_coeffs=3, alphabet=None):
    """Embed raw strings; the alphabet defaults to the words' own characters."""
    folded = [embeddings.fold_word(w) for w in words]
    if alphabet is None:
        alphabet = embeddings.build_alphabet(folded)
    out = []
    for word in folded:
        try:
            out.append((word, kind,
                        embeddings.embed_word(word, alphabet, kind, levels,
                                              dct_coeffs)))
        except ValueError as exc:
            raise DataError("cannot embed %r: %s" % (word, exc)) from exc
    return out, alphabet


def spot_run(checkpoint_path, manifest, mode, protocol, stopwords=(),
             ranked_out=None):
    """Evaluate retrieval per protocol; returns an APReport with provenance."""
    if mode not in ("qbe", "qbs"):
        raise ConfigError("mode must be 'qbe' or 'qbs', got %r" % (mode,))
    if protocol not in ("almazan", "competition"):
        raise ConfigError("protocol must be 'almazan' or 'competition', got %r"
                          % (protocol,))
    network, config, alphabet, _, _ = load_training_checkpoint(checkpoint_path)
    test_records = manifest.partition("test")
    if not test_records:
        raise DataError("manifest has no test partition")
    images = [datasets.load_record_image(r, manifest) for r in test_records]
    vectors = network.embed(images, activation=config.embed_activation())
    test_items = [(r.path, v, r.transcription)
                  for r, v in zip(test_records, vectors)]
    stopwords = tuple(stopwords) + tuple(manifest.stopwords)
    embed_fn = _string_embedder(config, alphabet)
    if protocol == "almazan":
        if mode == "qbe":
            report = retrieval.run_qbe_almazan(test_items, stopwords=stopwords,
                                               ranked_out=ranked_out)
        else:
            report = retrieval.run_qbs_almazan(test_items, embed_fn,
                                               stopwords=stopwords,
                                               ranked_out=ranked_out)
    else:
        query_records = manifest.partition("query")
        if not query_records:
            raise DataError("competition protocol needs a query partition")
        if mode == "qbe":
            q_images = [datasets.load_record_image(r, manifest)
                        for r in query_records]
            q_vectors = network.embed(q_images,
                                      activation=config.embed_activation())
        else:
            q_vectors = [embed_fn(r.transcription.lower())
                         for r in query_records]
        query_items = [(r.path, v, r.transcription)
                       for r, v in zip(query_records, q_vectors)]
        report = retrieval.run_competition_protocol(query_items, test_items,
                                                    mode=mode,
                                                    ranked_out=ranked_out)
    report.config = config.to_dict()
    return report


def evaluate_checkpoint(checkpoint_path, manifest, stopwords=()):
    """Both leave-one-out numbers at once: (QbE mAP, QbS mAP)."""
    qbe = spot_run(checkpoint_path, manifest, "qbe", "almazan", stopwords)
    qbs = spot_run(checkpoint_path, manifest, "qbs", "almazan", stopwords)
    return qbe, qbs


def sigtest_run(report_a, report_b, k=None, s_target=None, sided="two",
                paired=False, seed=0):
    """Permutation test between two AP report files' populations."""
    a = retrieval.read_ap_report(report_a)
    b = retrieval.read_ap_report(report_b)
    if a.protocol != b.protocol:
        raise ConfigError("reports use different protocols: %s vs %s"
                          % (a.protocol, b.protocol))
    if k is not None and s_target is not None:
        raise ConfigError("give either a permutation count or a target "
                          "deviation, not both")
    if k is None:
        k = retrieval.permutations_needed(0.001 if s_target is None else s_target)
    rng = np.random.default_rng(split_seed(seed)["permutation"])
    aps_a = [e[2] for e in a.entries]
    aps_b = [e[2] for e in b.entries]
    try:
        return retrieval.permutation_test(aps_a, aps_b, k, rng, sided=sided,
                                          paired=paired), a.protocol
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def summarize_trace(trace):
    """Human-readable digest of a training trace."""
    if not trace:
        return ["trace is empty"]
    losses = [pt.loss for pt in trace]
    lines = [
        "iterations: %d" % trace[-1].iteration,
        "first logged loss: %.6f (iteration %d)" % (losses[0], trace[0].iteration),
        "final loss: %.6f" % losses[-1],
        "minimum loss: %.6f (iteration %d)"
        % (min(losses), trace[int(np.argmin(losses))].iteration),
    ]
    evals = [(pt.iteration, pt.map_value) for pt in trace
             if pt.map_value is not None and not np.isnan(pt.map_value)]
    if evals:
        best = max(evals, key=lambda e: e[1])
        lines.append("final mAP: %.6f (iteration %d)" % (evals[-1][1], evals[-1][0]))
        lines.append("best mAP: %.6f (iteration %d)" % (best[1], best[0]))
    return lines
