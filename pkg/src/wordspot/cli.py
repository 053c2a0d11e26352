"""Command-line interface.

Subcommands: synth (render a synthetic corpus), train (fit a network),
embed (dump string or image embeddings), spot (run a retrieval protocol
and report AP/mAP), eval (summarize traces and reports), sigtest
(permutation significance test between two AP reports).

Every command is deterministic under --seed.  Exit codes: 0 success,
2 configuration errors, 3 data errors, 4 numeric failures.  Relative
paths resolve against $WORDSPOT_DATA_ROOT when it is set.
"""

import functools
import json
import os

import click

from wordspot import __version__, datasets, embeddings, optim, pipeline, retrieval
from wordspot.config import RunConfig, load_config
from wordspot.errors import WordspotError
from wordspot.ioutil import atomic_write_text

DATA_ROOT_ENV = "WORDSPOT_DATA_ROOT"

DEFAULT_SYNTH_WORDS = ("acre", "blot", "crow", "dusk", "fern",
                       "gleam", "hinge", "ivory", "jolt", "knack")


class _CliError(click.ClickException):
    def __init__(self, message, exit_code):
        super().__init__(message)
        self.exit_code = exit_code


def _wrap_errors(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except WordspotError as exc:
            raise _CliError(str(exc), exc.exit_code) from exc
    return wrapper


def _resolve(path):
    if path is None or os.path.isabs(path):
        return path
    root = os.environ.get(DATA_ROOT_ENV)
    return os.path.join(root, path) if root else path


def _path_option(*names, **kwargs):
    kwargs.setdefault("callback", lambda ctx, param, value: _resolve(value))
    return click.option(*names, **kwargs)


def _parse_levels(_ctx, _param, value):
    if value is None:
        return None
    try:
        return tuple(int(part) for part in value.split(",") if part.strip())
    except ValueError:
        raise click.BadParameter("levels must be comma-separated integers") from None


@click.group()
@click.version_option(__version__, prog_name="wordspot")
def main():
    """Word spotting with attribute CNNs: synth, train, embed, spot, eval, sigtest."""


@main.command()
@_path_option("--out", required=True, help="Corpus output directory.")
@click.option("--words", default=None,
              help="Comma-separated word classes (default: a builtin 10-word list).")
@_path_option("--wordlist", default=None,
              help="File with one word class per line (alternative to --words).")
@click.option("--height", default=32, show_default=True)
@click.option("--train", "train_count", default=20, show_default=True)
@click.option("--test", "test_count", default=10, show_default=True)
@click.option("--query", "query_count", default=0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@_wrap_errors
def synth(out, words, wordlist, height, train_count, test_count, query_count, seed):
    """Render a deterministic synthetic word-image corpus."""
    if words and wordlist:
        raise _CliError("give --words or --wordlist, not both", 2)
    if wordlist:
        with open(wordlist, "r", encoding="utf-8") as f:
            word_tuple = tuple(w.strip() for w in f if w.strip())
    elif words:
        word_tuple = tuple(w.strip() for w in words.split(",") if w.strip())
    else:
        word_tuple = DEFAULT_SYNTH_WORDS
    spec = datasets.SynthSpec(words=word_tuple, height=height,
                              train_count=train_count, test_count=test_count,
                              query_count=query_count, seed=seed)
    manifest = datasets.generate_synthetic_corpus(spec, out)
    click.echo("wrote %d images for %d classes to %s"
               % (len(manifest.records), len(word_tuple), out))
    click.echo("manifest: %s" % os.path.join(out, "manifest.tsv"))


@main.command()
@_path_option("--config", "config_path", default=None,
              help="JSON run configuration; flags override its values.")
@_path_option("--manifest", required=True)
@_path_option("--out", required=True, help="Checkpoint output path.")
@_path_option("--trace", "trace_path", default=None,
              help="Trace output path (default: <out>.trace).")
@_path_option("--resume", default=None,
              help="Continue from this checkpoint (its config wins).")
@click.option("--arch", type=click.Choice(["phocnet-mini", "phocnet-full"]),
              default=None)
@click.option("--pooling", type=click.Choice(["tpp", "spp"]), default=None)
@click.option("--embedding", type=click.Choice(["phoc", "spoc", "dctow"]),
              default=None)
@click.option("--levels", callback=_parse_levels, default=None,
              help="Embedding pyramid levels, e.g. 2,3,4,5.")
@click.option("--loss", type=click.Choice(["bce", "cosine"]), default=None)
@click.option("--optimizer", type=click.Choice(["adam", "sgd"]), default=None)
@click.option("--lr", "learning_rate", type=float, default=None)
@click.option("--iterations", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--augment/--no-augment", "augment_flag", default=None)
@click.option("--eval-every", type=int, default=None)
@click.option("--log-every", type=int, default=None)
@_wrap_errors
def train(config_path, manifest, out, trace_path, resume, **overrides):
    """Train a network on the manifest's train partition."""
    config = None
    if resume is None:
        base = load_config(config_path).to_dict() if config_path else {}
        rename = {"augment_flag": "augment"}
        for key, value in overrides.items():
            if value is not None:
                base[rename.get(key, key)] = value
        config = RunConfig.from_dict(base)
    manifest_obj = datasets.load_manifest(manifest)
    trace_path = trace_path or out + ".trace"
    network, trace, _ = pipeline.train_run(
        config, manifest_obj, out, trace_out=trace_path, resume=resume,
        extend_to=overrides.get("iterations") if resume else None)
    if trace:
        click.echo("final loss: %r" % trace[-1].loss)
    click.echo("checkpoint: %s" % out)
    click.echo("trace: %s" % trace_path)


@main.command()
@_path_option("--checkpoint", default=None)
@_path_option("--manifest", default=None)
@click.option("--partition", type=click.Choice(["train", "test", "query"]),
              default="test", show_default=True)
@click.option("--strings", default=None,
              help="Comma-separated words to embed directly (string mode).")
@click.option("--embedding", type=click.Choice(["phoc", "spoc", "dctow"]),
              default="phoc", show_default=True, help="String-mode embedding kind.")
@click.option("--levels", callback=_parse_levels, default=None,
              help="String-mode levels (default 2,3,4,5).")
@click.option("--dct-coeffs", type=int, default=3, show_default=True)
@click.option("--alphabet", default=None,
              help="String-mode alphabet override (default: from the words).")
@_path_option("--out", required=True)
@_wrap_errors
def embed(checkpoint, manifest, partition, strings, embedding, levels,
          dct_coeffs, alphabet, out):
    """Dump embeddings: from strings directly, or from images via a checkpoint."""
    if strings is not None:
        words = [w for w in (part.strip() for part in strings.split(",")) if w]
        if not words:
            raise _CliError("no words given in --strings", 2)
        records, used_alphabet = pipeline.embed_strings(
            words, embedding, levels or embeddings.DEFAULT_LEVELS,
            dct_coeffs, alphabet)
        embeddings.write_embedding_dump(out, records)
        click.echo("embedded %d strings (alphabet %r) to %s"
                   % (len(records), used_alphabet, out))
        return
    if checkpoint is None or manifest is None:
        raise _CliError("image mode needs --checkpoint and --manifest "
                        "(or use --strings)", 2)
    manifest_obj = datasets.load_manifest(manifest)
    records, vectors, config = pipeline.embed_manifest_images(
        checkpoint, manifest_obj, partition)
    dump = [(r.path, config.embedding, v) for r, v in zip(records, vectors)]
    embeddings.write_embedding_dump(out, dump)
    click.echo("embedded %d images (d=%d) to %s"
               % (len(dump), vectors.shape[1], out))


@main.command()
@click.option("--mode", type=click.Choice(["qbe", "qbs"]), required=True)
@click.option("--protocol", type=click.Choice(["almazan", "competition"]),
              default="almazan", show_default=True)
@_path_option("--checkpoint", required=True)
@_path_option("--manifest", required=True)
@_path_option("--stopwords", default=None,
              help="File with one stop word per line (queries to discard).")
@_path_option("--out", "report_path", required=True, help="AP report output path.")
@_path_option("--ranks", "ranks_path", default=None,
              help="Also dump the full ranked lists here.")
@_wrap_errors
def spot(mode, protocol, checkpoint, manifest, stopwords, report_path, ranks_path):
    """Run a retrieval protocol and write the per-query AP report."""
    manifest_obj = datasets.load_manifest(manifest)
    stop = ()
    if stopwords:
        with open(stopwords, "r", encoding="utf-8") as f:
            stop = tuple(w.strip() for w in f if w.strip())
    ranked = [] if ranks_path else None
    report = pipeline.spot_run(checkpoint, manifest_obj, mode, protocol,
                               stopwords=stop, ranked_out=ranked)
    retrieval.write_ap_report(report_path, report)
    if ranks_path:
        retrieval.write_ranked_lists(ranks_path, ranked, report.protocol)
        click.echo("ranked lists: %s" % ranks_path)
    click.echo("protocol: %s" % report.protocol)
    click.echo("queries: %d" % len(report.entries))
    click.echo("mAP: %.9f" % report.map_value)
    click.echo("report: %s" % report_path)


@main.command("eval")
@_path_option("--trace", "trace_path", default=None)
@_path_option("--report", "report_path", default=None)
@_wrap_errors
def eval_cmd(trace_path, report_path):
    """Summarize a training trace and/or an AP report."""
    if trace_path is None and report_path is None:
        raise _CliError("give --trace and/or --report", 2)
    if trace_path:
        trace = optim.read_trace(trace_path)
        click.echo("trace %s" % trace_path)
        for line in pipeline.summarize_trace(trace):
            click.echo("  " + line)
    if report_path:
        report = retrieval.read_ap_report(report_path)
        click.echo("report %s" % report_path)
        click.echo("  protocol: %s" % report.protocol)
        click.echo("  queries: %d" % len(report.entries))
        aps = sorted(e[2] for e in report.entries)
        click.echo("  mAP: %.9f" % report.map_value)
        click.echo("  min/median/max AP: %.9f / %.9f / %.9f"
                   % (aps[0], aps[len(aps) // 2], aps[-1]))


@main.command()
@click.argument("report_a", callback=lambda c, p, v: _resolve(v))
@click.argument("report_b", callback=lambda c, p, v: _resolve(v))
@click.option("--s-target", type=float, default=None,
              help="Target deviation of the p estimate (picks k; default 0.001).")
@click.option("--k", type=int, default=None, help="Explicit permutation count.")
@click.option("--sided", type=click.Choice(["two", "greater"]), default="two",
              show_default=True)
@click.option("--paired", is_flag=True,
              help="Swap per-query pairs instead of pooling (equal lengths).")
@click.option("--seed", type=int, default=0, show_default=True)
@_path_option("--out", default=None, help="Also write the result as JSON.")
@_wrap_errors
def sigtest(report_a, report_b, s_target, k, sided, paired, seed, out):
    """Permutation significance test between two AP report files."""
    result, protocol = pipeline.sigtest_run(report_a, report_b, k=k,
                                            s_target=s_target, sided=sided,
                                            paired=paired, seed=seed)
    click.echo("protocol: %s" % protocol)
    click.echo("observed mAP difference: %r" % result.observed_delta)
    click.echo("permutations: %d" % result.k)
    click.echo("p-value: %r" % result.p_value)
    click.echo("std of p estimate: %r" % result.p_std)
    click.echo("sided: %s%s" % (result.sided, " (paired)" if result.paired else ""))
    if out:
        payload = {
            "protocol": protocol,
            "observed_delta": result.observed_delta,
            "k": result.k,
            "p_value": result.p_value,
            "p_std": result.p_std,
            "sided": result.sided,
            "paired": result.paired,
        }
        atomic_write_text(out, json.dumps(payload, indent=2, sort_keys=True) + "\n")
        click.echo("result: %s" % out)


if __name__ == "__main__":
    main()
