"""
Command-line entry point.

Usage:
------
    python -m contrastnet synth --out-data d.jsonl --out-splits s.json --n 5
    python -m contrastnet train --data d.jsonl --splits s.json --out m.bin --history h.jsonl
    python -m contrastnet eval --model m.bin --data d.jsonl --splits s.json --split test --episodes 600
    python -m contrastnet gradcheck --seed 3

Results are JSON on stdout; progress is logged to stderr. Exit codes: 0 success,
1 usage error, 2 data or validation error, 3 numerical failure.
"""

import json
import logging
from typing import Optional, Sequence

import click
import numpy as np
from click.core import ParameterSource

from config.logger_config import configure_run_logger, get_run_logger, log_error
from config.settings import load_train_config, resolve_threads, threads_override
from constants import (
    DEFAULT_ADAM_BETA1,
    DEFAULT_ADAM_BETA2,
    DEFAULT_ADAM_EPS,
    DEFAULT_ALPHA0,
    DEFAULT_ALPHA_FLOOR,
    DEFAULT_BETA,
    DEFAULT_BUCKET_COUNT,
    DEFAULT_DELETE_PROB,
    DEFAULT_DIM,
    DEFAULT_INIT_SCALE,
    DEFAULT_INSERT_COUNT,
    DEFAULT_LR,
    DEFAULT_N_INST,
    DEFAULT_N_TASK,
    DEFAULT_SWAP_COUNT,
    DEFAULT_TAU_CON,
    DEFAULT_TAU_INST,
    DEFAULT_TAU_TASK,
    DEFAULT_WEIGHT_DECAY,
    EXIT_DATA,
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_USAGE,
    INTENT_EVAL_EPISODES,
    SPLIT_NAMES,
    TEST,
    TRAIN,
)
from contrastnet.augment import EdaParams, bind_store, eda_augment, load_augmentations
from contrastnet.corpus import (
    TokenizerConfig,
    corpus_stats,
    load_corpus,
    read_documents,
    resplit,
    words,
)
from contrastnet.encoder import load_checkpoint
from contrastnet.episodes import sample_episode
from contrastnet.errors import DataError, NumericalError
from contrastnet.evaluation import dump_embeddings, evaluate, write_predictions
from contrastnet.gradcheck import check_config, run_suite, summarize
from contrastnet.synth import SynthSpec, generate, write
from contrastnet.trainer import train as train_model

logger = get_run_logger()

FILE = click.Path(dir_okay=False)
SEED = click.IntRange(0, 2 ** 64 - 1)

LOSS_OPTIONS = ("tau_con", "tau_task", "tau_inst", "alpha0", "alpha_floor", "beta", "n_task", "n_inst")
EDA_OPTIONS = ("swap_count", "delete_prob", "insert_count")


def _emit(payload) -> None:
    click.echo(json.dumps(payload))


def _explicit(ctx: click.Context, exclude=frozenset()) -> dict:
    """Parameters given on the command line rather than left at their defaults"""
    return {
        name: value
        for name, value in ctx.params.items()
        if name not in exclude and ctx.get_parameter_source(name) not in (None, ParameterSource.DEFAULT)
    }


def data_options(f):
    f = click.option("--splits", "splits_path", type=FILE, required=True, help="Splits JSON file")(f)
    f = click.option("--data", "data_path", type=FILE, required=True, help="Corpus JSONL file")(f)
    return f


def tokenizer_options(f):
    f = click.option("--strip-punct/--no-strip-punct", default=True, help="Strip edge punctuation")(f)
    f = click.option("--lowercase/--no-lowercase", default=True, help="Lowercase before hashing")(f)
    return f


def shape_options(f):
    f = click.option("--m", type=int, default=5, show_default=True, help="Queries per class")(f)
    f = click.option("--k", type=int, default=1, show_default=True, help="Support examples per class")(f)
    f = click.option("--n", type=int, default=5, show_default=True, help="Classes per episode")(f)
    return f


def _tokenizer(bucket_count: int, lowercase: bool, strip_punct: bool) -> TokenizerConfig:
    return TokenizerConfig(bucket_count=bucket_count, lowercase=lowercase, strip_punct=strip_punct)


@click.group(no_args_is_help=False)
@click.option("--log-dir", type=click.Path(file_okay=False), default=None,
              help="Also write session, rotating and error logs here")
@click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
              default=None, help="Console log level")
def cli(log_dir, log_level):
    """Few-shot text classification with supervised and unsupervised contrastive learning."""
    configure_run_logger(
        log_dir=log_dir,
        console_level=getattr(logging, log_level.upper()) if log_level else None,
    )


@cli.command()
@data_options
@tokenizer_options
@click.option("--seed", type=SEED, default=0, help="Run seed (u64)")
@click.option("--config", "config_path", type=FILE, default=None, help="TrainConfig JSON file")
@click.option("--out", "out_path", type=FILE, required=True, help="Checkpoint path")
@click.option("--history", "history_path", type=FILE, default=None, help="Loss history JSONL")
@click.option("--augment-file", "augment_path", type=FILE, default=None, help="Paraphrase JSONL file")
@click.option("--disable-task/--enable-task", default=False, help="Drop the task-level loss")
@click.option("--disable-inst/--enable-inst", default=False, help="Drop the instance-level loss")
@click.option("--n", type=int, default=5)
@click.option("--k", type=int, default=1)
@click.option("--m", type=int, default=5)
@click.option("--episodes", "total_episodes", type=int, default=1000, help="Training episodes")
@click.option("--lr", type=float, default=DEFAULT_LR)
@click.option("--adam-beta1", type=float, default=DEFAULT_ADAM_BETA1)
@click.option("--adam-beta2", type=float, default=DEFAULT_ADAM_BETA2)
@click.option("--adam-eps", type=float, default=DEFAULT_ADAM_EPS)
@click.option("--weight-decay", type=float, default=DEFAULT_WEIGHT_DECAY, help="Decoupled decay of updated rows")
@click.option("--val-every", type=int, default=100)
@click.option("--val-episodes", type=int, default=100)
@click.option("--dim", type=int, default=DEFAULT_DIM)
@click.option("--init-scale", type=float, default=DEFAULT_INIT_SCALE)
@click.option("--buckets", "bucket_count", type=int, default=DEFAULT_BUCKET_COUNT)
@click.option("--normalize/--no-normalize", default=False, help="L2-normalize representations")
@click.option("--dense-adam/--sparse-adam", default=False)
@click.option("--predictor", type=click.Choice(["nn", "proto"]), default="nn", help="Validation predictor")
@click.option("--threads", type=int, default=None)
@click.option("--tau-con", type=float, default=DEFAULT_TAU_CON)
@click.option("--tau-task", type=float, default=DEFAULT_TAU_TASK)
@click.option("--tau-inst", type=float, default=DEFAULT_TAU_INST)
@click.option("--alpha0", type=float, default=DEFAULT_ALPHA0)
@click.option("--alpha-floor", type=float, default=DEFAULT_ALPHA_FLOOR)
@click.option("--beta", type=float, default=DEFAULT_BETA)
@click.option("--n-task", type=int, default=DEFAULT_N_TASK)
@click.option("--n-inst", type=int, default=DEFAULT_N_INST)
@click.option("--swap-count", type=int, default=DEFAULT_SWAP_COUNT)
@click.option("--delete-prob", type=float, default=DEFAULT_DELETE_PROB)
@click.option("--insert-count", type=int, default=DEFAULT_INSERT_COUNT)
@click.pass_context
def train(ctx, data_path, splits_path, config_path, out_path, history_path, threads, **_):
    """Meta-train the encoder and keep the best-validating checkpoint.

    Options given on the command line win over the --config file, which wins over defaults.
    """
    given = _explicit(ctx, exclude={"data_path", "splits_path", "config_path", "out_path", "history_path", "threads"})
    overrides = {key: value for key, value in given.items() if key not in LOSS_OPTIONS + EDA_OPTIONS}
    overrides["loss"] = {key: given.get(key) for key in LOSS_OPTIONS}
    overrides["eda"] = {key: given.get(key) for key in EDA_OPTIONS}
    overrides["threads"] = threads_override(threads)
    cfg = load_train_config(config_path, overrides)

    corpus = load_corpus(data_path, splits_path, cfg.tokenizer)
    store = None
    if cfg.augment_path:
        store = bind_store(load_augmentations(cfg.augment_path), corpus)

    _, history, checkpoint = train_model(corpus, cfg, out_path, history_path, store)
    best = max((v["val_accuracy"] for v in history.validations), default=None)
    _emit({
        "checkpoint": str(checkpoint),
        "episodes": len(history.episodes),
        "validations": len(history.validations),
        "best_val_accuracy": best,
        "final": history.episodes[-1] if history.episodes else None,
        "config": cfg.to_dict(),
    })


@cli.command(name="eval")
@data_options
@tokenizer_options
@shape_options
@click.option("--seed", type=SEED, default=0, show_default=True)
@click.option("--model", "model_path", type=FILE, required=True, help="Checkpoint path")
@click.option("--split", type=click.Choice(SPLIT_NAMES), default=TEST, show_default=True)
@click.option("--episodes", type=int, default=INTENT_EVAL_EPISODES, show_default=True)
@click.option("--predictor", type=click.Choice(["nn", "proto"]), default="nn", show_default=True)
@click.option("--normalize/--no-normalize", default=False, show_default=True)
@click.option("--threads", type=int, default=None, help="Worker threads (default: CONTRASTNET_THREADS or 1)")
@click.option("--report", "report_path", type=FILE, default=None, help="Also write the report JSON here")
@click.option("--predictions", "predictions_path", type=FILE, default=None, help="Per-query predictions TSV")
def evaluate_command(data_path, splits_path, lowercase, strip_punct, n, k, m, seed, model_path, split,
                     episodes, predictor, normalize, threads, report_path, predictions_path):
    """Mean accuracy over independently sampled episodes."""
    params, _ = load_checkpoint(model_path)
    corpus = load_corpus(data_path, splits_path, _tokenizer(params.bucket_count, lowercase, strip_punct))
    report = evaluate(
        params, corpus, split, n, k, m, episodes, predictor, seed,
        threads=resolve_threads(threads), normalize=normalize,
        collect_predictions=predictions_path is not None,
    )
    if report_path:
        with open(report_path, "w", encoding="utf-8") as f:
            f.write(report.to_json() + "\n")
    if predictions_path:
        write_predictions(report, predictions_path)
    click.echo(report.to_json())


@cli.command()
@click.option("--seed", type=SEED, default=0, show_default=True)
@click.option("--trials", type=int, default=100, show_default=True, help="Random instances per check")
@click.option("--data", "data_path", type=FILE, default=None, help="Run the end-to-end check on this corpus")
@click.option("--splits", "splits_path", type=FILE, default=None)
@click.pass_context
def gradcheck(ctx, seed, trials, data_path, splits_path):
    """Finite-difference checks of every analytic gradient."""
    if (data_path is None) != (splits_path is None):
        raise click.UsageError("--data and --splits go together")
    corpus = None
    if data_path is not None:
        corpus = load_corpus(data_path, splits_path, check_config(seed).tokenizer)
    summary = summarize(run_suite(trials, seed, corpus))
    _emit(summary)
    ctx.exit(EXIT_OK if summary["passed"] else EXIT_NUMERICAL)


@cli.command()
@data_options
@tokenizer_options
@shape_options
@click.option("--seed", type=SEED, default=0, show_default=True)
@click.option("--buckets", "bucket_count", type=int, default=4096, show_default=True)
@click.option("--split", type=click.Choice(SPLIT_NAMES), default=TRAIN, show_default=True)
@click.option("--count", type=int, default=1, show_default=True)
def episodes(data_path, splits_path, lowercase, strip_punct, n, k, m, seed, bucket_count, split, count):
    """Dump sampled episodes for inspection."""
    corpus = load_corpus(data_path, splits_path, _tokenizer(bucket_count, lowercase, strip_punct))
    rng = np.random.default_rng(seed)
    _emit([sample_episode(corpus, split, n, k, m, rng).to_dict() for _ in range(count)])


@cli.command()
@data_options
@tokenizer_options
@click.option("--seed", type=SEED, default=0, show_default=True)
@click.option("--method", type=click.Choice(["eda"]), default="eda", show_default=True)
@click.option("--out", "out_path", type=FILE, required=True, help="Augmentation JSONL")
@click.option("--split", type=click.Choice(SPLIT_NAMES), default=None, help="Only this split")
@click.option("--views", type=int, default=1, show_default=True, help="Augmentations per document")
@click.option("--swap-count", type=int, default=None)
@click.option("--delete-prob", type=float, default=None)
@click.option("--insert-count", type=int, default=None)
def augment(data_path, splits_path, lowercase, strip_punct, seed, method, out_path, split, views,
            swap_count, delete_prob, insert_count):
    """Materialize EDA views as an augmentation file."""
    if views < 1:
        raise click.BadParameter("must be positive", param_hint="--views")
    tok = _tokenizer(4096, lowercase, strip_punct)
    corpus = load_corpus(data_path, splits_path, tok)
    eda = {"swap_count": swap_count, "delete_prob": delete_prob, "insert_count": insert_count}
    params = EdaParams(**{key: value for key, value in eda.items() if value is not None})

    ids = corpus.split_documents(split) if split else [doc.id for doc in corpus.documents]
    with open(out_path, "w", encoding="utf-8", newline="\n") as f:
        for index, doc_id in enumerate(ids):
            rng = np.random.default_rng([seed, index])
            tokens = words(corpus.by_id[doc_id].text, tok)
            texts = [" ".join(eda_augment(tokens, params, rng)) for _ in range(views)]
            f.write(json.dumps({"id": doc_id, "augmentations": texts}, ensure_ascii=False) + "\n")
    logger.info(f"Wrote {method} views for {len(ids)} documents to {out_path}")
    _emit({"out": out_path, "documents": len(ids), "views": views, "method": method})


@cli.command()
@data_options
@tokenizer_options
@click.option("--model", "model_path", type=FILE, required=True, help="Checkpoint path")
@click.option("--split", type=click.Choice(SPLIT_NAMES), default=TEST, show_default=True)
@click.option("--out", "out_path", type=FILE, required=True, help="Embeddings TSV")
@click.option("--normalize/--no-normalize", default=False, show_default=True)
def embed(data_path, splits_path, lowercase, strip_punct, model_path, split, out_path, normalize):
    """Write id, label and representation of every document in a split."""
    params, _ = load_checkpoint(model_path)
    corpus = load_corpus(data_path, splits_path, _tokenizer(params.bucket_count, lowercase, strip_punct))
    rows = dump_embeddings(params, corpus, split, out_path, normalize)
    _emit({"out": out_path, "rows": rows, "dim": params.dim})


@cli.command()
@data_options
@tokenizer_options
@click.option("--buckets", "bucket_count", type=int, default=4096, show_default=True)
def stats(data_path, splits_path, lowercase, strip_punct, bucket_count):
    """Corpus statistics."""
    corpus = load_corpus(data_path, splits_path, _tokenizer(bucket_count, lowercase, strip_punct))
    _emit(corpus_stats(corpus).to_dict())


@cli.command()
@click.option("--seed", type=SEED, default=0, show_default=True)
@click.option("--class-count", type=int, default=20, show_default=True)
@click.option("--docs-per-class", type=int, default=100, show_default=True)
@click.option("--vocab-per-class", type=int, default=10, show_default=True)
@click.option("--shared-vocab", type=int, default=50, show_default=True)
@click.option("--tokens-per-doc", type=int, default=20, show_default=True)
@click.option("--signature-ratio", type=float, default=0.8, show_default=True)
@click.option("--n", "min_split_classes", type=int, default=1, show_default=True,
              help="Minimum classes per split (episode way)")
@click.option("--out-data", type=FILE, required=True)
@click.option("--out-splits", type=FILE, required=True)
def synth(seed, class_count, docs_per_class, vocab_per_class, shared_vocab, tokens_per_doc,
          signature_ratio, min_split_classes, out_data, out_splits):
    """Generate a class-separable synthetic corpus."""
    spec = SynthSpec(
        class_count=class_count,
        docs_per_class=docs_per_class,
        vocab_per_class=vocab_per_class,
        shared_vocab=shared_vocab,
        tokens_per_doc=tokens_per_doc,
        signature_ratio=signature_ratio,
        seed=seed,
        min_split_classes=min_split_classes,
    )
    corpus = generate(spec)
    write(corpus, out_data, out_splits)
    _emit({"documents": len(corpus.records), "splits": {k: len(v) for k, v in corpus.splits.items()}})


@cli.command()
@click.option("--data", "data_path", type=FILE, required=True, help="Corpus JSONL file")
@click.option("--seed", type=SEED, default=0, show_default=True)
@click.option("--counts", type=(int, int, int), required=True, help="Train, val and test class counts")
@click.option("--out", "out_path", type=FILE, required=True, help="Splits JSON")
def splits(data_path, seed, counts, out_path):
    """Randomly re-split the classes of a corpus."""
    labels = [doc.label for doc in read_documents(data_path)]
    spec = resplit(labels, counts, seed)
    with open(out_path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(spec.to_dict(), f, indent=2)
        f.write("\n")
    _emit(spec.to_dict())


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Dispatch one subcommand and map failures onto exit codes"""
    try:
        rv = cli.main(
            args=list(argv) if argv is not None else None,
            prog_name="contrastnet",
            standalone_mode=False,
        )
    except click.UsageError as e:
        e.show()
        return EXIT_USAGE
    except click.ClickException as e:
        e.show()
        return EXIT_DATA
    except click.Abort:
        return EXIT_USAGE
    except NumericalError as e:
        log_error(e, context="numerical check")
        return EXIT_NUMERICAL
    except DataError as e:
        log_error(e)
        return EXIT_DATA
    except OSError as e:
        log_error(e, context="file access")
        return EXIT_DATA
    return rv if isinstance(rv, int) else EXIT_OK
