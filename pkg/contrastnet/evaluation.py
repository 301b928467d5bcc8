"""
Nearest-neighbor label prediction, the prototype baseline, many-episode accuracy and
embedding export.

Per-episode generators are derived from (seed, episode index), so serial and threaded
evaluation produce identical reports.
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, Hashable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from config.logger_config import get_run_logger
from contrastnet.corpus import Corpus
from contrastnet.encoder import EncoderParams, encode_many
from contrastnet.episodes import Episode, sample_episode
from contrastnet.errors import DataError

logger = get_run_logger()

Predictor = Callable[[np.ndarray, Sequence[Hashable], np.ndarray], Hashable]


class PredictionError(DataError):
    """Prediction inputs are invalid"""


@dataclass
class EvalReport:
    episodes: int
    per_episode_accuracy: List[float]
    mean: float
    std: float
    seed: int
    n: int
    k: int
    m: int
    split: str
    predictor: str
    predictions: Optional[List[dict]] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        data = asdict(self)
        data.pop("predictions")
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _check_support(support_reps, support_labels) -> np.ndarray:
    reps = np.asarray(support_reps, dtype=np.float64)
    if reps.ndim != 2 or reps.shape[0] == 0:
        raise PredictionError("support set is empty")
    if len(support_labels) != reps.shape[0]:
        raise PredictionError(f"{len(support_labels)} labels for {reps.shape[0]} support representations")
    return reps


def nn_predict(support_reps, support_labels: Sequence[Hashable], query_rep) -> Hashable:
    """Label of the support instance with the largest inner product; ties go to the lowest index"""
    reps = _check_support(support_reps, support_labels)
    query = np.asarray(query_rep, dtype=np.float64)
    if query.shape != (reps.shape[1],):
        raise PredictionError(f"query dimension {query.shape} does not match support dimension {reps.shape[1]}")
    return support_labels[int(np.argmax(reps @ query))]


def proto_predict(support_reps, support_labels: Sequence[Hashable], query_rep) -> Hashable:
    """Label of the closest class mean (Euclidean); ties go to the first-appearing class"""
    reps = _check_support(support_reps, support_labels)
    query = np.asarray(query_rep, dtype=np.float64)
    if query.shape != (reps.shape[1],):
        raise PredictionError(f"query dimension {query.shape} does not match support dimension {reps.shape[1]}")
    classes = list(dict.fromkeys(support_labels))
    labels = np.asarray([classes.index(y) for y in support_labels])
    prototypes = np.stack([reps[labels == i].mean(axis=0) for i in range(len(classes))])
    distances = np.sum((prototypes - query) ** 2, axis=1)
    return classes[int(np.argmin(distances))]


PREDICTORS: Dict[str, Predictor] = {"nn": nn_predict, "proto": proto_predict}


def get_predictor(predictor: Union[str, Predictor]) -> Predictor:
    if callable(predictor):
        return predictor
    try:
        return PREDICTORS[predictor]
    except KeyError:
        raise PredictionError(f"unknown predictor {predictor!r}; expected nn or proto") from None


def predict_episode(
    params: EncoderParams,
    corpus: Corpus,
    episode: Episode,
    predictor: Union[str, Predictor] = "nn",
    normalize: bool = False,
) -> List[Hashable]:
    """Predicted label per query; query labels are never read"""
    predict = get_predictor(predictor)
    support_ids = [i for i, _ in episode.support]
    support_labels = [y for _, y in episode.support]
    support = encode_many(params, [corpus.tokens(i) for i in support_ids], normalize)
    queries = encode_many(params, [corpus.tokens(i) for i, _ in episode.query], normalize)
    return [predict(support, support_labels, q) for q in queries]


def episode_accuracy(
    params: EncoderParams,
    corpus: Corpus,
    episode: Episode,
    predictor: Union[str, Predictor] = "nn",
    normalize: bool = False,
) -> float:
    predictions = predict_episode(params, corpus, episode, predictor, normalize)
    correct = sum(p == y for p, (_, y) in zip(predictions, episode.query))
    return correct / len(episode.query)


def _run_episode(args) -> Tuple[float, List[dict]]:
    params, corpus, split, n, k, m, predictor, seed, index, normalize, collect = args
    episode = sample_episode(corpus, split, n, k, m, np.random.default_rng([seed, index]))
    predictions = predict_episode(params, corpus, episode, predictor, normalize)
    correct = sum(p == y for p, (_, y) in zip(predictions, episode.query))
    rows = []
    if collect:
        rows = [
            {"episode": index, "id": i, "label": y, "predicted": p}
            for p, (i, y) in zip(predictions, episode.query)
        ]
    return correct / len(episode.query), rows


def evaluate(
    params: EncoderParams,
    corpus: Corpus,
    split: str,
    n: int,
    k: int,
    m: int,
    episodes: int,
    predictor: Union[str, Predictor] = "nn",
    seed: int = 0,
    threads: int = 1,
    normalize: bool = False,
    collect_predictions: bool = False,
) -> EvalReport:
    """Mean and population std of accuracy over `episodes` independently sampled episodes"""
    if episodes < 1:
        raise PredictionError(f"episodes must be positive, got {episodes}")
    predictor_name = predictor if isinstance(predictor, str) else getattr(predictor, "__name__", "custom")
    get_predictor(predictor)

    jobs = [
        (params, corpus, split, n, k, m, predictor, seed, index, normalize, collect_predictions)
        for index in range(episodes)
    ]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            results = list(executor.map(_run_episode, jobs))
    else:
        results = [_run_episode(job) for job in jobs]

    accuracies = [acc for acc, _ in results]
    values = np.asarray(accuracies)
    report = EvalReport(
        episodes=episodes,
        per_episode_accuracy=accuracies,
        mean=float(values.mean()),
        std=float(values.std()),
        seed=seed,
        n=n,
        k=k,
        m=m,
        split=split,
        predictor=predictor_name,
        predictions=[row for _, rows in results for row in rows] if collect_predictions else None,
    )
    logger.info(
        f"Evaluated {episodes} episodes on {split} ({n}-way {k}-shot, {predictor_name}): "
        f"mean={report.mean:.4f} std={report.std:.4f}"
    )
    return report


def write_predictions(report: EvalReport, out: Union[str, Path]) -> int:
    """TSV of per-query predictions: episode, id, label, predicted"""
    if report.predictions is None:
        raise PredictionError("report was produced without collect_predictions")
    frame = pd.DataFrame(report.predictions, columns=["episode", "id", "label", "predicted"])
    frame.to_csv(out, sep="\t", header=False, index=False, lineterminator="\n")
    return len(frame)


def dump_embeddings(
    params: EncoderParams,
    corpus: Corpus,
    split: str,
    out: Union[str, Path],
    normalize: bool = False,
) -> int:
    """TSV rows: id, label, d floats written with 17 significant digits (round-trip safe)"""
    ids = corpus.split_documents(split)
    reps = encode_many(params, [corpus.tokens(i) for i in ids], normalize)
    frame = pd.DataFrame(reps, columns=[f"z{j}" for j in range(params.dim)])
    frame.insert(0, "label", [corpus.by_id[i].label for i in ids])
    frame.insert(0, "id", ids)
    frame.to_csv(out, sep="\t", header=False, index=False, float_format="%.17g", lineterminator="\n")
    logger.info(f"Wrote {len(frame)} embeddings ({split}) to {out}")
    return len(frame)
