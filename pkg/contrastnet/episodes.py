"""
Episode sampling and contrastive batch assembly.

All samplers draw from a caller-owned numpy Generator and consume it in a fixed order, so
identically seeded generators replay identical episodes. Classes are drawn from the sorted
class list of a split and documents from the corpus-order id list of a class.
"""

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from constants import SPLIT_NAMES, TRAIN
from contrastnet.corpus import Corpus
from contrastnet.errors import SamplingError


@dataclass(frozen=True)
class Episode:
    way: int
    shot: int
    query_size: int
    split: str
    classes: Tuple[str, ...]
    support: Tuple[Tuple[str, str], ...]
    query: Tuple[Tuple[str, str], ...]

    def to_dict(self) -> dict:
        return {
            "split": self.split,
            "n": self.way,
            "k": self.shot,
            "m": self.query_size,
            "classes": list(self.classes),
            "support": [{"id": i, "label": y} for i, y in self.support],
            "query": [{"id": i, "label": y} for i, y in self.query],
        }


@dataclass(frozen=True)
class ContrastBatch:
    items: Tuple[str, ...]
    labels: Tuple[str, ...]
    support_prefix: int

    @property
    def positives_per_anchor(self) -> int:
        """c = k + m - 1"""
        return self.labels.count(self.labels[0]) - 1


@dataclass(frozen=True)
class AuxTask:
    support: Tuple[str, ...]
    classes: Tuple[str, ...]


def _check_shape(**sizes: int):
    for name, value in sizes.items():
        if value < 1:
            raise SamplingError(f"{name} must be a positive integer, got {value}")


def _sample_classes(corpus: Corpus, split: str, n: int, per_class: int, rng: np.random.Generator) -> List[str]:
    if split not in SPLIT_NAMES:
        raise SamplingError(f"unknown split {split!r}")
    classes = corpus.split_classes(split)
    if len(classes) < n:
        raise SamplingError(f"split {split} has {len(classes)} classes, {n} requested")
    chosen = [classes[i] for i in rng.choice(len(classes), size=n, replace=False)]
    for c in chosen:
        if len(corpus.index[c]) < per_class:
            raise SamplingError(
                f"class {c} has {len(corpus.index[c])} documents, {per_class} required"
            )
    return chosen


def _sample_documents(corpus: Corpus, label: str, count: int, rng: np.random.Generator) -> List[str]:
    ids = corpus.index[label]
    return [ids[i] for i in rng.choice(len(ids), size=count, replace=False)]


def sample_episode(corpus: Corpus, split: str, n: int, k: int, m: int, rng: np.random.Generator) -> Episode:
    """n classes without replacement, then k+m documents per class: first k support, rest query"""
    _check_shape(n=n, k=k, m=m)
    classes = _sample_classes(corpus, split, n, k + m, rng)
    support, query = [], []
    for c in classes:
        docs = _sample_documents(corpus, c, k + m, rng)
        support.extend((d, c) for d in docs[:k])
        query.extend((d, c) for d in docs[k:])
    return Episode(
        way=n,
        shot=k,
        query_size=m,
        split=split,
        classes=tuple(classes),
        support=tuple(support),
        query=tuple(query),
    )


def build_batch(episode: Episode) -> ContrastBatch:
    """Support instances first, then query instances"""
    pairs = episode.support + episode.query
    return ContrastBatch(
        items=tuple(i for i, _ in pairs),
        labels=tuple(y for _, y in pairs),
        support_prefix=len(episode.support),
    )


def sample_aux_tasks(corpus: Corpus, n_task: int, n: int, k: int, rng: np.random.Generator) -> List[AuxTask]:
    """Support-only tasks from the training classes, same n and k as the main episode"""
    if n_task < 0:
        raise SamplingError(f"n_task must be non-negative, got {n_task}")
    if n_task == 0:
        return []
    _check_shape(n=n, k=k)
    tasks = []
    for _ in range(n_task):
        classes = _sample_classes(corpus, TRAIN, n, k, rng)
        support = []
        for c in classes:
            support.extend(_sample_documents(corpus, c, k, rng))
        tasks.append(AuxTask(support=tuple(support), classes=tuple(classes)))
    return tasks


def sample_unlabeled(corpus: Corpus, n_inst: int, rng: np.random.Generator) -> List[str]:
    """Distinct training-split document ids; labels are not returned"""
    if n_inst < 0:
        raise SamplingError(f"n_inst must be non-negative, got {n_inst}")
    if n_inst == 0:
        return []
    pool = corpus.split_documents(TRAIN)
    if len(pool) < n_inst:
        raise SamplingError(f"training split has {len(pool)} documents, {n_inst} requested")
    return [pool[i] for i in rng.choice(len(pool), size=n_inst, replace=False)]
