"""
Deterministic synthetic corpus with class-separable text.

Words are "w<index>": class c owns signature words [c*vocab_per_class, (c+1)*vocab_per_class),
shared noise words follow all signatures. Each token is a signature word with probability
signature_ratio, else a shared word.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from config.logger_config import get_run_logger
from constants import SPLIT_NAMES
from contrastnet.errors import DataError

logger = get_run_logger()

SPLIT_FRACTIONS = (0.6, 0.2, 0.2)


@dataclass(frozen=True)
class SynthSpec:
    class_count: int = 20
    docs_per_class: int = 100
    vocab_per_class: int = 10
    shared_vocab: int = 50
    tokens_per_doc: int = 20
    signature_ratio: float = 0.8
    seed: int = 0
    min_split_classes: int = 1

    def __post_init__(self):
        for name in ("class_count", "docs_per_class", "vocab_per_class", "tokens_per_doc", "min_split_classes"):
            if getattr(self, name) < 1:
                raise DataError(f"{name} must be a positive integer, got {getattr(self, name)}")
        if self.shared_vocab < 0:
            raise DataError(f"shared_vocab must be non-negative, got {self.shared_vocab}")
        if not 0 < self.signature_ratio <= 1:
            raise DataError(f"signature_ratio must lie in (0, 1], got {self.signature_ratio}")
        if self.signature_ratio < 1 and self.shared_vocab == 0:
            raise DataError("signature_ratio < 1 needs shared_vocab > 0")

    @property
    def vocabulary_size(self) -> int:
        return self.class_count * self.vocab_per_class + self.shared_vocab


@dataclass(frozen=True)
class SynthCorpus:
    records: List[dict]
    splits: dict


def class_name(index: int) -> str:
    return f"c{index:03d}"


def signature_words(spec: SynthSpec, class_index: int) -> List[str]:
    start = class_index * spec.vocab_per_class
    return [f"w{start + j}" for j in range(spec.vocab_per_class)]


def shared_words(spec: SynthSpec) -> List[str]:
    start = spec.class_count * spec.vocab_per_class
    return [f"w{start + j}" for j in range(spec.shared_vocab)]


def split_counts(class_count: int, minimum: int = 1) -> Tuple[int, int, int]:
    """60/20/20 rounded; val and test raised to `minimum` by taking from train"""
    val = max(int(round(class_count * SPLIT_FRACTIONS[1])), minimum)
    test = max(int(round(class_count * SPLIT_FRACTIONS[2])), minimum)
    train = class_count - val - test
    if train < minimum:
        logger.warning(
            f"{class_count} classes cannot give every split {minimum} classes "
            f"(train={train}, val={val}, test={test})"
        )
    if train < 1:
        raise DataError(f"{class_count} classes leave no training classes")
    return train, val, test


def generate(spec: SynthSpec) -> SynthCorpus:
    """Build records and splits; identical spec gives identical output"""
    rng = np.random.default_rng(spec.seed)
    shared = shared_words(spec)
    records = []
    for c in range(spec.class_count):
        signature = signature_words(spec, c)
        for j in range(spec.docs_per_class):
            from_signature = rng.random(spec.tokens_per_doc) < spec.signature_ratio
            sig_picks = rng.integers(len(signature), size=spec.tokens_per_doc)
            shared_picks = rng.integers(max(len(shared), 1), size=spec.tokens_per_doc)
            tokens = [
                signature[s] if use_sig else shared[n]
                for use_sig, s, n in zip(from_signature, sig_picks, shared_picks)
            ]
            records.append({
                "id": f"{class_name(c)}-{j:05d}",
                "text": " ".join(tokens),
                "label": class_name(c),
            })

    counts = split_counts(spec.class_count, spec.min_split_classes)
    names = [class_name(c) for c in range(spec.class_count)]
    order = rng.permutation(spec.class_count)
    shuffled = [names[i] for i in order]
    a, b = counts[0], counts[0] + counts[1]
    splits = {
        "train": sorted(shuffled[:a]),
        "val": sorted(shuffled[a:b]),
        "test": sorted(shuffled[b:]),
    }
    for name in SPLIT_NAMES:
        if len(splits[name]) < spec.min_split_classes:
            logger.warning(f"split {name} has {len(splits[name])} classes, fewer than {spec.min_split_classes}")
    logger.info(
        f"Generated {len(records)} documents over {spec.class_count} classes "
        f"(splits {counts[0]}/{counts[1]}/{counts[2]})"
    )
    return SynthCorpus(records=records, splits=splits)


def write(corpus: SynthCorpus, data_path: Union[str, Path], splits_path: Union[str, Path]):
    with open(data_path, "w", encoding="utf-8", newline="\n") as f:
        for record in corpus.records:
            f.write(json.dumps(record, ensure_ascii=False) + "\n")
    with open(splits_path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(corpus.splits, f, indent=2)
        f.write("\n")
