"""
Augmented views for the unsupervised contrastive losses.

Built-in EDA-style perturbations (random deletion, random swap, random insertion; no synonym
replacement) operate on token sequences. Externally generated paraphrases are ingested from a
JSONL file and take priority over EDA when a document has any.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence, Tuple, TypeVar, Union

import numpy as np

from config.logger_config import get_run_logger
from constants import (
    AUGMENTATION_RECORD_SCHEMA,
    DEFAULT_DELETE_PROB,
    DEFAULT_INSERT_COUNT,
    DEFAULT_SWAP_COUNT,
)
from contrastnet.corpus import Corpus, Document, TokenizerConfig, tokenize
from contrastnet.errors import AugmentationError
from utils.schema_manager import RecordError, get_schema_manager

logger = get_run_logger()

T = TypeVar("T")


@dataclass(frozen=True)
class EdaParams:
    swap_count: int = DEFAULT_SWAP_COUNT
    delete_prob: float = DEFAULT_DELETE_PROB
    insert_count: int = DEFAULT_INSERT_COUNT

    def __post_init__(self):
        if not 0.0 <= self.delete_prob <= 1.0:
            raise AugmentationError(f"delete_prob must lie in [0, 1], got {self.delete_prob}")
        if self.swap_count < 0 or self.insert_count < 0:
            raise AugmentationError("swap_count and insert_count must be non-negative")


@dataclass(frozen=True)
class AugmentationStore:
    views: Mapping[str, Tuple[str, ...]]

    def __len__(self) -> int:
        return len(self.views)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self.views


def eda_augment(tokens: Sequence[T], params: EdaParams, rng: np.random.Generator) -> list:
    """
    Deletion, then swaps, then insertions. Works on any token sequence (ids or words).

    Each token is deleted independently with delete_prob; if all would go, one uniformly
    chosen token is kept. Swaps exchange two uniformly chosen positions. Insertions copy a
    uniformly chosen surviving token to a uniformly chosen position.
    """
    tokens = list(tokens)
    if not tokens:
        raise AugmentationError("cannot augment an empty token sequence")

    keep = rng.random(len(tokens)) >= params.delete_prob
    if not keep.any():
        keep[rng.integers(len(tokens))] = True
    out = [t for t, kept in zip(tokens, keep) if kept]

    for _ in range(params.swap_count):
        i, j = rng.integers(len(out), size=2)
        out[i], out[j] = out[j], out[i]

    for _ in range(params.insert_count):
        token = out[rng.integers(len(out))]
        out.insert(int(rng.integers(len(out) + 1)), token)

    return out


def load_augmentations(path: Union[str, Path]) -> AugmentationStore:
    """Read {"id", "augmentations"} JSONL; a repeated id extends its list"""
    manager = get_schema_manager()
    views: Dict[str, list] = {}
    try:
        for line_no, record in manager.iter_jsonl(path, AUGMENTATION_RECORD_SCHEMA):
            if not record["augmentations"]:
                raise AugmentationError(f"empty augmentation list for id {record['id']!r}", line=line_no)
            views.setdefault(record["id"], []).extend(record["augmentations"])
    except RecordError as e:
        raise AugmentationError(f"{path}: {e.message}", line=e.line) from e
    except OSError as e:
        raise AugmentationError(f"cannot read {path}: {e}") from e
    logger.info(f"Loaded {len(views)} augmented documents from {path}")
    return AugmentationStore(views={k: tuple(v) for k, v in views.items()})


def bind_store(store: AugmentationStore, corpus: Corpus) -> AugmentationStore:
    """Check every id exists in the corpus and every paraphrase tokenizes non-empty"""
    unknown = sorted(i for i in store.views if i not in corpus.by_id)
    if unknown:
        preview = ", ".join(unknown[:5])
        raise AugmentationError(f"{len(unknown)} augmentation ids not in corpus: {preview}")
    for doc_id, texts in store.views.items():
        for text in texts:
            if tokenize(text, corpus.tokenizer).size == 0:
                raise AugmentationError(f"augmentation of {doc_id!r} tokenizes to nothing: {text!r}")
    return store


def get_view(
    doc: Document,
    store: Optional[AugmentationStore],
    params: EdaParams,
    tok: TokenizerConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Stored paraphrase (uniform choice) when available, else EDA of the document's tokens"""
    if store is not None and doc.id in store:
        texts = store.views[doc.id]
        return tokenize(texts[int(rng.integers(len(texts)))], tok)
    return np.asarray(eda_augment(tokenize(doc.text, tok), params, rng), dtype=np.int64)
