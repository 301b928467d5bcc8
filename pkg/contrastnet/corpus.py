"""
Labeled text corpora with disjoint train/val/test class splits.

Tokenization uses the hashing trick: every whitespace token (optionally lowercased and
edge-stripped of Unicode punctuation) maps to FNV-1a 64 of its UTF-8 bytes modulo the bucket
count. The corpus is immutable after load_corpus and safe for concurrent reads.
"""

import unicodedata
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from config.logger_config import get_run_logger
from constants import (
    CORPUS_RECORD_SCHEMA,
    DEFAULT_BUCKET_COUNT,
    FNV64_MASK,
    FNV64_OFFSET_BASIS,
    FNV64_PRIME,
    SPLIT_NAMES,
    SPLITS_SCHEMA,
)
from contrastnet.errors import CorpusError
from utils.schema_manager import RecordError, get_schema_manager

logger = get_run_logger()

PathLike = Union[str, Path]


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    label: str


@dataclass(frozen=True)
class TokenizerConfig:
    bucket_count: int = DEFAULT_BUCKET_COUNT
    lowercase: bool = True
    strip_punct: bool = True

    def __post_init__(self):
        if self.bucket_count < 2:
            raise CorpusError(f"bucket_count must be >= 2, got {self.bucket_count}")


@dataclass(frozen=True)
class SplitSpec:
    train: frozenset
    val: frozenset
    test: frozenset

    def __post_init__(self):
        for name in SPLIT_NAMES:
            if not getattr(self, name):
                raise CorpusError(f"split {name} is empty")
        for i, a in enumerate(SPLIT_NAMES):
            for b in SPLIT_NAMES[i + 1:]:
                shared = sorted(getattr(self, a) & getattr(self, b))
                if shared:
                    raise CorpusError(f"class {shared[0]} in two splits ({a}, {b})")

    @classmethod
    def from_lists(cls, train: Sequence[str], val: Sequence[str], test: Sequence[str]) -> "SplitSpec":
        """Build from lists, rejecting a class listed twice anywhere"""
        seen: Dict[str, str] = {}
        for name, classes in zip(SPLIT_NAMES, (train, val, test)):
            for c in classes:
                if seen.get(c) == name:
                    raise CorpusError(f"class {c} listed twice in split {name}")
                if c in seen:
                    raise CorpusError(f"class {c} in two splits ({seen[c]}, {name})")
                seen[c] = name
        return cls(frozenset(train), frozenset(val), frozenset(test))

    def classes(self, split: str) -> frozenset:
        if split not in SPLIT_NAMES:
            raise CorpusError(f"unknown split {split!r}; expected one of {', '.join(SPLIT_NAMES)}")
        return getattr(self, split)

    def split_of(self, label: str) -> Optional[str]:
        for name in SPLIT_NAMES:
            if label in getattr(self, name):
                return name
        return None

    def to_dict(self) -> Dict[str, List[str]]:
        return {name: sorted(getattr(self, name)) for name in SPLIT_NAMES}


@dataclass(frozen=True)
class Corpus:
    documents: Tuple[Document, ...]
    splits: SplitSpec
    tokenizer: TokenizerConfig
    index: Mapping[str, Tuple[str, ...]]
    by_id: Mapping[str, Document] = field(repr=False)
    token_ids: Mapping[str, np.ndarray] = field(repr=False)

    def split_classes(self, split: str) -> List[str]:
        """Classes of a split in sorted order (stable sampling domain)"""
        return sorted(self.splits.classes(split))

    def split_documents(self, split: str) -> List[str]:
        """Document ids of a split in corpus order"""
        classes = self.splits.classes(split)
        return [doc.id for doc in self.documents if doc.label in classes]

    def tokens(self, doc_id: str) -> np.ndarray:
        return self.token_ids[doc_id]


@dataclass(frozen=True)
class CorpusStats:
    classes_per_split: Dict[str, int]
    sentences_per_split: Dict[str, int]
    sentences: int
    avg_sent_class: Fraction
    avg_tok_sent: Fraction

    def to_dict(self) -> dict:
        """Display form: averages rounded half-up to integers, exact values kept as strings"""
        return {
            "classes_per_split": dict(self.classes_per_split),
            "sentences_per_split": dict(self.sentences_per_split),
            "sentences": self.sentences,
            "avg_sent_class": _round_half_up(self.avg_sent_class),
            "avg_tok_sent": _round_half_up(self.avg_tok_sent),
            "avg_sent_class_exact": str(self.avg_sent_class),
            "avg_tok_sent_exact": str(self.avg_tok_sent),
        }


def _round_half_up(value: Fraction) -> int:
    return int((value + Fraction(1, 2)).__floor__())


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash"""
    h = FNV64_OFFSET_BASIS
    for byte in data:
        h ^= byte
        h = (h * FNV64_PRIME) & FNV64_MASK
    return h


def _strip_punct(token: str) -> str:
    start, end = 0, len(token)
    while start < end and unicodedata.category(token[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(token[end - 1]).startswith("P"):
        end -= 1
    return token[start:end]


def words(text: str, tok: TokenizerConfig) -> List[str]:
    """Pre-hash token strings: whitespace split, optional lowercase and edge punctuation strip"""
    if tok.lowercase:
        text = text.lower()
    out = []
    for token in text.split():
        if tok.strip_punct:
            token = _strip_punct(token)
        if token:
            out.append(token)
    return out


def hash_words(tokens: Sequence[str], tok: TokenizerConfig) -> np.ndarray:
    return np.array(
        [fnv1a64(t.encode("utf-8")) % tok.bucket_count for t in tokens],
        dtype=np.int64,
    )


def tokenize(text: str, tok: TokenizerConfig) -> np.ndarray:
    """Token ids in [0, bucket_count); may be empty"""
    return hash_words(words(text, tok), tok)


def load_splits(splits_path: PathLike) -> SplitSpec:
    manager = get_schema_manager()
    try:
        raw = manager.load_json(splits_path, SPLITS_SCHEMA)
    except RecordError as e:
        raise CorpusError(f"{splits_path}: {e.message}", line=e.line) from e
    except OSError as e:
        raise CorpusError(f"cannot read {splits_path}: {e}") from e
    return SplitSpec.from_lists(raw["train"], raw["val"], raw["test"])


def build_corpus(documents: Sequence[Document], splits: SplitSpec, tok: TokenizerConfig) -> Corpus:
    """Validate documents against splits and tokenize them"""
    by_id: Dict[str, Document] = {}
    for doc in documents:
        if doc.id in by_id:
            raise CorpusError(f"duplicate id {doc.id!r}")
        by_id[doc.id] = doc

    token_ids = {}
    empty = []
    for doc in documents:
        ids = tokenize(doc.text, tok)
        if ids.size == 0:
            empty.append(doc.id)
        ids.setflags(write=False)
        token_ids[doc.id] = ids
    if empty:
        raise CorpusError(f"documents with empty tokenization: {', '.join(empty)}")

    index: Dict[str, List[str]] = {}
    for doc in documents:
        index.setdefault(doc.label, []).append(doc.id)

    for label in sorted(index):
        if splits.split_of(label) is None:
            raise CorpusError(f"class {label} is missing from splits")
    for name in SPLIT_NAMES:
        for label in sorted(splits.classes(name)):
            if label not in index:
                raise CorpusError(f"class {label} in split {name} has no documents")

    return Corpus(
        documents=tuple(documents),
        splits=splits,
        tokenizer=tok,
        index={label: tuple(ids) for label, ids in index.items()},
        by_id=by_id,
        token_ids=token_ids,
    )


def read_documents(data_path: PathLike) -> List[Document]:
    """Parse and schema-check a JSONL data file; unknown keys are ignored"""
    manager = get_schema_manager()
    documents = []
    try:
        for _, record in manager.iter_jsonl(data_path, CORPUS_RECORD_SCHEMA):
            documents.append(Document(id=record["id"], text=record["text"], label=record["label"]))
    except RecordError as e:
        raise CorpusError(f"{data_path}: {e.message}", line=e.line) from e
    except OSError as e:
        raise CorpusError(f"cannot read {data_path}: {e}") from e
    return documents


def load_corpus(data_path: PathLike, splits_path: PathLike, tok: TokenizerConfig) -> Corpus:
    """Load a JSONL corpus and its splits file; every SplitSpec invariant holds on return"""
    corpus = build_corpus(read_documents(data_path), load_splits(splits_path), tok)
    logger.info(
        f"Loaded corpus {data_path}: {len(corpus.documents)} documents, "
        f"{len(corpus.index)} classes "
        f"({'/'.join(str(len(corpus.splits.classes(s))) for s in SPLIT_NAMES)})"
    )
    return corpus


def corpus_stats(corpus: Corpus) -> CorpusStats:
    """Exact counts; averages kept as Fractions"""
    sentences_per_split = {name: len(corpus.split_documents(name)) for name in SPLIT_NAMES}
    total_tokens = sum(int(corpus.tokens(doc.id).size) for doc in corpus.documents)
    sentences = len(corpus.documents)
    return CorpusStats(
        classes_per_split={name: len(corpus.splits.classes(name)) for name in SPLIT_NAMES},
        sentences_per_split=sentences_per_split,
        sentences=sentences,
        avg_sent_class=Fraction(sentences, len(corpus.index)),
        avg_tok_sent=Fraction(total_tokens, sentences),
    )


def resplit(class_names: Sequence[str], counts: Tuple[int, int, int], seed: int) -> SplitSpec:
    """Random class re-splitting with the given train/val/test class counts"""
    names = sorted(set(class_names))
    if sum(counts) != len(names):
        raise CorpusError(f"split counts {counts} do not sum to {len(names)} classes")
    order = np.random.default_rng(seed).permutation(len(names))
    shuffled = [names[i] for i in order]
    a, b = counts[0], counts[0] + counts[1]
    return SplitSpec.from_lists(shuffled[:a], shuffled[a:b], shuffled[b:])
