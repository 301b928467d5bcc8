"""
Hashed bag-of-embeddings encoder f(.) with an exact backward pass, plus the CNET checkpoint format.

Checkpoint layout (little-endian):
    b"CNET" | version u32 | V u64 | d u64 | V*d f64 table (row-major)
    | u8 optimizer flag | [V*d f64 first moment | V*d f64 second moment | u64 step]
"""

import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from config.logger_config import get_run_logger
from constants import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from contrastnet.errors import CheckpointError, EncodingError

logger = get_run_logger()

_HEADER = struct.Struct("<4sIQQ")
_FLAG = struct.Struct("<B")
_STEP = struct.Struct("<Q")
_F64 = np.dtype("<f8")


@dataclass
class EncoderParams:
    table: np.ndarray

    def __post_init__(self):
        self.table = np.asarray(self.table, dtype=np.float64)
        if self.table.ndim != 2 or self.table.shape[1] < 2:
            raise EncodingError(f"table must be V x d with d >= 2, got shape {self.table.shape}")
        if not np.all(np.isfinite(self.table)):
            raise EncodingError("table contains non-finite entries")

    @property
    def bucket_count(self) -> int:
        return self.table.shape[0]

    @property
    def dim(self) -> int:
        return self.table.shape[1]

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.table.copy())


@dataclass
class GradBuffer:
    """Sparse accumulator of dL/dtable keyed by bucket id"""
    dim: int
    rows: Dict[int, np.ndarray] = field(default_factory=dict)
    count: int = 0

    def add(self, bucket: int, vector: np.ndarray):
        row = self.rows.get(bucket)
        if row is None:
            self.rows[bucket] = np.array(vector, dtype=np.float64)
        else:
            row += vector

    def to_dense(self, bucket_count: int) -> np.ndarray:
        dense = np.zeros((bucket_count, self.dim))
        for bucket, row in self.rows.items():
            dense[bucket] = row
        return dense

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(row)) for row in self.rows.values())


def init_params(bucket_count: int, dim: int, scale: float, rng: np.random.Generator) -> EncoderParams:
    """Entries i.i.d. uniform in [-scale, scale]"""
    if bucket_count < 1:
        raise EncodingError(f"bucket_count must be positive, got {bucket_count}")
    if scale < 0:
        raise EncodingError(f"scale must be non-negative, got {scale}")
    return EncoderParams(rng.uniform(-scale, scale, size=(bucket_count, dim)))


def _check_tokens(params: EncoderParams, tokens: Sequence[int]) -> np.ndarray:
    ids = np.asarray(tokens, dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise EncodingError("cannot encode an empty token sequence")
    if ids.min() < 0 or ids.max() >= params.bucket_count:
        raise EncodingError(f"token id out of range [0, {params.bucket_count})")
    return ids


def encode(params: EncoderParams, tokens: Sequence[int], normalize: bool = False) -> np.ndarray:
    """Mean of the tokens' table rows, optionally L2-normalized"""
    ids = _check_tokens(params, tokens)
    z = params.table[ids].mean(axis=0)
    if normalize:
        z = z / np.linalg.norm(z)
    return z


def encode_many(params: EncoderParams, token_lists: Sequence[Sequence[int]], normalize: bool = False) -> np.ndarray:
    """Stack of encode() results, shape (len(token_lists), d)"""
    if not token_lists:
        return np.zeros((0, params.dim))
    return np.stack([encode(params, t, normalize) for t in token_lists])


def encode_backward(
    params: EncoderParams,
    tokens: Sequence[int],
    upstream: np.ndarray,
    buffer: GradBuffer,
    normalize: bool = False,
) -> None:
    """Add upstream/L into the buffer row of every token occurrence"""
    ids = _check_tokens(params, tokens)
    upstream = np.asarray(upstream, dtype=np.float64)
    if normalize:
        z = params.table[ids].mean(axis=0)
        norm = np.linalg.norm(z)
        y = z / norm
        upstream = (upstream - y * np.dot(y, upstream)) / norm
    if not np.any(upstream):
        return
    buckets, counts = np.unique(ids, return_counts=True)
    scaled = upstream / ids.size
    for bucket, r in zip(buckets, counts):
        buffer.add(int(bucket), r * scaled)
    buffer.count += 1


def save_checkpoint(
    path: Union[str, Path],
    params: EncoderParams,
    state: Optional[Tuple[np.ndarray, np.ndarray, int]] = None,
) -> Path:
    """Write atomically (temp file in the same directory, then os.replace)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    V, d = params.table.shape
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, V, d))
            f.write(np.ascontiguousarray(params.table, dtype=_F64).tobytes())
            if state is None:
                f.write(_FLAG.pack(0))
            else:
                m, v, t = state
                f.write(_FLAG.pack(1))
                f.write(np.ascontiguousarray(m, dtype=_F64).tobytes())
                f.write(np.ascontiguousarray(v, dtype=_F64).tobytes())
                f.write(_STEP.pack(t))
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    logger.debug(f"Checkpoint written: {path} (V={V}, d={d}, optimizer={'yes' if state else 'no'})")
    return path


def _read_exact(f, size: int, what: str) -> bytes:
    data = f.read(size)
    if len(data) != size:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return data


def load_checkpoint(path: Union[str, Path]) -> Tuple[EncoderParams, Optional[Tuple[np.ndarray, np.ndarray, int]]]:
    """Read a CNET checkpoint; returns params and (m, v, t) when optimizer state is present"""
    try:
        with open(path, "rb") as f:
            magic, version, V, d = _HEADER.unpack(_read_exact(f, _HEADER.size, "header"))
            if magic != CHECKPOINT_MAGIC:
                raise CheckpointError(f"{path}: bad magic {magic!r}")
            if version != CHECKPOINT_VERSION:
                raise CheckpointError(f"{path}: unsupported format version {version}")
            block = V * d * _F64.itemsize
            table = np.frombuffer(_read_exact(f, block, "table"), dtype=_F64).reshape(V, d).copy()
            (flag,) = _FLAG.unpack(_read_exact(f, _FLAG.size, "optimizer flag"))
            state = None
            if flag:
                m = np.frombuffer(_read_exact(f, block, "first moment"), dtype=_F64).reshape(V, d).copy()
                v = np.frombuffer(_read_exact(f, block, "second moment"), dtype=_F64).reshape(V, d).copy()
                (t,) = _STEP.unpack(_read_exact(f, _STEP.size, "step"))
                state = (m, v, t)
            if f.read(1):
                raise CheckpointError(f"{path}: trailing bytes after checkpoint")
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    try:
        params = EncoderParams(table)
    except EncodingError as e:
        raise CheckpointError(f"{path}: {e}") from e
    return params, state
