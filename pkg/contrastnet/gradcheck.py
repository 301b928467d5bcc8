"""
Central finite-difference checks for the losses, the encoder adjoint and the combined
objective. Shared by the `gradcheck` command and the test suite.
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from config.logger_config import get_run_logger
from constants import (
    ADJOINT_TOLERANCE,
    FD_STEP,
    GRADCHECK_TAUS,
    LOSS_GRAD_TOLERANCE,
    REL_ERROR_FLOOR,
)
from contrastnet.corpus import Corpus, Document, SplitSpec, TokenizerConfig, build_corpus
from contrastnet.encoder import EncoderParams, GradBuffer, encode, encode_backward, init_params
from contrastnet.losses import LossConfig, ntxent_loss, supcon_loss
from contrastnet.synth import SynthSpec, generate
from contrastnet.trainer import TrainConfig, assemble_inputs, objective

logger = get_run_logger()

# (classes, members per class) with N <= 8
SUPCON_SHAPES = ((2, 2), (2, 3), (2, 4), (3, 2), (4, 2))


@dataclass(frozen=True)
class CheckResult:
    name: str
    trials: int
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "trials": self.trials,
            "max_rel_error": self.max_rel_error,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = REL_ERROR_FLOOR) -> float:
    """||a - b|| / max(||a||, ||b||, floor)"""
    diff = np.linalg.norm(np.ravel(analytic) - np.ravel(numeric))
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
    return float(diff / scale)


def numeric_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central differences of scalar f at x, one coordinate at a time"""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        original = x[idx]
        x[idx] = original + h
        plus = f(x)
        x[idx] = original - h
        minus = f(x)
        x[idx] = original
        grad[idx] = (plus - minus) / (2 * h)
    return grad


def _random_reps(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    return rng.normal(scale=0.5, size=(count, dim))


def check_supcon(trials: int, seed: int) -> CheckResult:
    rng = np.random.default_rng([seed, 1])
    worst = 0.0
    for _ in range(trials):
        classes, per_class = SUPCON_SHAPES[rng.integers(len(SUPCON_SHAPES))]
        dim = int(rng.integers(1, 9))
        tau = float(rng.choice(GRADCHECK_TAUS))
        labels = list(rng.permutation(np.repeat(np.arange(classes), per_class)))
        z = _random_reps(rng, classes * per_class, dim)
        analytic = supcon_loss(z, labels, tau).grads
        numeric = numeric_gradient(lambda x: supcon_loss(x, labels, tau).value, z)
        worst = max(worst, rel_error(analytic, numeric))
    return CheckResult("supcon_loss", trials, worst, LOSS_GRAD_TOLERANCE)


def check_ntxent(trials: int, seed: int) -> CheckResult:
    rng = np.random.default_rng([seed, 2])
    worst = 0.0
    for _ in range(trials):
        pairs = int(rng.integers(1, 5))
        dim = int(rng.integers(1, 9))
        tau = float(rng.choice(GRADCHECK_TAUS))
        z = _random_reps(rng, 2 * pairs, dim)

        def loss(x):
            return ntxent_loss(list(zip(x[:pairs], x[pairs:])), tau)

        analytic = loss(z).grads
        numeric = numeric_gradient(lambda x: loss(x).value, z)
        worst = max(worst, rel_error(analytic, numeric))
    return CheckResult("ntxent_loss", trials, worst, LOSS_GRAD_TOLERANCE)


def check_losses(trials: int = 100, seed: int = 0) -> List[CheckResult]:
    return [check_supcon(trials, seed), check_ntxent(trials, seed)]


def check_encoder_adjoint(trials: int = 100, seed: int = 0, h: float = FD_STEP) -> CheckResult:
    """<dL/dtable, D> against (L(t + hD) - L(t - hD)) / 2h for L = <g, encode(t, tokens)>"""
    rng = np.random.default_rng([seed, 3])
    worst = 0.0
    for _ in range(trials):
        V = int(rng.integers(2, 17))
        dim = int(rng.integers(2, 9))
        params = init_params(V, dim, 1.0, rng)
        tokens = rng.integers(V, size=int(rng.integers(1, 9)))
        upstream = rng.normal(size=dim)
        direction = rng.normal(size=(V, dim))

        buffer = GradBuffer(dim)
        encode_backward(params, tokens, upstream, buffer)
        analytic = float(np.sum(buffer.to_dense(V) * direction))

        plus = float(upstream @ encode(EncoderParams(params.table + h * direction), tokens))
        minus = float(upstream @ encode(EncoderParams(params.table - h * direction), tokens))
        numeric = (plus - minus) / (2 * h)
        worst = max(worst, abs(analytic - numeric) / max(abs(analytic), abs(numeric), REL_ERROR_FLOOR))
    return CheckResult("encode_backward", trials, worst, ADJOINT_TOLERANCE)


def check_total_objective(
    corpus: Corpus,
    cfg: TrainConfig,
    seed: int = 0,
    rows: int = 20,
    scale: float = 0.5,
) -> CheckResult:
    """
    Finite differences of the full objective (all enabled components) w.r.t. `rows` embedding
    rows sampled from those the episode touches, against the accumulated GradBuffer.
    """
    rng = np.random.default_rng([seed, 4])
    params = init_params(cfg.bucket_count, cfg.dim, scale, rng)
    inputs = assemble_inputs(corpus, None, cfg, rng)
    alpha, beta = 0.7, cfg.loss.beta
    _, buffer = objective(params, inputs, alpha, beta, cfg.normalize)

    touched = np.fromiter(sorted(buffer.rows), dtype=np.int64)
    chosen = rng.choice(touched, size=min(rows, touched.size), replace=False)
    worst = 0.0
    for row in chosen:
        def value(x, row=row):
            saved = params.table[row].copy()
            params.table[row] = x
            try:
                return objective(params, inputs, alpha, beta, cfg.normalize)[0].total.value
            finally:
                params.table[row] = saved

        numeric = numeric_gradient(value, params.table[row])
        worst = max(worst, rel_error(buffer.rows[int(row)], numeric))
    return CheckResult("total_objective", int(chosen.size), worst, LOSS_GRAD_TOLERANCE)


def summarize(results: List[CheckResult]) -> Dict[str, object]:
    return {
        "checks": [r.to_dict() for r in results],
        "passed": all(r.passed for r in results),
    }


def check_corpus(seed: int = 0) -> Corpus:
    """Small synthetic corpus for the end-to-end check"""
    synth = generate(SynthSpec(
        class_count=10, docs_per_class=8, vocab_per_class=4, shared_vocab=12,
        tokens_per_doc=6, seed=seed, min_split_classes=2,
    ))
    documents = [Document(r["id"], r["text"], r["label"]) for r in synth.records]
    splits = SplitSpec.from_lists(synth.splits["train"], synth.splits["val"], synth.splits["test"])
    return build_corpus(documents, splits, TokenizerConfig(bucket_count=64))


def check_config(seed: int = 0) -> TrainConfig:
    """Every loss component enabled, dimensions kept small"""
    return TrainConfig(
        n=3, k=2, m=2, seed=seed, dim=6, bucket_count=64, init_scale=0.5,
        loss=LossConfig(n_task=3, n_inst=4),
    )


def run_suite(trials: int = 100, seed: int = 0, corpus: Optional[Corpus] = None,
              cfg: Optional[TrainConfig] = None) -> List[CheckResult]:
    """Loss, adjoint and total-objective checks"""
    cfg = cfg if cfg is not None else check_config(seed)
    corpus = corpus if corpus is not None else check_corpus(seed)
    results = check_losses(trials, seed)
    results.append(check_encoder_adjoint(trials, seed))
    results.append(check_total_objective(corpus, cfg, seed))
    for result in results:
        mark = "✓" if result.passed else "✗"
        logger.info(
            f"{mark} {result.name}: max relative error {result.max_rel_error:.3e} "
            f"over {result.trials} trials (tolerance {result.tolerance:g})"
        )
    return results
