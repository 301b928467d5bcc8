"""
Episode-driven optimization: assemble all three loss components per episode, backpropagate
through the encoder into one sparse gradient buffer, apply Adam, validate and checkpoint.

Randomness: train_episode draws from a generator seeded by (seed, step), consuming it in the
order episode -> unlabeled texts -> auxiliary tasks -> views, so any single episode can be
replayed. Parameters are initialized from the (seed, INIT_STREAM) stream.
"""

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from config.logger_config import (
    get_run_logger,
    log_episode,
    log_error,
    log_metric,
    log_run_end,
    log_run_start,
    log_validation,
)
from constants import (
    DEFAULT_ADAM_BETA1,
    DEFAULT_ADAM_BETA2,
    DEFAULT_ADAM_EPS,
    DEFAULT_BUCKET_COUNT,
    DEFAULT_DIM,
    DEFAULT_INIT_SCALE,
    DEFAULT_LR,
    DEFAULT_WEIGHT_DECAY,
    TRAIN,
    VAL,
)
from contrastnet.augment import AugmentationStore, EdaParams, get_view
from contrastnet.corpus import Corpus, TokenizerConfig
from contrastnet.encoder import (
    EncoderParams,
    GradBuffer,
    encode_backward,
    encode_many,
    init_params,
    save_checkpoint,
)
from contrastnet.episodes import build_batch, sample_aux_tasks, sample_episode, sample_unlabeled
from contrastnet.errors import ConfigError, NumericalError
from contrastnet.evaluation import evaluate
from contrastnet.losses import (
    LossConfig,
    LossOutput,
    anneal_alpha,
    ntxent_loss,
    supcon_loss,
    task_representation,
    total_loss,
)

logger = get_run_logger()

INIT_STREAM = 0xC0FFEE


@dataclass(frozen=True)
class TrainConfig:
    n: int = 5
    k: int = 1
    m: int = 5
    total_episodes: int = 1000
    lr: float = DEFAULT_LR
    adam_beta1: float = DEFAULT_ADAM_BETA1
    adam_beta2: float = DEFAULT_ADAM_BETA2
    adam_eps: float = DEFAULT_ADAM_EPS
    weight_decay: float = DEFAULT_WEIGHT_DECAY
    val_every: int = 100
    val_episodes: int = 100
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    eda: EdaParams = field(default_factory=EdaParams)
    augment_path: Optional[str] = None
    disable_task: bool = False
    disable_inst: bool = False
    dim: int = DEFAULT_DIM
    init_scale: float = DEFAULT_INIT_SCALE
    bucket_count: int = DEFAULT_BUCKET_COUNT
    lowercase: bool = True
    strip_punct: bool = True
    normalize: bool = False
    dense_adam: bool = False
    threads: int = 1
    predictor: str = "nn"

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("n", "k", "m", "val_every", "val_episodes", "dim", "threads"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer, got {getattr(self, name)}")
        if self.total_episodes < 0:
            raise ConfigError(f"total_episodes must be non-negative, got {self.total_episodes}")
        if not self.lr > 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        for name in ("adam_beta1", "adam_beta2"):
            if not 0 <= getattr(self, name) < 1:
                raise ConfigError(f"{name} must lie in [0, 1), got {getattr(self, name)}")
        if not self.adam_eps > 0:
            raise ConfigError(f"adam_eps must be positive, got {self.adam_eps}")
        if not 0 <= self.weight_decay < float("inf"):
            raise ConfigError(f"weight_decay must be a non-negative number, got {self.weight_decay}")
        if self.dim < 2:
            raise ConfigError(f"dim must be >= 2, got {self.dim}")
        if self.bucket_count < 2:
            raise ConfigError(f"bucket_count must be >= 2, got {self.bucket_count}")
        if self.predictor not in ("nn", "proto"):
            raise ConfigError(f"predictor must be nn or proto, got {self.predictor!r}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must be a u64, got {self.seed}")

    @property
    def tokenizer(self) -> TokenizerConfig:
        return TokenizerConfig(self.bucket_count, self.lowercase, self.strip_punct)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, params: EncoderParams) -> "AdamState":
        return cls(np.zeros_like(params.table), np.zeros_like(params.table), 0)

    def as_tuple(self) -> Tuple[np.ndarray, np.ndarray, int]:
        return self.m, self.v, self.t


@dataclass
class TrainHistory:
    episodes: List[dict] = field(default_factory=list)
    validations: List[dict] = field(default_factory=list)

    def write(self, path: Union[str, Path]):
        """JSONL, events in episode order (a validation follows the episode it ran after)"""
        by_episode = {}
        for record in self.validations:
            by_episode.setdefault(record["episode"], []).append(record)
        with open(path, "w", encoding="utf-8") as f:
            for record in self.episodes:
                f.write(json.dumps({"event": "episode", **record}) + "\n")
                for val in by_episode.pop(record["episode"], []):
                    f.write(json.dumps({"event": "validation", **val}) + "\n")


@dataclass(frozen=True)
class EpisodeInputs:
    """Token sequences of everything one episode contrasts; fixed once sampled"""
    batch_tokens: Tuple[np.ndarray, ...]
    batch_labels: Tuple[str, ...]
    inst_tokens: Tuple[Tuple[np.ndarray, np.ndarray], ...]
    task_tokens: Tuple[Tuple[Tuple[np.ndarray, ...], Tuple[np.ndarray, ...]], ...]
    tau_con: float
    tau_inst: float
    tau_task: float


@dataclass(frozen=True)
class LossParts:
    l_con: LossOutput
    l_inst: LossOutput
    l_task: LossOutput
    total: LossOutput


def effective_coefficients(alpha: float, cfg: TrainConfig) -> Tuple[float, float]:
    """Ablation switches: disable_task forces beta=0; both disabled pins alpha=1"""
    beta = 0.0 if cfg.disable_task else cfg.loss.beta
    if cfg.disable_task and cfg.disable_inst:
        alpha = 1.0
    return alpha, beta


def assemble_inputs(
    corpus: Corpus,
    store: Optional[AugmentationStore],
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> EpisodeInputs:
    """Sample the episode, unlabeled texts and auxiliary tasks, and draw every augmented view"""
    tok = corpus.tokenizer
    episode = sample_episode(corpus, TRAIN, cfg.n, cfg.k, cfg.m, rng)
    batch = build_batch(episode)

    unlabeled = [] if cfg.disable_inst else sample_unlabeled(corpus, cfg.loss.n_inst, rng)
    tasks = [] if cfg.disable_task else sample_aux_tasks(corpus, cfg.loss.n_task, cfg.n, cfg.k, rng)

    inst_tokens = tuple(
        (corpus.tokens(i), get_view(corpus.by_id[i], store, cfg.eda, tok, rng))
        for i in unlabeled
    )
    task_tokens = tuple(
        (
            tuple(corpus.tokens(i) for i in task.support),
            tuple(get_view(corpus.by_id[i], store, cfg.eda, tok, rng) for i in task.support),
        )
        for task in tasks
    )
    return EpisodeInputs(
        batch_tokens=tuple(corpus.tokens(i) for i in batch.items),
        batch_labels=batch.labels,
        inst_tokens=inst_tokens,
        task_tokens=task_tokens,
        tau_con=cfg.loss.tau_con,
        tau_inst=cfg.loss.tau_inst,
        tau_task=cfg.loss.tau_task,
    )


def objective(
    params: EncoderParams,
    inputs: EpisodeInputs,
    alpha: float,
    beta: float,
    normalize: bool = False,
) -> Tuple[LossParts, GradBuffer]:
    """Combined objective value and its gradient w.r.t. the embedding table"""
    dim = params.dim
    buffer = GradBuffer(dim)

    z = encode_many(params, inputs.batch_tokens, normalize)
    l_con = supcon_loss(z, inputs.batch_labels, inputs.tau_con)

    if inputs.inst_tokens:
        orig = encode_many(params, [a for a, _ in inputs.inst_tokens], normalize)
        view = encode_many(params, [b for _, b in inputs.inst_tokens], normalize)
        l_inst = ntxent_loss(list(zip(orig, view)), inputs.tau_inst)
    else:
        l_inst = LossOutput.empty(dim)

    if inputs.task_tokens:
        task_orig = [
            task_representation(encode_many(params, members, normalize))
            for members, _ in inputs.task_tokens
        ]
        task_view = [
            task_representation(encode_many(params, views, normalize))
            for _, views in inputs.task_tokens
        ]
        l_task = ntxent_loss(list(zip(task_orig, task_view)), inputs.tau_task)
    else:
        l_task = LossOutput.empty(dim)

    total = total_loss(l_con, l_inst, l_task, alpha, beta)
    grads = total.grads
    offset = 0

    for tokens, g in zip(inputs.batch_tokens, grads[offset:offset + len(inputs.batch_tokens)]):
        encode_backward(params, tokens, g, buffer, normalize)
    offset += len(inputs.batch_tokens)

    n_inst = len(inputs.inst_tokens)
    inst_grads = grads[offset:offset + 2 * n_inst]
    for w, (orig_tokens, view_tokens) in enumerate(inputs.inst_tokens):
        encode_backward(params, orig_tokens, inst_grads[w], buffer, normalize)
        encode_backward(params, view_tokens, inst_grads[n_inst + w], buffer, normalize)
    offset += 2 * n_inst

    n_task = len(inputs.task_tokens)
    task_grads = grads[offset:offset + 2 * n_task]
    for u, (members, views) in enumerate(inputs.task_tokens):
        for tokens in members:
            encode_backward(params, tokens, task_grads[u] / len(members), buffer, normalize)
        for tokens in views:
            encode_backward(params, tokens, task_grads[n_task + u] / len(views), buffer, normalize)

    return LossParts(l_con, l_inst, l_task, total), buffer


def adam_step(params: EncoderParams, grads: GradBuffer, state: AdamState, cfg: TrainConfig) -> None:
    """
    Bias-corrected Adam with decoupled weight decay (lr * weight_decay * row, taken from the
    pre-step values). Sparse by default: only rows present in grads have their moments and
    values updated, so rows of words never seen in training keep their initial values.
    With cfg.dense_adam every row's moments and values decay each step.
    """
    if not grads.is_finite():
        bad = sorted(b for b, row in grads.rows.items() if not np.all(np.isfinite(row)))
        raise NumericalError("non-finite gradient", {"step": state.t + 1, "rows": bad[:10]})

    state.t += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    shrink = cfg.lr * cfg.weight_decay

    if cfg.dense_adam:
        g = grads.to_dense(params.bucket_count)
        state.m *= b1
        state.m += (1.0 - b1) * g
        state.v *= b2
        state.v += (1.0 - b2) * (g * g)
        params.table -= cfg.lr * (state.m / bc1) / (np.sqrt(state.v / bc2) + cfg.adam_eps) + shrink * params.table
        return

    if not grads.rows:
        return
    rows = np.fromiter(sorted(grads.rows), dtype=np.int64)
    g = np.stack([grads.rows[int(r)] for r in rows])
    m = b1 * state.m[rows] + (1.0 - b1) * g
    v = b2 * state.v[rows] + (1.0 - b2) * (g * g)
    state.m[rows] = m
    state.v[rows] = v
    params.table[rows] -= cfg.lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps) + shrink * params.table[rows]


def episode_rng(seed: int, step: int) -> np.random.Generator:
    return np.random.default_rng([seed, step])


def train_episode(
    params: EncoderParams,
    state: AdamState,
    corpus: Corpus,
    store: Optional[AugmentationStore],
    cfg: TrainConfig,
    step: int,
    rng: Optional[np.random.Generator] = None,
) -> dict:
    """One sampled episode, one optimizer step; returns the loss record"""
    if not 0 <= step < cfg.total_episodes:
        raise ConfigError(f"step {step} outside [0, {cfg.total_episodes})")
    rng = rng if rng is not None else episode_rng(cfg.seed, step)

    inputs = assemble_inputs(corpus, store, cfg, rng)
    alpha, beta = effective_coefficients(anneal_alpha(step, cfg.total_episodes, cfg.loss), cfg)
    parts, grads = objective(params, inputs, alpha, beta, cfg.normalize)

    if not np.isfinite(parts.total.value):
        raise NumericalError("non-finite loss", {
            "episode": step,
            "l_con": parts.l_con.value,
            "l_inst": parts.l_inst.value,
            "l_task": parts.l_task.value,
        })
    adam_step(params, grads, state, cfg)

    return {
        "episode": step,
        "l_con": parts.l_con.value,
        "l_inst": parts.l_inst.value,
        "l_task": parts.l_task.value,
        "total": parts.total.value,
        "alpha": alpha,
        "beta": beta,
    }


def train(
    corpus: Corpus,
    cfg: TrainConfig,
    checkpoint_path: Union[str, Path],
    history_path: Optional[Union[str, Path]] = None,
    store: Optional[AugmentationStore] = None,
) -> Tuple[EncoderParams, TrainHistory, Path]:
    """
    Run cfg.total_episodes episodes, validating every cfg.val_every episodes and keeping the
    checkpoint with the highest validation accuracy (ties keep the earliest). Without any
    validation event the final parameters become the checkpoint.
    """
    run_name = f"train n={cfg.n} k={cfg.k} m={cfg.m} episodes={cfg.total_episodes}"
    log_run_start(run_name, {"seed": cfg.seed, "lr": cfg.lr, "disable_task": cfg.disable_task,
                             "disable_inst": cfg.disable_inst})
    started = time.perf_counter()

    params = init_params(cfg.bucket_count, cfg.dim, cfg.init_scale, np.random.default_rng([cfg.seed, INIT_STREAM]))
    state = AdamState.zeros_like(params)
    history = TrainHistory()
    checkpoint_path = Path(checkpoint_path)
    best_accuracy = None

    try:
        for step in range(cfg.total_episodes):
            record = train_episode(params, state, corpus, store, cfg, step)
            history.episodes.append(record)
            log_episode(record, every=cfg.val_every)

            if (step + 1) % cfg.val_every == 0:
                report = evaluate(
                    params, corpus, VAL, cfg.n, cfg.k, cfg.m, cfg.val_episodes,
                    cfg.predictor, cfg.seed, threads=cfg.threads, normalize=cfg.normalize,
                )
                improved = best_accuracy is None or report.mean > best_accuracy
                history.validations.append({"episode": step, "val_accuracy": report.mean})
                log_validation(step, report.mean, improved)
                if improved:
                    best_accuracy = report.mean
                    save_checkpoint(checkpoint_path, params, state.as_tuple())
                    logger.info(f"Checkpoint saved: {checkpoint_path}")
    except Exception as e:
        log_error(e, context=f"training episode {len(history.episodes)}")
        log_run_end(run_name, "FAILED", time.perf_counter() - started)
        raise

    if best_accuracy is None:
        save_checkpoint(checkpoint_path, params, state.as_tuple())
        logger.info(f"No validation ran; final parameters saved to {checkpoint_path}")
    else:
        log_metric("best_val_accuracy", f"{best_accuracy:.4f}")

    if history_path is not None:
        history.write(history_path)
        logger.info(f"History written: {history_path}")

    log_run_end(run_name, "PASSED", time.perf_counter() - started)
    return params, history, checkpoint_path

