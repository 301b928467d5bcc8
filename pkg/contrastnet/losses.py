"""
Contrastive losses with analytic gradients, task representations, alpha annealing and the
combined objective.

Both losses share one kernel. For a batch Z (N x d) with similarity S = Z Z^T / tau, anchor t,
candidate set {r != t} and positive set P(t):

    loss_t = -w * [logsumexp_{r in P(t)} S_tr - logsumexp_{r != t} S_tr]

dloss/dS_tr = -w * (softmax_P(t)(S_t)_r - softmax_{r != t}(S_t)_r), and dL/dZ = (G + G^T) Z / tau.
The supervised loss uses same-label positives and w = 1/c with c = k + m - 1; the NT-Xent form
uses the matched view as the single positive and w = 1.
"""

from dataclasses import dataclass
from typing import Hashable, Optional, Sequence, Tuple

import numpy as np

from constants import (
    DEFAULT_ALPHA0,
    DEFAULT_ALPHA_FLOOR,
    DEFAULT_BETA,
    DEFAULT_N_INST,
    DEFAULT_N_TASK,
    DEFAULT_TAU_CON,
    DEFAULT_TAU_INST,
    DEFAULT_TAU_TASK,
)
from contrastnet.errors import ConfigError, DataError


class LossInputError(DataError):
    """Loss preconditions violated"""


@dataclass(frozen=True)
class LossConfig:
    tau_con: float = DEFAULT_TAU_CON
    tau_task: float = DEFAULT_TAU_TASK
    tau_inst: float = DEFAULT_TAU_INST
    alpha0: float = DEFAULT_ALPHA0
    alpha_floor: float = DEFAULT_ALPHA_FLOOR
    beta: float = DEFAULT_BETA
    n_task: int = DEFAULT_N_TASK
    n_inst: int = DEFAULT_N_INST

    def __post_init__(self):
        for name in ("tau_con", "tau_task", "tau_inst"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0 < self.alpha0 <= 1:
            raise ConfigError(f"alpha0 must lie in (0, 1], got {self.alpha0}")
        if not 0 <= self.alpha_floor <= self.alpha0:
            raise ConfigError(f"alpha_floor must lie in [0, alpha0], got {self.alpha_floor}")
        if self.beta < 0:
            raise ConfigError(f"beta must be non-negative, got {self.beta}")
        if self.n_task < 0 or self.n_inst < 0:
            raise ConfigError("n_task and n_inst must be non-negative")


@dataclass(frozen=True)
class LossOutput:
    value: float
    grads: np.ndarray

    @classmethod
    def empty(cls, dim: int) -> "LossOutput":
        """A disabled component: zero value, no representations"""
        return cls(0.0, np.zeros((0, dim)))


def _contrastive_kernel(z: np.ndarray, positive: np.ndarray, tau: float, weight: float) -> LossOutput:
    n = z.shape[0]
    s = z @ z.T / tau
    others = ~np.eye(n, dtype=bool)
    positive = positive & others

    neg_inf = np.full_like(s, -np.inf)
    s_all = np.where(others, s, neg_inf)
    s_pos = np.where(positive, s, neg_inf)

    # separate max-shifts keep both log-sums finite even when positives are far below the max
    shift_all = s_all.max(axis=1, keepdims=True)
    shift_pos = s_pos.max(axis=1, keepdims=True)
    e_all = np.exp(s_all - shift_all)
    e_pos = np.exp(s_pos - shift_pos)
    sum_all = e_all.sum(axis=1, keepdims=True)
    sum_pos = e_pos.sum(axis=1, keepdims=True)

    per_anchor = (shift_all - shift_pos) + np.log(sum_all) - np.log(sum_pos)
    per_anchor = np.maximum(per_anchor, 0.0)
    value = weight * float(per_anchor.sum()) + 0.0

    g = -weight * (e_pos / sum_pos - e_all / sum_all)
    grads = (g + g.T) @ z / tau
    return LossOutput(value, grads)


def supcon_loss(reps: np.ndarray, labels: Sequence[Hashable], tau: float) -> LossOutput:
    """
    Supervised contrastive loss over a combined support+query batch.

    Every class must appear equally often (k + m times); the anchor is excluded from both the
    positive and the full sum, and 1/c multiplies each anchor's log-ratio.
    """
    z = np.asarray(reps, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 2:
        raise LossInputError("supcon_loss needs at least 2 representations")
    if len(labels) != z.shape[0]:
        raise LossInputError(f"{len(labels)} labels for {z.shape[0]} representations")
    if not tau > 0:
        raise LossInputError(f"temperature must be positive, got {tau}")

    classes, codes, counts = np.unique(np.asarray(labels, dtype=object).astype(str), return_inverse=True, return_counts=True)
    if classes.size < 2:
        raise LossInputError("supcon_loss needs at least 2 distinct labels")
    if np.any(counts != counts[0]):
        raise LossInputError(f"unequal class counts: {dict(zip(classes.tolist(), counts.tolist()))}")
    c = int(counts[0]) - 1
    if c < 1:
        raise LossInputError("every class needs at least 2 members (c = 0)")

    positive = codes[:, None] == codes[None, :]
    return _contrastive_kernel(z, positive, tau, 1.0 / c)


def ntxent_loss(views: Sequence[Tuple[np.ndarray, np.ndarray]], tau: float) -> LossOutput:
    """
    NT-Xent over N matched pairs, flattened as [a_0..a_{N-1}, b_0..b_{N-1}].

    Gradients come back in the same flattened order. With N = 1 the negative set is empty
    and both value and gradients are exactly zero.
    """
    if len(views) < 1:
        raise LossInputError("ntxent_loss needs at least one pair")
    if not tau > 0:
        raise LossInputError(f"temperature must be positive, got {tau}")
    a = np.stack([np.asarray(p[0], dtype=np.float64) for p in views])
    b = np.stack([np.asarray(p[1], dtype=np.float64) for p in views])
    z = np.concatenate([a, b])
    n = len(views)
    pair = np.concatenate([np.arange(n), np.arange(n)])
    positive = pair[:, None] == pair[None, :]
    return _contrastive_kernel(z, positive, tau, 1.0)


def task_representation(member_reps: Sequence[np.ndarray]) -> np.ndarray:
    """Mean embedding of a task's members"""
    if len(member_reps) == 0:
        raise LossInputError("task_representation needs at least one member")
    return np.mean(np.stack(member_reps), axis=0)


def anneal_alpha(step: int, total_steps: int, cfg: LossConfig) -> float:
    """Linear decay from alpha0 at step 0 to alpha_floor at total_steps"""
    if total_steps < 1:
        raise LossInputError(f"total_steps must be positive, got {total_steps}")
    if not 0 <= step <= total_steps:
        raise LossInputError(f"step {step} outside [0, {total_steps}]")
    return cfg.alpha0 + (cfg.alpha_floor - cfg.alpha0) * (step / total_steps)


def total_loss(
    l_con: LossOutput,
    l_inst: Optional[LossOutput],
    l_task: Optional[LossOutput],
    alpha: float,
    beta: float,
) -> LossOutput:
    """
    alpha * L_con + (1 - alpha) * L_inst + beta * L_task.

    Gradients are concatenated in the order con, inst, task, each scaled by its coefficient;
    a missing component contributes exactly zero and no rows.
    """
    dim = l_con.grads.shape[1]
    l_inst = l_inst if l_inst is not None else LossOutput.empty(dim)
    l_task = l_task if l_task is not None else LossOutput.empty(dim)
    value = alpha * l_con.value + (1.0 - alpha) * l_inst.value + beta * l_task.value
    grads = np.concatenate([
        alpha * l_con.grads,
        (1.0 - alpha) * l_inst.grads,
        beta * l_task.grads,
    ])
    return LossOutput(value, grads)
