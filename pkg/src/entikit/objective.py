"""Label-smoothed sequence cross-entropy, its gradient, and the task sum.

The per-token loss is -sum_v q_v * log softmax(logits)_v with the smoothed
target q_v = (1 - eps) * [v == target] + eps / V; the sequence loss is the
mean over the K target tokens, and the training objective is the plain
unweighted sum of the entity, rationale, and answer losses. Softmax uses
log-sum-exp stabilization so large-magnitude logits stay exact.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PRETRAIN_EPSILON = 0.2
FINETUNE_EPSILON = 0.1


@dataclass(frozen=True)
class LossBreakdown:
    entity: float
    rationale: float
    qa: float
    total: float


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise log softmax with log-sum-exp stabilization."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def smoothed_targets(vocab_size: int, target: int, epsilon: float) -> np.ndarray:
    """Smoothed target distribution: eps spread over all classes, rest on target."""
    q = np.full(vocab_size, epsilon / vocab_size, dtype=np.float64)
    q[target] += 1.0 - epsilon
    return q


def label_smoothed_ce(logits_row: np.ndarray, target: int, epsilon: float) -> float:
    """Label-smoothed cross entropy of one logits row against one target index."""
    row = np.asarray(logits_row, dtype=np.float64)
    if row.ndim != 1:
        raise ValueError("logits_row must be 1-D")
    vocab = row.shape[0]
    if not 0.0 <= epsilon < 1.0:
        raise ValueError(f"epsilon must be in [0, 1), got {epsilon}")
    if not 0 <= target < vocab:
        raise IndexError(f"target {target} out of range for vocab {vocab}")
    logp = log_softmax(row)
    if epsilon == 0.0:
        return float(-logp[target])
    return float(-np.dot(smoothed_targets(vocab, target, epsilon), logp))


def sequence_loss(logits: np.ndarray, targets: np.ndarray, epsilon: float) -> float:
    """Mean of per-token smoothed cross entropies over a K x V logits matrix."""
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets)
    if logits.ndim != 2:
        raise ValueError("logits must be a K x V matrix")
    if targets.shape != (logits.shape[0],):
        raise ValueError(
            f"targets length {targets.shape} does not match K={logits.shape[0]}"
        )
    per_token = [label_smoothed_ce(logits[k], int(targets[k]), epsilon) for k in range(logits.shape[0])]
    return float(np.mean(per_token))


def sequence_loss_grad(logits: np.ndarray, targets: np.ndarray, epsilon: float) -> np.ndarray:
    """Analytic gradient of sequence_loss: (softmax(row) - q) / K per row."""
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets)
    if logits.ndim != 2:
        raise ValueError("logits must be a K x V matrix")
    k, vocab = logits.shape
    if targets.shape != (k,):
        raise ValueError(f"targets length {targets.shape} does not match K={k}")
    if not 0.0 <= epsilon < 1.0:
        raise ValueError(f"epsilon must be in [0, 1), got {epsilon}")
    if np.any(targets < 0) or np.any(targets >= vocab):
        raise IndexError("target index out of range")
    probs = np.exp(log_softmax(logits))
    q = np.full_like(probs, epsilon / vocab)
    q[np.arange(k), targets] += 1.0 - epsilon
    return (probs - q) / k


def multitask_loss(entity: float, rationale: float, qa: float) -> LossBreakdown:
    """Unweighted sum of the three task losses."""
    return LossBreakdown(entity=entity, rationale=rationale, qa=qa, total=entity + rationale + qa)


def grad_check(
    k: int = 4, vocab: int = 6, epsilon: float = 0.2, step: float = 1e-5, seed: int = 0
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Relative error is the infinity-norm gap scaled by the larger of the two
    gradients' infinity norms, the usual grad-check normalization.
    """
    rng = np.random.default_rng(seed)
    logits = rng.normal(size=(k, vocab)) * 3.0
    targets = rng.integers(0, vocab, size=k)
    analytic = sequence_loss_grad(logits, targets, epsilon)
    numeric = np.empty_like(analytic)
    for i in range(k):
        for j in range(vocab):
            plus = logits.copy()
            minus = logits.copy()
            plus[i, j] += step
            minus[i, j] -= step
            numeric[i, j] = (
                sequence_loss(plus, targets, epsilon) - sequence_loss(minus, targets, epsilon)
            ) / (2.0 * step)
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-30)
    return float(np.abs(analytic - numeric).max() / scale)
