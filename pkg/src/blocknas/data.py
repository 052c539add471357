"""
Streaming synthetic CTR data with a known interaction structure.

Labels are Bernoulli draws of a sigmoid ground-truth score built from a
dense linear term, pairwise embedding dot products (so architectures with a
compressed-dot block have a genuine advantage), and a base-rate bias. The
stream is a pure function of (task spec, step, batch size); optional drift
events apply piecewise-constant parameter shifts from their step onward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class DriftEvent:
    step: int
    bias_shift: float = 0.0
    dense_gain: float = 1.0


@dataclass(frozen=True)
class SynthTaskSpec:
    dense_width: int
    n_embeddings: int
    embed_dim: int
    base_ctr: float = 0.35
    dense_scale: float = 0.5
    dot_terms: tuple = ((0, 1, 1.0),)   # (emb_i, emb_j, weight)
    drift: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.base_ctr < 1.0:
            raise ValueError("base_ctr must be in (0, 1)")
        if min(self.dense_width, self.n_embeddings, self.embed_dim) < 1:
            raise ValueError("feature shapes must be positive")
        for i, j, _ in self.dot_terms:
            if not (0 <= i < self.n_embeddings and 0 <= j < self.n_embeddings):
                raise ValueError(f"dot term ({i},{j}) out of range")


@dataclass(frozen=True)
class MiniBatch:
    dense: np.ndarray       # (B, S)
    embeddings: np.ndarray  # (B, N, D)
    labels: np.ndarray      # (B,) in {0, 1}
    step: int

    @property
    def batch_size(self) -> int:
        return len(self.labels)


def _dense_weights(task: SynthTaskSpec) -> np.ndarray:
    rng = np.random.default_rng([task.seed, 104729])
    return task.dense_scale * rng.normal(size=task.dense_width) \
        / math.sqrt(task.dense_width)


def _drifted(task: SynthTaskSpec, step: int):
    bias = math.log(task.base_ctr / (1.0 - task.base_ctr))
    gain = 1.0
    for ev in task.drift:
        if step >= ev.step:
            bias += ev.bias_shift
            gain *= ev.dense_gain
    return bias, gain


def true_scores(task: SynthTaskSpec, dense: np.ndarray, emb: np.ndarray,
                step: int) -> np.ndarray:
    """Ground-truth logit per example at the given step."""
    bias, gain = _drifted(task, step)
    u = _dense_weights(task) * gain
    score = bias + dense @ u
    scale = 1.0 / math.sqrt(task.embed_dim)
    for i, j, w in task.dot_terms:
        score = score + w * scale * np.einsum("bd,bd->b", emb[:, i], emb[:, j])
    return score


def next_batch(task: SynthTaskSpec, batch_size: int, step: int) -> MiniBatch:
    """Deterministic batch for (task.seed, step, batch_size)."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    rng = np.random.default_rng([task.seed, 7919, step, batch_size])
    dense = rng.normal(size=(batch_size, task.dense_width))
    emb = rng.normal(size=(batch_size, task.n_embeddings, task.embed_dim))
    p = _sigmoid(true_scores(task, dense, emb, step))
    labels = (rng.random(batch_size) < p).astype(np.int64)
    return MiniBatch(dense, emb, labels, step)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bayes_optimal_ne(task: SynthTaskSpec, n_samples: int, step: int = 0) -> float:
    """Monte-Carlo NE of the true labeling probability — the achievable floor.

    Rao-Blackwellized: the expected log loss of predicting the true
    probability p is its entropy, so no labels need to be drawn.
    """
    rng = np.random.default_rng([task.seed, 15485863, step])
    dense = rng.normal(size=(n_samples, task.dense_width))
    emb = rng.normal(size=(n_samples, task.n_embeddings, task.embed_dim))
    p = _sigmoid(true_scores(task, dense, emb, step))
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    per_example = -(p * np.log(p) + (1.0 - p) * np.log(1.0 - p))
    pbar = float(p.mean())
    denom = -(pbar * math.log(pbar) + (1.0 - pbar) * math.log(1.0 - pbar))
    return float(per_example.mean() / denom)


def dump_batch(batch: MiniBatch, path) -> None:
    """Debug dump: one row per example, tab-delimited."""
    with open(path, "w") as f:
        S = batch.dense.shape[1]
        N, D = batch.embeddings.shape[1], batch.embeddings.shape[2]
        cols = (["label"] + [f"dense_{i}" for i in range(S)]
                + [f"emb_{n}_{d}" for n in range(N) for d in range(D)])
        f.write("\t".join(cols) + "\n")
        for b in range(batch.batch_size):
            row = [str(int(batch.labels[b]))]
            row += [f"{v:.9g}" for v in batch.dense[b]]
            row += [f"{v:.9g}" for v in batch.embeddings[b].ravel()]
            f.write("\t".join(row) + "\n")
