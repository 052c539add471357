"""
Shared train/evaluate loops: progressive validation (each batch's loss is
recorded before the update that consumes it), window NE at the end.
"""

from __future__ import annotations

import numpy as np

from . import runtime as rt
from .data import SynthTaskSpec, next_batch
from .metrics import NeAccumulator
from .supernet import SubnetModel


def train_model(model: SubnetModel, task: SynthTaskSpec, n_batches: int,
                batch_size: int, lr: float = 1e-2, start_step: int = 0,
                opt: rt.Adam | None = None,
                acc: NeAccumulator | None = None) -> NeAccumulator:
    """Online training over the task stream; returns the NE accumulator."""
    if opt is None:
        opt = rt.Adam(model.params(), lr=lr)
    if acc is None:
        acc = NeAccumulator()
    for k in range(n_batches):
        b = next_batch(task, batch_size, start_step + k)
        logit = model.forward(b.dense, b.embeddings)
        loss = rt.binary_cross_entropy(logit, b.labels)
        if not np.isfinite(loss.item()):
            raise rt.TrainingError(f"non-finite loss at step {start_step + k}")
        acc.add(loss.item(), b.labels)
        opt.zero_grad()
        rt.backward(loss)
        opt.step()
    return acc


def evaluate_model(model: SubnetModel, task: SynthTaskSpec, n_batches: int,
                   batch_size: int, start_step: int = 0) -> NeAccumulator:
    """Loss over the stream without updates."""
    acc = NeAccumulator()
    for k in range(n_batches):
        b = next_batch(task, batch_size, start_step + k)
        loss = rt.binary_cross_entropy(model.forward(b.dense, b.embeddings),
                                       b.labels)
        acc.add(loss.item(), b.labels)
    return acc


def batches_for(budget_examples: int, batch_size: int) -> int:
    """Number of batches covering a budget, at least one."""
    return max(1, int(np.ceil(budget_examples / batch_size)))
