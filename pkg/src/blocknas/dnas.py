"""
Differentiable search: every free decision is relaxed to a Gumbel-Softmax
variable, the supernet runs in the static frame with the relaxed masks, and
architecture logits are optimized jointly with the weights under a
|expected FLOPs - target| regularizer evaluated on the same relaxation
draws. One Gumbel realization is shared by the whole mini-batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import runtime as rt
from .cost import SoftGenome, expected_flops
from .data import SynthTaskSpec, next_batch
from .relaxed import SoftChoice, forward_static, soft_dim_mask
from .runtime import Tensor
from .space import (
    Decision, SubnetGenome, SupernetSpec, assemble_genome, dimension_mask,
    free_decisions,
)
from .supernet import Supernet


@dataclass
class ArchParams:
    """Per free decision a logit Tensor, plus the temperature schedule."""
    spec: SupernetSpec
    decisions: list[Decision]
    logits: list[Tensor]
    tau: float = 1.0

    @classmethod
    def zeros(cls, spec: SupernetSpec, tau: float = 1.0) -> "ArchParams":
        decs = free_decisions(spec)
        if not decs:
            raise ValueError("spec has no free decisions to search")
        logits = [rt.Tensor(np.zeros(d.n_options), requires_grad=True,
                            name=d.name) for d in decs]
        return cls(spec, decs, logits, tau)

    def max_probs(self) -> np.ndarray:
        out = []
        for z in self.logits:
            e = np.exp(z.data - z.data.max())
            out.append(float((e / e.sum()).max()))
        return np.array(out)

    def argmax_genome(self) -> SubnetGenome:
        """gamma(theta): the most likely subnet."""
        return assemble_genome(
            self.spec, {d: int(np.argmax(z.data))
                        for d, z in zip(self.decisions, self.logits)})


def gumbel_softmax_sample(logits, tau: float, rng: np.random.Generator) -> Tensor:
    """softmax((logits + Gumbel noise) / tau); differentiable w.r.t. logits."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    logits = rt.as_tensor(logits)
    g = rng.gumbel(size=logits.data.shape)
    return rt.softmax_vec(rt.scale(rt.add(logits, rt.as_tensor(g)), 1.0 / tau))


def draw_relaxation(arch: ArchParams, rng: np.random.Generator) -> dict:
    """One Gumbel-Softmax realization per free decision."""
    return {d: gumbel_softmax_sample(z, arch.tau, rng)
            for d, z in zip(arch.decisions, arch.logits)}


def soft_choices_from_draws(spec: SupernetSpec, draws: dict) -> list[SoftChoice]:
    """Assemble per-choice decision weights; frozen decisions become hard
    floats / masks from the spec's base configuration."""
    by = {(d.choice, d.kind, d.arg): y for d, y in draws.items()}

    def sc(v, i):
        return rt.reshape(rt.index_vec(v, [i]), ())

    out = []
    for cs in spec.choices:
        c = cs.index
        if (c, "block", 0) in by:
            v = by[(c, "block", 0)]
            block_w = [sc(v, i) for i in range(len(cs.blocks))]
        else:
            block_w = [1.0 if i == cs.base_block else 0.0
                       for i in range(len(cs.blocks))]
        conn_w = []
        for p in range(cs.n_preds):
            if (c, "conn", p) in by:
                conn_w.append(sc(by[(c, "conn", p)], 1))
            else:
                conn_w.append(float(cs.base_conn[p]))
        if (c, "left", 0) in by:
            v = by[(c, "left", 0)]
            left_w = [sc(v, i) for i in range(cs.n_preds)]
        else:
            left_w = [1.0 if i == cs.base_left else 0.0
                      for i in range(cs.n_preds)]
        if (c, "right", 0) in by:
            v = by[(c, "right", 0)]
            right_w = [sc(v, i) for i in range(cs.n_preds)]
        else:
            right_w = [1.0 if i == cs.base_right else 0.0
                       for i in range(cs.n_preds)]
        if (c, "dim", 0) in by:
            dim_mask = soft_dim_mask(by[(c, "dim", 0)], cs.dim_options,
                                     cs.max_dim)
            dim_probs = by[(c, "dim", 0)]
        else:
            base = cs.dim_options[cs.base_dim]
            dim_mask = None if base == cs.max_dim \
                else dimension_mask(base, cs.max_dim)
            dim_probs = None
        out.append(SoftChoice(block_w, conn_w, left_w, right_w,
                              dim_mask, dim_probs))
    return out


def relaxed_forward(spec: SupernetSpec, arch: ArchParams, store: dict,
                    batch, rng: np.random.Generator, eps_ln: float = 1e-5):
    """Monte-Carlo relaxed loss on one mini-batch.

    Returns (cross-entropy loss Tensor, the Gumbel draws used) so the FLOPs
    regularizer can be evaluated on the same realizations.
    """
    draws = draw_relaxation(arch, rng)
    soft = soft_choices_from_draws(spec, draws)
    logit = forward_static(spec, store, batch.dense, batch.embeddings,
                           soft=soft, eps_ln=eps_ln)
    loss = rt.binary_cross_entropy(logit, batch.labels)
    if not np.isfinite(loss.item()):
        raise rt.TrainingError("non-finite relaxed loss")
    return loss, draws


def flops_regularized_loss(ce_loss, spec: SupernetSpec, draws: dict,
                           c: float, lam: float, batch_size: int = 1):
    """ce + lam * |expected FLOPs - c| over the same relaxation draws."""
    if lam < 0 or c <= 0:
        raise ValueError("need lam >= 0 and c > 0")
    if lam == 0.0:
        return ce_loss
    soft = SoftGenome({d: y for d, y in draws.items()})
    reg = rt.absolute(rt.sub(expected_flops(spec, soft, batch_size),
                             rt.as_tensor(float(c))))
    out = rt.add(ce_loss, rt.scale(reg, lam)) if ce_loss is not None \
        else rt.scale(reg, lam)
    return out


@dataclass
class DnasConfig:
    batch_size: int = 32
    weights_lr: float = 1e-2
    arch_lr: float = 5e-2
    tau_start: float = 1.0
    tau_end: float = 0.1
    ce_weight: float = 1.0


def tau_schedule(step: int, total_steps: int, tau_start: float,
                 tau_end: float) -> float:
    """Geometric anneal from tau_start to tau_end across the run."""
    if total_steps <= 1:
        return tau_end
    frac = step / (total_steps - 1)
    return tau_start * (tau_end / tau_start) ** frac


def dnas_search(spec: SupernetSpec, task: SynthTaskSpec, c: float, lam: float,
                total_steps: int, rng: np.random.Generator,
                cfg: DnasConfig | None = None,
                stop_fn=None):
    """Jointly optimize (weights, architecture logits); returns
    (gamma(theta) genome, trace rows, arch, supernet).

    With ce_weight == 0 the search targets FLOPs only: no data is consumed
    and only the architecture logits step. `stop_fn(arch, step)` may end
    the loop early.
    """
    cfg = cfg or DnasConfig()
    arch = ArchParams.zeros(spec, cfg.tau_start)
    supernet = Supernet(spec, rng=rng)
    w_opt = rt.Adam(supernet.params(), lr=cfg.weights_lr)
    a_opt = rt.Adam(arch.logits, lr=cfg.arch_lr)
    trace = []
    for step in range(total_steps):
        arch.tau = tau_schedule(step, total_steps, cfg.tau_start, cfg.tau_end)
        if cfg.ce_weight > 0:
            batch = next_batch(task, cfg.batch_size, step)
            ce, draws = relaxed_forward(spec, arch, supernet.store, batch, rng)
            ce_val = ce.item()
            ce = ce if cfg.ce_weight == 1.0 else rt.scale(ce, cfg.ce_weight)
        else:
            if lam <= 0:
                raise ValueError("ce_weight == 0 needs lam > 0")
            ce, ce_val = None, float("nan")
            draws = draw_relaxation(arch, rng)
        # the FLOPs target is a per-example model cost (batch size 1)
        loss = flops_regularized_loss(ce, spec, draws, c, lam) if lam > 0 else ce
        soft_now = SoftGenome({d: y for d, y in draws.items()})
        eflops = expected_flops(spec, soft_now).item() if lam > 0 else float("nan")
        w_opt.zero_grad()
        a_opt.zero_grad()
        rt.backward(loss)
        if cfg.ce_weight > 0:
            w_opt.step()
        a_opt.step()
        trace.append({
            "step": step,
            "ce_loss": ce_val,
            "expected_flops": eflops,
            "tau": arch.tau,
            "max_prob": ",".join(f"{p:.4f}" for p in arch.max_probs()),
        })
        if stop_fn is not None and stop_fn(arch, step):
            break
    return arch.argmax_genome(), trace, arch, supernet
