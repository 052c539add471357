"""
One-shot search: a multinomial policy over the free decisions samples
subnets from the weight-sharing supernet each mini-batch, rewards are
relative batch NE against an in-place co-trained baseline model plus an
additive FLOPs cost, and the policy takes one on-policy REINFORCE step
followed by K off-policy steps with clipped, self-normalized importance
weights over a FIFO replay buffer.

Sign convention: rewards are costs — lower is better — and the policy
gradient descends expected reward.
"""

from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import runtime as rt
from .cost import count_flops
from .data import SynthTaskSpec, next_batch
from .metrics import NeAccumulator, batch_ne
from .space import (
    Decision, MASKED_CONN_KINDS, SubnetGenome, SupernetSpec, assemble_genome,
    base_genome, free_decisions,
)
from .supernet import Supernet, SubnetModel, init_params

WIS_EPSILON = 1e-8
WIS_CLIP = 1e4


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


class PolicyParams:
    """Per free decision, a logit vector; decisions are independent
    multinomials, so P(genome) is the product of chosen-option softmaxes."""

    def __init__(self, spec: SupernetSpec):
        self.spec = spec
        self.decisions: list[Decision] = free_decisions(spec)
        if not self.decisions:
            raise ValueError("spec has no free decisions to search")
        self.logits: list[np.ndarray] = [np.zeros(d.n_options)
                                         for d in self.decisions]

    def probs(self) -> list[np.ndarray]:
        return [_softmax(z) for z in self.logits]

    def entropies(self) -> np.ndarray:
        out = []
        for p in self.probs():
            q = np.clip(p, 1e-12, 1.0)
            out.append(float(-(q * np.log(q)).sum()))
        return np.array(out)

    def option_probs(self, options: np.ndarray) -> np.ndarray:
        return np.array([p[o] for p, o in zip(self.probs(), options)])

    def state_arrays(self) -> dict:
        return {f"policy_logits_{i}": z for i, z in enumerate(self.logits)}

    def load_state_arrays(self, arrays: dict) -> None:
        for i in range(len(self.logits)):
            self.logits[i] = np.asarray(arrays[f"policy_logits_{i}"],
                                        dtype=np.float64)


def sample_genome(policy: PolicyParams, spec: SupernetSpec,
                  rng: np.random.Generator):
    """Draw one genome; returns (genome, log-prob, per-decision chosen
    probabilities, chosen option indices).

    Connection-bit draws that leave a non-pairwise block without inputs are
    resampled per choice; the reported log-prob is the unconstrained product
    (small documented bias, mirroring the random sampler).
    """
    probs = policy.probs()
    options = np.zeros(len(policy.decisions), dtype=np.intp)
    by_choice: dict[int, list[int]] = {}
    for k, dec in enumerate(policy.decisions):
        by_choice.setdefault(dec.choice, []).append(k)
    for c, idxs in by_choice.items():
        cs = spec.choices[c]
        for _attempt in range(100):
            for k in idxs:
                options[k] = rng.choice(policy.decisions[k].n_options,
                                        p=probs[k])
            chosen = {(policy.decisions[k].kind, policy.decisions[k].arg):
                      int(options[k]) for k in idxs}
            block = chosen.get(("block", 0), cs.base_block)
            kind = cs.blocks[block]
            conn_keys = [k for k in idxs if policy.decisions[k].kind == "conn"]
            if not conn_keys or kind not in MASKED_CONN_KINDS:
                break
            if any(options[k] for k in conn_keys):
                break
        else:
            # overwhelmingly unlikely unless all on-probabilities are ~0
            options[conn_keys[-1]] = 1
    genome = assemble_genome(
        spec, {policy.decisions[k]: int(options[k])
               for k in range(len(policy.decisions))})
    chosen_probs = policy.option_probs(options)
    logp = float(np.log(np.clip(chosen_probs, 1e-300, None)).sum())
    return genome, logp, chosen_probs, options


def ne_percent_reward(ne_batch_subnet: float, ne_batch_baseline: float) -> float:
    """Relative NE against the co-trained baseline; negative is better."""
    if ne_batch_baseline <= 0:
        raise ValueError("baseline batch NE must be positive")
    return (ne_batch_subnet - ne_batch_baseline) / ne_batch_baseline


def total_reward(ne_pct: float, flops: float, c: float, alpha: float,
                 penalty: str = "l1") -> float:
    """Reward (a cost, minimized): NE%% plus the FLOPs penalty."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if penalty == "l1":
        return ne_pct + alpha * abs(flops - c)
    if penalty == "relu":
        return ne_pct + alpha * max(flops - c, 0.0)
    raise ValueError(f"unknown penalty {penalty!r}")


def wis_weight(p_now: float, p_then: float, eps: float = WIS_EPSILON,
               clip: float = WIS_CLIP) -> float:
    """Clipped importance ratio between current and sampling-time policy."""
    return min(p_now / (p_then + eps), clip)


@dataclass(frozen=True)
class RewardSample:
    """(theta-snapshot, genome, reward) as stored in the replay buffer; the
    snapshot keeps only the chosen-option probability per decision."""
    options: np.ndarray
    probs_then: np.ndarray
    reward: float
    step: int
    genome: SubnetGenome


class ReplayBuffer:
    """Bounded FIFO of RewardSamples, strictly oldest-first eviction."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._q: deque[RewardSample] = deque(maxlen=capacity)

    def push(self, sample: RewardSample) -> None:
        self._q.append(sample)

    def sample(self, n: int, rng: np.random.Generator) -> list[RewardSample]:
        idx = rng.choice(len(self._q), size=min(n, len(self._q)), replace=False)
        return [self._q[i] for i in idx]

    def __len__(self):
        return len(self._q)

    def __iter__(self):
        return iter(self._q)


def reinforce_update(policy: PolicyParams, batch, lr: float = 1e-2) -> PolicyParams:
    """One REINFORCE step with the batch-mean baseline (Eq.-style sum
    normalized by the batch size so learning rate is size-independent)."""
    samples = [s for s in batch
               if np.isfinite(s.reward if isinstance(s, RewardSample) else s[1])]
    dropped = len(batch) - len(samples)
    if dropped:
        warnings.warn(f"dropped {dropped} non-finite rewards")
    if not samples:
        return policy
    opts = [s.options if isinstance(s, RewardSample) else s[0] for s in samples]
    rewards = np.array([s.reward if isinstance(s, RewardSample) else s[1]
                        for s in samples])
    b = rewards.mean()
    n = len(samples)
    probs = policy.probs()
    for d in range(len(policy.decisions)):
        grad = np.zeros_like(policy.logits[d])
        for o, r in zip(opts, rewards):
            score = -probs[d].copy()
            score[o[d]] += 1.0
            grad += (r - b) * score
        policy.logits[d] -= lr * grad / n
    return policy


def offpolicy_update(policy: PolicyParams, buffer: ReplayBuffer,
                     minibatch_size: int, rng: np.random.Generator,
                     lr: float = 1e-2, eps: float = WIS_EPSILON,
                     clip: float = WIS_CLIP) -> PolicyParams:
    """One weighted-importance-sampling policy-gradient step on a uniform
    replay minibatch; reduces to reinforce_update when all weights equal."""
    if len(buffer) == 0:
        raise ValueError("empty replay buffer")
    samples = buffer.sample(minibatch_size, rng)
    p_now = np.array([float(np.prod(policy.option_probs(s.options)))
                      for s in samples])
    p_then = np.array([float(np.prod(s.probs_then)) for s in samples])
    w = np.array([wis_weight(a, b, eps, clip) for a, b in zip(p_now, p_then)])
    if w.sum() == 0:
        return policy
    v = w / w.sum()
    rewards = np.array([s.reward for s in samples])
    b = rewards.mean()
    probs = policy.probs()
    for d in range(len(policy.decisions)):
        grad = np.zeros_like(policy.logits[d])
        for s, vi, r in zip(samples, v, rewards):
            score = -probs[d].copy()
            score[s.options[d]] += 1.0
            grad += vi * (r - b) * score
        policy.logits[d] -= lr * grad
    return policy


def extract_best_genome(policy: PolicyParams, spec: SupernetSpec) -> SubnetGenome:
    """Per-decision argmax, ties to the lowest option index."""
    options = {d: int(np.argmax(z))
               for d, z in zip(policy.decisions, policy.logits)}
    return assemble_genome(spec, options)


# ---------------------------------------------------------------------------
# Policy-only search (synthetic rewards: bandits, FLOPs targeting, predictor)
# ---------------------------------------------------------------------------

def policy_only_search(spec: SupernetSpec, reward_fn, steps: int, M: int = 8,
                       K: int = 0, policy_lr: float = 1e-2,
                       rng: np.random.Generator | None = None,
                       buffer_capacity: int = 10_000,
                       policy: PolicyParams | None = None,
                       stop_fn=None):
    """Run the on/off-policy loop against a pure reward function.

    Returns (policy, history) where history has one row per step:
    (step, mean reward, argmax-genome reward, policy updates so far).
    `stop_fn(policy, step)` may end the loop early.
    """
    rng = rng or np.random.default_rng(0)
    policy = policy or PolicyParams(spec)
    buffer = ReplayBuffer(buffer_capacity)
    history = []
    updates = 0
    for step in range(steps):
        samples = []
        for _ in range(M):
            genome, _, probs_chosen, options = sample_genome(policy, spec, rng)
            samples.append(RewardSample(options, probs_chosen,
                                        float(reward_fn(genome)), step, genome))
        reinforce_update(policy, samples, lr=policy_lr)
        updates += 1
        for s in samples:
            buffer.push(s)
        for _ in range(K):
            offpolicy_update(policy, buffer, M, rng, lr=policy_lr)
            updates += 1
        mean_r = float(np.mean([s.reward for s in samples]))
        history.append((step, mean_r, updates))
        if stop_fn is not None and stop_fn(policy, step):
            break
    return policy, history


# ---------------------------------------------------------------------------
# Joint supernet + policy search
# ---------------------------------------------------------------------------

@dataclass
class OneShotConfig:
    batch_size: int = 32
    M: int = 8
    K: int = 50
    buffer_capacity: int = 10_000
    policy_lr: float = 1e-2
    supernet_lr: float = 1e-2
    baseline_lr: float = 1e-2
    alpha: float = 0.0
    target_flops: float = 0.0
    penalty: str = "l1"


@dataclass
class OneShotState:
    spec: SupernetSpec
    supernet: Supernet
    baseline: SubnetModel
    policy: PolicyParams
    buffer: ReplayBuffer
    sup_opt: rt.Adam
    base_opt: rt.Adam
    cfg: OneShotConfig
    rng: np.random.Generator
    step: int = 0
    trace: list = field(default_factory=list)
    flops_cache: dict = field(default_factory=dict)
    reward_rows: list = field(default_factory=list)


def init_oneshot(spec: SupernetSpec, cfg: OneShotConfig,
                 rng: np.random.Generator,
                 baseline_spec: SupernetSpec | None = None) -> OneShotState:
    """Build supernet, in-place baseline (the seed configuration trained as
    its own standalone model), policy, buffer and optimizers."""
    supernet = Supernet(spec, rng=rng)
    bspec = baseline_spec or spec
    baseline = SubnetModel(bspec, base_genome(bspec), init_params(bspec, rng))
    policy = PolicyParams(spec)
    buffer = ReplayBuffer(cfg.buffer_capacity)
    return OneShotState(
        spec=spec, supernet=supernet, baseline=baseline, policy=policy,
        buffer=buffer,
        sup_opt=rt.Adam(supernet.params(), lr=cfg.supernet_lr),
        base_opt=rt.Adam(baseline.params(), lr=cfg.baseline_lr),
        cfg=cfg, rng=rng)


def _genome_flops(state: OneShotState, genome: SubnetGenome) -> int:
    if genome not in state.flops_cache:
        state.flops_cache[genome] = count_flops(state.spec, genome).flops
    return state.flops_cache[genome]


def joint_search_step(state: OneShotState, task: SynthTaskSpec) -> OneShotState:
    """One mini-batch: train the baseline, train M sampled subnets on the
    shared weights and collect NE%%+cost rewards, one on-policy update, push
    to the buffer, K off-policy updates."""
    cfg = state.cfg
    b = next_batch(task, cfg.batch_size, state.step)

    base_logit = state.baseline.forward(b.dense, b.embeddings)
    base_loss = rt.binary_cross_entropy(base_logit, b.labels)
    ne_base = batch_ne(base_loss.item(), b.labels, fallback_rate=task.base_ctr)
    state.base_opt.zero_grad()
    rt.backward(base_loss)
    state.base_opt.step()

    samples = []
    for _ in range(cfg.M):
        genome, _, probs_chosen, options = sample_genome(
            state.policy, state.spec, state.rng)
        logit = state.supernet.forward(b.dense, b.embeddings, genome)
        loss = rt.binary_cross_entropy(logit, b.labels)
        if not np.isfinite(loss.item()):
            raise rt.TrainingError(f"supernet diverged at step {state.step}")
        ne_sub = batch_ne(loss.item(), b.labels, fallback_rate=task.base_ctr)
        state.sup_opt.zero_grad()
        rt.backward(loss)
        state.sup_opt.step()
        reward = ne_percent_reward(ne_sub, ne_base)
        if cfg.alpha > 0:
            reward = total_reward(reward, _genome_flops(state, genome),
                                  cfg.target_flops, cfg.alpha, cfg.penalty)
        samples.append(RewardSample(options, probs_chosen, reward,
                                    state.step, genome))
        state.reward_rows.append((state.step, ne_sub, reward))

    reinforce_update(state.policy, samples, lr=cfg.policy_lr)
    for s in samples:
        state.buffer.push(s)
    for _ in range(cfg.K):
        offpolicy_update(state.policy, state.buffer, cfg.M, state.rng,
                         lr=cfg.policy_lr)

    best = extract_best_genome(state.policy, state.spec)
    ent = state.policy.entropies()
    state.trace.append({
        "step": state.step,
        "mean_reward": float(np.mean([s.reward for s in samples])),
        "baseline_ne": ne_base,
        "policy_entropy": ",".join(f"{e:.4f}" for e in ent),
        "argmax_flops": _genome_flops(state, best),
    })
    state.step += 1
    return state


def oneshot_search(spec: SupernetSpec, task: SynthTaskSpec, steps: int,
                   cfg: OneShotConfig | None = None,
                   rng: np.random.Generator | None = None,
                   baseline_spec: SupernetSpec | None = None):
    """Full search loop; returns (best genome, state)."""
    cfg = cfg or OneShotConfig()
    rng = rng or np.random.default_rng(0)
    state = init_oneshot(spec, cfg, rng, baseline_spec)
    for _ in range(steps):
        joint_search_step(state, task)
    return extract_best_genome(state.policy, spec), state
