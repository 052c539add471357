"""
Sampling-based search: the two low-cost NE proxies (train-from-scratch
early stop, and supernet-pretrained weight sharing with partial parameter
transfer), neural-predictor proposal rounds driven by the RL policy
machinery, Successive Halving, and the proxy rank-correlation study.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np

from . import runtime as rt
from .cost import FlopsReport, count_flops
from .data import SynthTaskSpec
from .metrics import NeAccumulator, kendall_tau
from .oneshot_rl import PolicyParams, policy_only_search
from .space import (
    SubnetGenome, SupernetSpec, all_ones_genome, free_decisions,
    sample_random_genome, search_space_size,
)
from .supernet import Supernet, SubnetModel, init_params
from .train import batches_for, evaluate_model, train_model

WINDOW_FRACTION = 0.25


@dataclass(frozen=True)
class TrialRecord:
    genome: SubnetGenome
    proxy_kind: str               # early_stop | weight_sharing
    proxy_ne: float
    examples: int
    flops: FlopsReport
    failed: bool = False
    long_ne: float | None = None


# ---------------------------------------------------------------------------
# Proxies
# ---------------------------------------------------------------------------

def early_stop_proxy(spec: SupernetSpec, genome: SubnetGenome,
                     task: SynthTaskSpec, budget_examples: int,
                     batch_size: int = 32, lr: float = 1e-2,
                     seed: int = 0, start_step: int = 0) -> TrialRecord:
    """Train a standalone subnet from scratch for a small budget; the proxy
    is the window NE over the last quarter of the stream. The supernet is
    never instantiated."""
    model = SubnetModel(spec, genome, init_params(spec, np.random.default_rng(seed)))
    flops = count_flops(spec, genome)
    try:
        acc = train_model(model, task, batches_for(budget_examples, batch_size),
                          batch_size, lr, start_step=start_step)
        ne = acc.window_ne(WINDOW_FRACTION)
    except rt.TrainingError:
        return TrialRecord(genome, "early_stop", float("inf"),
                           budget_examples, flops, failed=True)
    return TrialRecord(genome, "early_stop", ne, budget_examples, flops)


def pretrain_supernet(spec: SupernetSpec, task: SynthTaskSpec,
                      total_budget: int, warm_fraction: float = 0.10,
                      subnet_prob: float = 0.75,
                      rng: np.random.Generator | None = None,
                      batch_size: int = 32, lr: float = 1e-2,
                      connection_on_prob: float = 0.8) -> Supernet:
    """Warm the whole supernet (all masks ones) on the first fraction of the
    budget, then train a uniform-random subnet with probability subnet_prob
    per mini-batch and the whole net otherwise."""
    if not 0.0 <= warm_fraction <= 1.0 or not 0.0 <= subnet_prob <= 1.0:
        raise ValueError("fractions must be in [0, 1]")
    rng = rng or np.random.default_rng(0)
    net = Supernet(spec, rng=rng)
    opt = rt.Adam(net.params(), lr=lr)
    full = all_ones_genome(spec)
    n_batches = batches_for(total_budget, batch_size)
    warm = int(round(warm_fraction * n_batches))
    from .data import next_batch
    for step in range(n_batches):
        if step < warm or rng.random() >= subnet_prob:
            genome = full
        else:
            genome = sample_random_genome(spec, rng, connection_on_prob)
        b = next_batch(task, batch_size, step)
        loss = rt.binary_cross_entropy(
            net.forward(b.dense, b.embeddings, genome), b.labels)
        if not np.isfinite(loss.item()):
            raise rt.TrainingError(f"supernet pretraining diverged at {step}")
        opt.zero_grad()
        rt.backward(loss)
        opt.step()
    return net


def weight_sharing_proxy(pretrained: Supernet, genome: SubnetGenome,
                         task: SynthTaskSpec, finetune_budget: int,
                         batch_size: int = 32, lr: float = 1e-2,
                         start_step: int = 0,
                         eval_budget: int = 512) -> TrialRecord:
    """Copy the genome-selected parameter slices out of the pretrained
    supernet and fine-tune the standalone copy; the supernet stays
    untouched. A zero budget evaluates the transferred subnet as-is."""
    model = pretrained.extract(genome)
    flops = count_flops(pretrained.spec, genome)
    try:
        if finetune_budget <= 0:
            acc = evaluate_model(model, task,
                                 batches_for(eval_budget, batch_size),
                                 batch_size, start_step=start_step)
            ne = acc.full_ne()
        else:
            acc = train_model(model, task,
                              batches_for(finetune_budget, batch_size),
                              batch_size, lr, start_step=start_step)
            ne = acc.window_ne(WINDOW_FRACTION)
    except rt.TrainingError:
        return TrialRecord(genome, "weight_sharing", float("inf"),
                           max(finetune_budget, 0), flops, failed=True)
    return TrialRecord(genome, "weight_sharing", ne,
                       max(finetune_budget, 0), flops)


def evaluate_genome_under_supernet(pretrained: Supernet, genome: SubnetGenome,
                                   task: SynthTaskSpec, eval_budget: int = 512,
                                   batch_size: int = 32,
                                   start_step: int = 0) -> float:
    """NE of a subnet running directly against the shared weights."""
    acc = evaluate_model(pretrained.bind(genome), task,
                         batches_for(eval_budget, batch_size), batch_size,
                         start_step=start_step)
    return acc.full_ne()


# ---------------------------------------------------------------------------
# Neural predictor
# ---------------------------------------------------------------------------

def encode_genome(spec: SupernetSpec, genome: SubnetGenome) -> np.ndarray:
    """Concatenated one-hot encoding over the spec's free decisions."""
    parts = []
    for d in free_decisions(spec):
        gc = genome.choices[d.choice]
        if d.kind == "block":
            idx = gc.block_id
        elif d.kind == "conn":
            idx = gc.conn[d.arg]
        elif d.kind == "left":
            idx = gc.pairs[0][0] if gc.pairs else spec.choices[d.choice].base_left
        elif d.kind == "right":
            idx = gc.pairs[0][1] if gc.pairs else spec.choices[d.choice].base_right
        else:
            idx = gc.dim
        v = np.zeros(d.n_options)
        v[idx] = 1.0
        parts.append(v)
    return np.concatenate(parts)


class PredictorModel:
    """Small MLP mapping the genome encoding to a predicted proxy NE."""

    def __init__(self, in_dim: int, hidden: int = 64, seed: int = 0):
        rng = np.random.default_rng(seed)

        def w(shape, fan_in):
            lim = 1.0 / np.sqrt(fan_in)
            return rt.Tensor(rng.uniform(-lim, lim, shape), requires_grad=True)

        self.w1 = w((in_dim, hidden), in_dim)
        self.b1 = rt.Tensor(np.zeros(hidden), requires_grad=True)
        self.w2 = w((hidden, hidden), hidden)
        self.b2 = rt.Tensor(np.zeros(hidden), requires_grad=True)
        self.w3 = w((hidden, 1), hidden)
        self.b3 = rt.Tensor(np.zeros(1), requires_grad=True)
        self.mean = 0.0
        self.scale = 1.0

    def params(self):
        return [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3]

    def _forward(self, x: np.ndarray) -> rt.Tensor:
        h = rt.relu(rt.matmul(rt.as_tensor(x), self.w1, self.b1))
        h = rt.relu(rt.matmul(h, self.w2, self.b2))
        return rt.matmul(h, self.w3, self.b3)

    def fit(self, X: np.ndarray, y: np.ndarray, epochs: int = 400,
            lr: float = 1e-2) -> float:
        """Full-batch Adam on squared error over standardized targets."""
        self.mean = float(y.mean())
        self.scale = float(y.std()) or 1.0
        t = (y - self.mean) / self.scale
        opt = rt.Adam(self.params(), lr=lr)
        loss_val = float("inf")
        for _ in range(epochs):
            pred = self._forward(X)
            err = rt.sub(pred, rt.as_tensor(t.reshape(-1, 1)))
            loss = rt.mean_all(rt.mul(err, err))
            opt.zero_grad()
            rt.backward(loss)
            opt.step()
            loss_val = loss.item()
        return loss_val

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self._forward(np.atleast_2d(X)).data.ravel() * self.scale + self.mean


def enumerate_genomes(spec: SupernetSpec, limit: int = 8192):
    """All genomes of a small space, in deterministic decision order."""
    decs = free_decisions(spec)
    total = search_space_size(spec)
    if total > limit:
        raise ValueError(f"space too large to enumerate ({total} > {limit})")
    from .space import assemble_genome
    seen = set()
    for combo in itertools.product(*[range(d.n_options) for d in decs]):
        g = assemble_genome(spec, dict(zip(decs, combo)))
        key = g.canonical_json()
        if key not in seen:
            seen.add(key)
            yield g


def predictor_round(history: list[TrialRecord], spec: SupernetSpec,
                    n_propose: int, rng: np.random.Generator,
                    policy_steps: int = 150, M: int = 8, K: int = 10,
                    policy_lr: float = 5e-2,
                    enumerate_limit: int = 4096) -> list[SubnetGenome]:
    """Fit the predictor on all history, then drive the one-shot policy
    machinery against predicted NE (no supernet training) and propose the
    top unseen genomes."""
    usable = [t for t in history if not t.failed]
    if not usable:
        raise ValueError("predictor_round needs a nonempty history")
    X = np.stack([encode_genome(spec, t.genome) for t in usable])
    y = np.array([t.proxy_ne for t in usable])
    seen = {t.genome.canonical_json() for t in history}
    degenerate = (np.allclose(X, X[0]) or np.allclose(y, y[0]))
    if degenerate:
        warnings.warn("degenerate history; proposing random genomes")
        out, guard = [], 0
        while len(out) < n_propose and guard < 50 * n_propose:
            g = sample_random_genome(spec, rng)
            guard += 1
            if g.canonical_json() not in seen:
                seen.add(g.canonical_json())
                out.append(g)
        return out

    predictor = PredictorModel(X.shape[1], seed=int(rng.integers(2 ** 31)))
    predictor.fit(X, y)

    scored: dict[str, tuple[float, SubnetGenome]] = {}

    def reward(genome: SubnetGenome) -> float:
        key = genome.canonical_json()
        if key not in scored:
            scored[key] = (float(predictor.predict(
                encode_genome(spec, genome))[0]), genome)
        return scored[key][0]

    policy_only_search(spec, reward, steps=policy_steps, M=M, K=K,
                       policy_lr=policy_lr, rng=rng)

    if search_space_size(spec) <= enumerate_limit:
        for g in enumerate_genomes(spec, enumerate_limit):
            reward(g)
    ranked = sorted(scored.values(), key=lambda t: (t[0], t[1].canonical_json()))
    out = []
    for _, g in ranked:
        if g.canonical_json() not in seen:
            out.append(g)
            if len(out) == n_propose:
                break
    return out


# ---------------------------------------------------------------------------
# Successive Halving
# ---------------------------------------------------------------------------

def successive_halving(candidates: list[SubnetGenome], rungs,
                       keep_fraction: float, evaluator) -> list[list]:
    """Budget tournament: per rung, evaluate the survivors at that budget
    and keep the best ceil(keep_fraction * n). Returns survivors per rung.

    `evaluator(genome, budget) -> NE`; lower is better. Ties keep input
    order (stable sort).
    """
    if not candidates:
        raise ValueError("successive_halving needs candidates")
    rungs = list(rungs)
    if any(b2 <= b1 for b1, b2 in zip(rungs, rungs[1:])):
        raise ValueError("rung budgets must increase")
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError("keep_fraction must be in (0, 1]")
    survivors = list(candidates)
    per_rung = []
    for budget in rungs:
        scores = np.array([evaluator(g, budget) for g in survivors])
        keep = int(np.ceil(keep_fraction * len(survivors)))
        order = np.argsort(scores, kind="stable")[:keep]
        survivors = [survivors[i] for i in sorted(order)]
        per_rung.append(survivors)
    return per_rung


# ---------------------------------------------------------------------------
# Proxy rank-correlation study
# ---------------------------------------------------------------------------

def proxy_rank_study(spec: SupernetSpec, task: SynthTaskSpec, n_models: int,
                     proxy_budgets, ground_truth_budget: int,
                     rng: np.random.Generator, pretrain_budget: int = 4096,
                     batch_size: int = 32, lr: float = 1e-2,
                     n_bootstrap: int = 200, seed0: int = 1000):
    """Kendall tau of both proxies against long-horizon NE per budget.

    Returns rows (proxy, budget, tau, q25, q75) with bootstrap quantile
    bands over model resampling. Per-model training seeds are fixed, so a
    proxy at the ground-truth budget reproduces the ground truth exactly.
    """
    if n_models < 10:
        raise ValueError("need at least 10 models for a rank study")
    genomes = [sample_random_genome(spec, rng) for _ in range(n_models)]
    long_ne = np.array([
        early_stop_proxy(spec, g, task, ground_truth_budget, batch_size, lr,
                         seed=seed0 + i).proxy_ne
        for i, g in enumerate(genomes)])
    pretrained = pretrain_supernet(spec, task, pretrain_budget, rng=rng,
                                   batch_size=batch_size, lr=lr)
    rows = []
    boot_rng = np.random.default_rng(rng.integers(2 ** 31))
    for budget in proxy_budgets:
        es = np.array([
            early_stop_proxy(spec, g, task, budget, batch_size, lr,
                             seed=seed0 + i).proxy_ne
            for i, g in enumerate(genomes)])
        ws = np.array([
            weight_sharing_proxy(pretrained, g, task, budget, batch_size, lr).proxy_ne
            for g in genomes])
        for name, proxy in (("early_stop", es), ("weight_sharing", ws)):
            tau = kendall_tau(proxy, long_ne)
            taus = []
            for _ in range(n_bootstrap):
                idx = boot_rng.integers(n_models, size=n_models)
                if len(set(proxy[idx])) < 2 or len(set(long_ne[idx])) < 2:
                    continue
                taus.append(kendall_tau(proxy[idx], long_ne[idx]))
            q25, q75 = (np.percentile(taus, [25, 75]) if taus
                        else (tau, tau))
            rows.append({"proxy": name, "budget": int(budget), "tau": tau,
                         "q25": float(q25), "q75": float(q75)})
    return rows
