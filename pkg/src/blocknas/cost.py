"""
Analytical FLOP / parameter counting per genome, the instrumented execution
oracle, a differentiable expected-FLOPs function for the relaxed searcher,
and random-subnet statistics.

The analytic counter walks (spec, genome) and prices each operation the
compact execution path would actually perform (see runtime's FLOP
conventions); `oracle_count` runs that path under the instrumented counter
and must agree to the integer. Both prune dead choices (outputs that never
reach the head) and count each shared pairwise projection / interaction
once per forward.

`expected_flops` rewrites the same accounting as a polynomial in per-
decision probabilities: effective dimensions become expected dimensions,
block / connection terms are weighted by their probabilities, and choice
liveness and pairwise-projection sharing use the smooth OR
`1 - prod(1 - p)`, which makes the polynomial equal `count_flops` exactly
at any one-hot assignment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import runtime as rt
from .runtime import Tensor
from .space import (
    BlockKind, DEFAULT_ACTIVATIONS, Decision, DIMMED_KINDS, GenomeError,
    MASKED_CONN_KINDS, NUM_RAW, PAIRWISE_KINDS, SubnetGenome, SupernetSpec,
    free_decisions, sample_random_genome, validate_genome,
)
from .supernet import (
    Supernet, compute_layouts, concat3_rows, flat_positions, init_params,
    liveness, plan_execution, zero_params_like,
)

ACT_FLOPS = {"relu": 1, "sigmoid": 4, "identity": 0}


@dataclass(frozen=True)
class FlopsReport:
    flops: int
    dense_params: int
    n_choices: int
    n_connections: int

    def as_row(self) -> dict:
        return {"flops": self.flops, "dense_params": self.dense_params,
                "n_choices": self.n_choices, "n_connections": self.n_connections}


def _ln_flops(rows: int, width: int, act: str) -> int:
    return rows * (7 * width + 4) + ACT_FLOPS[act] * rows * width


# ---------------------------------------------------------------------------
# Analytic count
# ---------------------------------------------------------------------------

def count_flops(spec: SupernetSpec, genome: SubnetGenome,
                batch_size: int = 1, activations=None) -> FlopsReport:
    """Closed-form FLOPs / dense parameters of the realized subnet."""
    validate_genome(spec, genome)
    acts = activations or DEFAULT_ACTIVATIONS
    layouts = compute_layouts(spec)
    D = spec.embed_dim
    B = batch_size
    live = liveness(spec, genome)
    live_set = set(live)

    # active structure per source: 2D position sets and 3D row counts
    pos2: dict[int, frozenset] = {0: frozenset(range(spec.dense_width)),
                                  1: frozenset()}
    rows3: dict[int, int] = {0: 0, 1: spec.n_embeddings}
    flops = 0
    params = 0
    n_connections = 0
    proj_seen: set = set()
    inter_seen: set = set()
    adapt_counted: set = set()

    def flat_w(s) -> int:
        return len(pos2[s]) + rows3[s] * D

    def flat_pos_set(s) -> frozenset:
        w2 = layouts[s].width2
        out = set(pos2[s])
        for r in range(rows3[s]):
            out.update(range(w2 + r * D, w2 + r * D + D))
        return frozenset(out)

    for cs, gc in zip(spec.choices, genome.choices):
        src_id = NUM_RAW + cs.index
        if cs.index not in live_set:
            pos2[src_id] = frozenset()
            rows3[src_id] = 0
            continue
        d = cs.dim_options[gc.dim]
        kinds = [cs.blocks[b] for b in gc.blocks]
        apreds = [(p, s) for p, s in enumerate(cs.predecessors) if gc.conn[p]]
        if any(k in MASKED_CONN_KINDS for k in kinds):
            n_connections += sum(gc.conn)
        n_connections += 2 * sum(1 for k in kinds if k in PAIRWISE_KINDS)

        n3 = sum((1 if len(pos2[s]) else 0) + rows3[s]
                 for _, s in apreds)
        piece_widths = []
        out_sets = []
        for kind in kinds:
            if kind is BlockKind.LINEAR:
                F = sum(flat_w(s) for _, s in apreds)
                flops += 2 * B * F * d + B * d
                flops += _ln_flops(B, d, acts[kind])
                params += F * d + d + 2 * d
                piece_widths.append(d)
                out_sets.append(frozenset(range(d)))
            elif kind in (BlockKind.EMBED_FC, BlockKind.COMPRESSED_DOT):
                if cs.index not in adapt_counted:
                    adapt_counted.add(cs.index)
                    for _, s in apreds:
                        if len(pos2[s]):
                            flops += 2 * B * len(pos2[s]) * D
                            params += len(pos2[s]) * D
                flops += 2 * B * d * n3 * D
                params += d * n3
                if kind is BlockKind.EMBED_FC:
                    flops += _ln_flops(B * d, D, acts[kind])
                    params += 2 * D
                else:
                    flops += 2 * B * n3 * D * d          # bmm
                    flops += _ln_flops(B, n3 * d, acts[kind])
                    params += 2 * (n3 * d)
                    piece_widths.append(n3 * d)
                    out_sets.append(_cdot_positions(
                        layouts, cs, apreds, pos2, rows3, d))
            elif kind in PAIRWISE_KINDS:
                term_widths = []
                union: set = set()
                for l, r in gc.pairs:
                    si, sj = cs.predecessors[l], cs.predecessors[r]
                    fi, fj = flat_w(si), flat_w(sj)
                    if (si, sj) not in proj_seen:
                        proj_seen.add((si, sj))
                        bn = spec.bottleneck_dim
                        flops += 2 * B * fi * bn + B * bn
                        flops += 2 * B * bn * fj + B * fj
                        params += fi * bn + bn + bn * fj + fj
                    if (kind, si, sj) not in inter_seen:
                        inter_seen.add((kind, si, sj))
                        if kind is BlockKind.PAIRWISE_GATING:
                            flops += 5 * B * fj
                        else:
                            flops += B * fj
                    term_widths.append(fj)
                    union |= flat_pos_set(sj)
                if len(term_widths) > 1:
                    flops += B * sum(term_widths)
                U = len(union)
                flops += _ln_flops(B, U, acts[kind])
                params += 2 * U
                piece_widths.append(U)
                out_sets.append(frozenset(union))
        if len(piece_widths) > 1:
            flops += B * sum(piece_widths)
        pos2[src_id] = frozenset().union(*out_sets) if out_sets else frozenset()
        rows3[src_id] = d if BlockKind.EMBED_FC in kinds else 0

    last = NUM_RAW + spec.n_choices - 1
    F = flat_w(last)
    flops += 2 * B * F + B
    params += F + 1
    return FlopsReport(int(flops), int(params), len(live), int(n_connections))


def _cdot_positions(layouts, cs, apreds, pos2, rows3, d) -> frozenset:
    rows = []
    start = 0
    table = {}
    for tag, p, s, st, n in concat3_rows(layouts, cs):
        table[(p, tag)] = st
    for p, s in apreds:
        if len(pos2[s]) and (p, "2d") in table:
            rows.append(table[(p, "2d")])
        if rows3[s] and (p, "3d") in table:
            rows.extend(table[(p, "3d")] + r for r in range(rows3[s]))
    out = set()
    for r in rows:
        out.update(r * cs.max_dim + m for m in range(d))
    return frozenset(out)


# ---------------------------------------------------------------------------
# Instrumented oracle
# ---------------------------------------------------------------------------

def oracle_count(spec: SupernetSpec, genome: SubnetGenome,
                 batch_size: int = 1, activations=None) -> FlopsReport:
    """Ground truth: execute the realized subnet with every scalar
    multiply/add instrumented; parameters counted by marking the slices the
    plan actually copies."""
    from .supernet import copy_active_slices, forward_compact
    plan = plan_execution(spec, genome)
    store = init_params(spec, np.random.default_rng(0))
    dense = np.zeros((batch_size, spec.dense_width))
    emb = np.zeros((batch_size, spec.n_embeddings, spec.embed_dim))
    with rt.flop_counter() as cell:
        forward_compact(spec, store, plan, dense, emb,
                        activations=activations)
    ones = {k: rt.Tensor(np.ones_like(t.data)) for k, t in store.items()}
    marked = zero_params_like(store)
    copy_active_slices(spec, ones, marked, plan)
    params = int(sum(int(np.count_nonzero(t.data)) for t in marked.values()))

    n_connections = 0
    for ci in plan.live:
        cp = plan.choices[ci]
        gc = genome.choices[ci]
        if any(k in MASKED_CONN_KINDS for k in cp.kinds):
            n_connections += sum(gc.conn)
        n_connections += 2 * sum(1 for k in cp.kinds if k in PAIRWISE_KINDS)
    return FlopsReport(int(cell[0]), params, len(plan.live), n_connections)


# ---------------------------------------------------------------------------
# Differentiable expected FLOPs
# ---------------------------------------------------------------------------

@dataclass
class SoftGenome:
    """Per free decision, a probability simplex over its options."""
    probs: dict  # Decision -> (n_options,) array or Tensor

    def validate(self):
        for dec, p in self.probs.items():
            v = p.data if isinstance(p, Tensor) else np.asarray(p)
            if v.shape != (dec.n_options,):
                raise GenomeError(f"{dec.name}: prob shape {v.shape}")
            if np.any(v < 0) or abs(float(v.sum()) - 1.0) > 1e-9:
                raise GenomeError(f"{dec.name}: not a simplex")


def soft_from_genome(spec: SupernetSpec, genome: SubnetGenome) -> SoftGenome:
    """The one-hot SoftGenome matching a hard single-block genome."""
    validate_genome(spec, genome)
    probs = {}
    for dec in free_decisions(spec):
        gc = genome.choices[dec.choice]
        if dec.kind == "block":
            idx = gc.block_id
        elif dec.kind == "conn":
            idx = gc.conn[dec.arg]
        elif dec.kind == "left":
            idx = gc.pairs[0][0] if gc.pairs else spec.choices[dec.choice].base_left
        elif dec.kind == "right":
            idx = gc.pairs[0][1] if gc.pairs else spec.choices[dec.choice].base_right
        else:
            idx = gc.dim
        v = np.zeros(dec.n_options)
        v[idx] = 1.0
        probs[dec] = v
    return SoftGenome(probs)


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else rt.as_tensor(np.asarray(x, float))


def _c(v: float) -> Tensor:
    return rt.as_tensor(float(v))


def _or2(a: Tensor, b: Tensor) -> Tensor:
    # a + b - a*b, the smooth OR
    return rt.sub(rt.add(a, b), rt.mul(a, b))


def _or_list(items) -> Tensor:
    acc = _c(0.0)
    for x in items:
        acc = _or2(acc, x)
    return acc


def expected_flops(spec: SupernetSpec, soft: SoftGenome,
                   batch_size: int = 1, activations=None) -> Tensor:
    """FLOPs as a polynomial in decision probabilities (scalar Tensor).

    Exact at one-hot assignments; differentiable w.r.t. any Tensor-valued
    probability vectors (e.g. Gumbel-Softmax realizations).
    """
    soft.validate()
    acts = activations or DEFAULT_ACTIVATIONS
    layouts = compute_layouts(spec)
    D = spec.embed_dim
    B = batch_size
    decs = {(d.choice, d.kind, d.arg): d for d in free_decisions(spec)}

    def prob_vec(choice, kind, arg=0):
        key = (choice, kind, arg)
        if key in decs:
            return _t(soft.probs[decs[key]])
        return None

    def p_of(choice, kind, arg, hard_idx, n):
        """Probability vector entry or a hard one-hot from the base/frozen."""
        v = prob_vec(choice, kind, arg)
        if v is not None:
            return v
        hot = np.zeros(n)
        hot[hard_idx] = 1.0
        return _t(hot)

    # per-choice decision distributions (frozen decisions become one-hots)
    P_block, P_conn, P_left, P_right, E_dim = {}, {}, {}, {}, {}
    for cs in spec.choices:
        c = cs.index
        P_block[c] = p_of(c, "block", 0, cs.base_block, len(cs.blocks))
        P_conn[c] = [rt.reshape(rt.index_vec(
            p_of(c, "conn", p, cs.base_conn[p], 2), [1]), ())
            for p in range(cs.n_preds)]
        P_left[c] = p_of(c, "left", 0, cs.base_left, cs.n_preds)
        P_right[c] = p_of(c, "right", 0, cs.base_right, cs.n_preds)
        dvec = p_of(c, "dim", 0, cs.base_dim, len(cs.dim_options))
        E_dim[c] = rt.sum_all(rt.mul(dvec, _t(np.array(cs.dim_options, float))))

    def pb(c, kind) -> Tensor:
        cs = spec.choices[c]
        if kind not in cs.blocks:
            return _c(0.0)
        return rt.reshape(rt.index_vec(P_block[c], [cs.blocks.index(kind)]), ())

    def pvec(v, i) -> Tensor:
        return rt.reshape(rt.index_vec(v, [i]), ())

    # expected widths per source, in topological order
    E_w2 = {0: _c(float(spec.dense_width)), 1: _c(0.0)}
    E_r3 = {0: _c(0.0), 1: _c(float(spec.n_embeddings))}
    P_has2d = {0: _c(1.0), 1: _c(0.0)}

    def E_flat(s) -> Tensor:
        return rt.add(E_w2[s], rt.scale(E_r3[s], float(D)))

    for cs in spec.choices:
        c = cs.index
        src = NUM_RAW + c
        w2_terms = []
        for kind in cs.blocks:
            if kind is BlockKind.LINEAR:
                w2_terms.append(rt.mul(pb(c, kind), E_dim[c]))
            elif kind is BlockKind.COMPRESSED_DOT:
                n3 = _expected_rows(cs, P_conn[c], P_has2d, E_r3)
                w2_terms.append(rt.mul(pb(c, kind), rt.mul(n3, E_dim[c])))
            elif kind in PAIRWISE_KINDS:
                w = _c(0.0)
                for j, sj in enumerate(cs.predecessors):
                    w = rt.add(w, rt.mul(pvec(P_right[c], j), E_flat(sj)))
                w2_terms.append(rt.mul(pb(c, kind), w))
        E_w2[src] = sum_t(w2_terms)
        E_r3[src] = rt.mul(pb(c, BlockKind.EMBED_FC), E_dim[c])
        p2d = _c(0.0)
        for kind in cs.blocks:
            if kind is not BlockKind.EMBED_FC:
                p2d = rt.add(p2d, pb(c, kind))
        P_has2d[src] = p2d

    # soft liveness: live(c) = OR over consumers of P(consume) * live(k)
    live = {spec.n_choices - 1: _c(1.0)}
    for c in range(spec.n_choices - 2, -1, -1):
        src = NUM_RAW + c
        terms = []
        for k in range(c + 1, spec.n_choices):
            ck = spec.choices[k]
            if src not in ck.predecessors:
                continue
            pos = ck.predecessors.index(src)
            p_cons = _c(0.0)
            for kind in ck.blocks:
                if kind in MASKED_CONN_KINDS:
                    p_cons = rt.add(p_cons, rt.mul(pb(k, kind), P_conn[k][pos]))
                else:
                    pl = pvec(P_left[k], pos)
                    pr = pvec(P_right[k], pos)
                    p_cons = rt.add(p_cons, rt.mul(pb(k, kind), _or2(pl, pr)))
            terms.append(rt.mul(p_cons, live[k]))
        live[c] = _or_list(terms) if terms else _c(0.0)

    # per-choice costs; shared pairwise projections / interactions collected
    # as events and priced once below with OR'd probabilities
    total = _c(0.0)
    proj_events: dict = {}
    inter_events: dict = {}
    for cs in spec.choices:
        c = cs.index
        lv = live[c]
        choice_cost = _c(0.0)
        Ed = E_dim[c]
        n3 = _expected_rows(cs, P_conn[c], P_has2d, E_r3)
        adapt_cost = _c(0.0)
        for p, s in enumerate(cs.predecessors):
            adapt_cost = rt.add(adapt_cost, rt.mul(
                P_conn[c][p], rt.scale(E_w2[s], 2.0 * B * D)))
        for kind in cs.blocks:
            pk = pb(c, kind)
            if kind is BlockKind.LINEAR:
                EF = _c(0.0)
                for p, s in enumerate(cs.predecessors):
                    EF = rt.add(EF, rt.mul(P_conn[c][p], E_flat(s)))
                cost = rt.scale(rt.mul(EF, Ed), 2.0 * B)
                cost = rt.add(cost, rt.scale(Ed, float(B)))
                cost = rt.add(cost, _ln_flops_t(_c(float(B)), Ed, acts[kind]))
                choice_cost = rt.add(choice_cost, rt.mul(pk, cost))
            elif kind is BlockKind.EMBED_FC:
                cost = rt.scale(rt.mul(rt.mul(Ed, n3), _c(float(D))), 2.0 * B)
                cost = rt.add(cost, adapt_cost)
                cost = rt.add(cost, _ln_flops_t(
                    rt.scale(Ed, float(B)), _c(float(D)), acts[kind]))
                choice_cost = rt.add(choice_cost, rt.mul(pk, cost))
            elif kind is BlockKind.COMPRESSED_DOT:
                proj = rt.scale(rt.mul(rt.mul(Ed, n3), _c(float(D))), 2.0 * B)
                cost = rt.scale(proj, 2.0)  # internal projection + bmm
                cost = rt.add(cost, adapt_cost)
                cost = rt.add(cost, _ln_flops_t(
                    _c(float(B)), rt.mul(n3, Ed), acts[kind]))
                choice_cost = rt.add(choice_cost, rt.mul(pk, cost))
            elif kind in PAIRWISE_KINDS:
                ln_cost = _c(0.0)
                for j, sj in enumerate(cs.predecessors):
                    prj = pvec(P_right[c], j)
                    ln_cost = rt.add(ln_cost, rt.mul(prj, _ln_flops_t(
                        _c(float(B)), E_flat(sj), acts[kind])))
                    for i, si in enumerate(cs.predecessors):
                        pli = pvec(P_left[c], i)
                        ev = rt.mul(rt.mul(lv, pk), rt.mul(pli, prj))
                        proj_events.setdefault((si, sj), []).append(ev)
                        inter_events.setdefault((kind, si, sj), []).append(ev)
                choice_cost = rt.add(choice_cost, rt.mul(pk, ln_cost))
        total = rt.add(total, rt.mul(lv, choice_cost))

    # shared pairwise projections / interactions, each priced once
    bn = float(spec.bottleneck_dim)
    for (si, sj), events in proj_events.items():
        p_used = _or_list(events)
        cost = rt.add(rt.add(rt.scale(E_flat(si), 2.0 * B * bn), _c(B * bn)),
                      rt.add(rt.scale(E_flat(sj), 2.0 * B * bn),
                             rt.scale(E_flat(sj), float(B))))
        total = rt.add(total, rt.mul(p_used, cost))
    for (kind, si, sj), events in inter_events.items():
        p_used = _or_list(events)
        per = 5.0 if kind is BlockKind.PAIRWISE_GATING else 1.0
        total = rt.add(total, rt.mul(p_used, rt.scale(E_flat(sj), per * B)))

    last = NUM_RAW + spec.n_choices - 1
    total = rt.add(total, rt.add(rt.scale(E_flat(last), 2.0 * B), _c(float(B))))
    return total


def sum_t(items):
    acc = _c(0.0)
    for x in items:
        acc = rt.add(acc, x)
    return acc


def _expected_rows(cs, p_conn, P_has2d, E_r3) -> Tensor:
    n3 = _c(0.0)
    for p, s in enumerate(cs.predecessors):
        pc = rt.reshape(p_conn[p], ())
        n3 = rt.add(n3, rt.mul(pc, rt.add(P_has2d[s], E_r3[s])))
    return n3


def _ln_flops_t(rows: Tensor, width: Tensor, act: str) -> Tensor:
    base = rt.mul(rows, rt.add(rt.scale(width, 7.0), _c(4.0)))
    return rt.add(base, rt.scale(rt.mul(rows, width), float(ACT_FLOPS[act])))


# ---------------------------------------------------------------------------
# Subnet statistics
# ---------------------------------------------------------------------------

def subnet_statistics(spec: SupernetSpec, n_samples: int,
                      connection_on_prob: float, rng: np.random.Generator,
                      reference_genome: SubnetGenome | None = None,
                      batch_size: int = 1):
    """FlopsReports for random subnets plus an is_reference marker column."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rows = []
    for _ in range(n_samples):
        g = sample_random_genome(spec, rng, connection_on_prob)
        rows.append((count_flops(spec, g, batch_size), False))
    if reference_genome is not None:
        rows.append((count_flops(spec, reference_genome, batch_size), True))
    return rows
