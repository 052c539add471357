"""
Weight-sharing supernet: shared parameter store, static shape layouts, the
five building blocks, and compact (effective-shape) execution of a genome.

Two execution frames exist:

* compact: hard genomes run with parameters sliced to their effective
  dimensions (leading-ones masks select leading rows/columns, connection
  masks select which predecessor segments are gathered). This is the frame
  used for training, proxies and the instrumented FLOP oracle — the
  arithmetic performed is exactly the subnet's own.
* static: every block runs at its maximal shape with (possibly soft) mask
  vectors; see `relaxed.forward_static`. Used by the differentiable searcher
  and by the all-enabled supernet forward.

Dead choices — those whose output never reaches the final head through
active connections — are pruned from execution and therefore from the FLOP
oracle's counts.

Pairwise projections FC(i->j) are stored once per (source i, source j) pair
and shared across all choices (and across the gating/sum kinds); within one
forward pass each projection and each interaction is computed at most once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import runtime as rt
from .runtime import Tensor
from .space import (
    BlockKind, ChoiceSpec, DEFAULT_ACTIVATIONS, DIMMED_KINDS, GenomeError,
    MASKED_CONN_KINDS, NUM_RAW, PAIRWISE_KINDS, SRC_DENSE, SRC_EMB,
    SubnetGenome, SupernetSpec, all_ones_genome, validate_genome,
)


# ---------------------------------------------------------------------------
# Static layouts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SourceLayout:
    """Maximal tensor shapes a source can produce (0 = part absent)."""
    width2: int
    rows3: int

    def flat_width(self, D: int) -> int:
        return self.width2 + self.rows3 * D


def compute_layouts(spec: SupernetSpec) -> list[SourceLayout]:
    """Static layout per source id (raw inputs first, then choices)."""
    D = spec.embed_dim
    layouts = [SourceLayout(spec.dense_width, 0), SourceLayout(0, spec.n_embeddings)]
    for cs in spec.choices:
        w2 = 0
        for kind in cs.blocks:
            if kind is BlockKind.EMBED_FC:
                continue
            w2 = max(w2, block_static_width(spec, layouts, cs, kind))
        r3 = cs.max_dim if BlockKind.EMBED_FC in cs.blocks else 0
        layouts.append(SourceLayout(w2, r3))
    return layouts


def concat3_rows(layouts, cs: ChoiceSpec) -> list[tuple]:
    """Static middle-axis layout of the concat-3d adaptor's output.

    Returns (tag, pred_pos, src, start_row, n_rows) entries, one per part:
    a '2d' part contributes one projected row, a '3d' part its static rows.
    """
    rows = []
    start = 0
    for pos, src in enumerate(cs.predecessors):
        lay = layouts[src]
        if lay.width2 > 0:
            rows.append(("2d", pos, src, start, 1))
            start += 1
        if lay.rows3 > 0:
            rows.append(("3d", pos, src, start, lay.rows3))
            start += lay.rows3
    return rows


def concat3_static_rows(layouts, cs: ChoiceSpec) -> int:
    return sum(n for _, _, _, _, n in concat3_rows(layouts, cs))


def block_static_width(spec, layouts, cs: ChoiceSpec, kind: BlockKind) -> int:
    """Static 2D output width of one block kind inside one choice."""
    if kind is BlockKind.LINEAR:
        return cs.max_dim
    if kind is BlockKind.COMPRESSED_DOT:
        return concat3_static_rows(layouts, cs) * cs.max_dim
    if kind in PAIRWISE_KINDS:
        return max(layouts[s].flat_width(spec.embed_dim) for s in cs.predecessors)
    raise ValueError(f"{kind} does not produce a 2D output")


def flat_positions(layout: SourceLayout, pos2: np.ndarray, rows3: np.ndarray,
                   D: int) -> np.ndarray:
    """Active positions in a source's flattened (2D ++ 3D) frame."""
    parts = [np.asarray(pos2, dtype=np.intp)]
    if len(rows3):
        r = np.asarray(rows3, dtype=np.intp)
        parts.append((layout.width2 + r[:, None] * D + np.arange(D)).ravel())
    return np.concatenate(parts) if len(parts) > 1 else parts[0]


def pair_param_keys(spec: SupernetSpec) -> list[tuple[int, int]]:
    """All (source i, source j) pairs any choice's pairwise blocks can use."""
    keys = set()
    for cs in spec.choices:
        if cs.has_any(PAIRWISE_KINDS):
            for si in cs.predecessors:
                for sj in cs.predecessors:
                    keys.add((si, sj))
    return sorted(keys)


# ---------------------------------------------------------------------------
# Parameter store
# ---------------------------------------------------------------------------

def init_params(spec: SupernetSpec, rng: np.random.Generator) -> dict[str, Tensor]:
    """Fan-in-scaled uniform weights, zero biases, unit layer-norm gains.

    Creation order is deterministic so a seeded rng reproduces the store.
    """
    layouts = compute_layouts(spec)
    D = spec.embed_dim
    store: dict[str, Tensor] = {}

    def weight(name, shape, fan_in):
        lim = 1.0 / np.sqrt(fan_in)
        store[name] = Tensor(rng.uniform(-lim, lim, size=shape),
                             requires_grad=True, name=name)

    def const(name, shape, value):
        store[name] = Tensor(np.full(shape, value), requires_grad=True, name=name)

    for cs in spec.choices:
        c = cs.index
        F = sum(layouts[s].flat_width(D) for s in cs.predecessors)
        n3 = concat3_static_rows(layouts, cs)
        if BlockKind.LINEAR in cs.blocks:
            weight(f"choice.{c}.linear.weight", (F, cs.max_dim), F)
            const(f"choice.{c}.linear.bias", (cs.max_dim,), 0.0)
            const(f"choice.{c}.linear.ln_gain", (cs.max_dim,), 1.0)
            const(f"choice.{c}.linear.ln_bias", (cs.max_dim,), 0.0)
        if BlockKind.EMBED_FC in cs.blocks:
            weight(f"choice.{c}.embedfc.weight", (cs.max_dim, n3), n3)
            const(f"choice.{c}.embedfc.ln_gain", (D,), 1.0)
            const(f"choice.{c}.embedfc.ln_bias", (D,), 0.0)
        if BlockKind.COMPRESSED_DOT in cs.blocks:
            weight(f"choice.{c}.cdot.weight", (cs.max_dim, n3), n3)
            const(f"choice.{c}.cdot.ln_gain", (n3 * cs.max_dim,), 1.0)
            const(f"choice.{c}.cdot.ln_bias", (n3 * cs.max_dim,), 0.0)
        if cs.has_any((BlockKind.EMBED_FC, BlockKind.COMPRESSED_DOT)):
            for src in cs.predecessors:
                if layouts[src].width2 > 0:
                    weight(f"choice.{c}.adapt3d.{src}.weight",
                           (layouts[src].width2, D), layouts[src].width2)
        for kind in PAIRWISE_KINDS:
            if kind in cs.blocks:
                w = block_static_width(spec, layouts, cs, kind)
                const(f"choice.{c}.{kind.value}.ln_gain", (w,), 1.0)
                const(f"choice.{c}.{kind.value}.ln_bias", (w,), 0.0)
    for si, sj in pair_param_keys(spec):
        fi = layouts[si].flat_width(D)
        fj = layouts[sj].flat_width(D)
        bn = spec.bottleneck_dim
        weight(f"pair.{si}.{sj}.fc1.weight", (fi, bn), fi)
        const(f"pair.{si}.{sj}.fc1.bias", (bn,), 0.0)
        weight(f"pair.{si}.{sj}.fc2.weight", (bn, fj), bn)
        const(f"pair.{si}.{sj}.fc2.bias", (fj,), 0.0)
    head_in = layouts[NUM_RAW + spec.n_choices - 1].flat_width(D)
    weight("head.weight", (head_in, 1), head_in)
    const("head.bias", (1,), 0.0)
    return store


def zero_params_like(store: dict[str, Tensor]) -> dict[str, Tensor]:
    return {name: Tensor(np.zeros_like(t.data), requires_grad=True, name=name)
            for name, t in store.items()}


# ---------------------------------------------------------------------------
# Spec-level ops (static frame) — the public building pieces
# ---------------------------------------------------------------------------

def adapt_inputs(inputs, target: str, proj_weights=None):
    """Adapt a mixed list of 2D/3D tensors for a block family.

    flat2d: reshape everything to 2D and concatenate (before linear).
    concat3d: 2D inputs become B x 1 x S, are projected to B x 1 x D with the
      given per-input projection weights, and everything concatenates along
      the middle axis (before compressed dot / EmbedFC).
    list2d: each input reshaped to 2D, kept separate (before pairwise).
    """
    ins = [rt.as_tensor(x) for x in inputs]
    if not ins:
        raise ValueError("adapt_inputs needs at least one input")
    B = ins[0].data.shape[0]
    if target == "flat2d":
        flat = [x if x.data.ndim == 2 else rt.reshape(x, (B, -1)) for x in ins]
        return rt.concat(flat, axis=1) if len(flat) > 1 else flat[0]
    if target == "list2d":
        return [x if x.data.ndim == 2 else rt.reshape(x, (B, -1)) for x in ins]
    if target == "concat3d":
        parts = []
        D = None
        for x in ins:
            if x.data.ndim == 3:
                D = x.data.shape[2]
        for x in ins:
            if x.data.ndim == 3:
                parts.append(x)
            else:
                w = proj_weights[len(parts)] if isinstance(proj_weights, list) \
                    else proj_weights[id(x)] if isinstance(proj_weights, dict) else None
                if w is None:
                    raise ValueError("concat3d needs a projection weight per 2D input")
                w = rt.as_tensor(w)
                if D is not None and w.data.shape[1] != D:
                    raise rt.DimensionError("projected embedding dim mismatch")
                parts.append(rt.reshape(rt.matmul(x, w), (B, 1, w.data.shape[1])))
        return rt.concat(parts, axis=1) if len(parts) > 1 else parts[0]
    raise ValueError(f"unknown adaptor target {target!r}")


def block_forward(kind: BlockKind, adapted, params: dict, dim_mask=None,
                  activation=None, apply_norm: bool = True,
                  eps_ln: float = 1e-5):
    """Run one building block in the static frame.

    `adapted` is the output of the matching adaptor (a 2D tensor for linear,
    a 3D tensor for EmbedFC / compressed dot, an (x_left, x_right) pair for
    the pairwise kinds). `dim_mask` is a leading-ones vector masking the
    internal projection's output dimension. Layer norm plus activation is
    appended unless apply_norm is False (then the raw block output returns).
    """
    act = activation or DEFAULT_ACTIVATIONS[kind]
    mask = None if dim_mask is None else np.asarray(dim_mask, dtype=np.float64)
    ln_mask = None

    if kind is BlockKind.LINEAR:
        y = rt.matmul(adapted, params["weight"], params.get("bias"))
        if mask is not None:
            y = rt.mul(y, rt.as_tensor(mask))
            ln_mask = mask
    elif kind is BlockKind.EMBED_FC:
        y = rt.embed_project(params["weight"], adapted)
        if mask is not None:
            y = rt.mul(y, rt.as_tensor(mask.reshape(-1, 1)))
    elif kind is BlockKind.COMPRESSED_DOT:
        comp = rt.embed_project(params["weight"], adapted)
        if mask is not None:
            comp = rt.mul(comp, rt.as_tensor(mask.reshape(-1, 1)))
        B = adapted.data.shape[0]
        N = adapted.data.shape[1]
        y = rt.reshape(rt.bmm(adapted, rt.transpose23(comp)), (B, -1))
        if mask is not None:
            ln_mask = np.tile(mask, N)
    elif kind in PAIRWISE_KINDS:
        x_left, x_right = adapted
        h = rt.matmul(x_left, params["fc1_weight"], params.get("fc1_bias"))
        proj = rt.matmul(h, params["fc2_weight"], params.get("fc2_bias"))
        if kind is BlockKind.PAIRWISE_GATING:
            y = rt.mul(rt.sigmoid(proj), x_right)
        else:
            y = rt.add(proj, x_right)
    else:
        raise ValueError(f"unknown block kind {kind}")

    if not apply_norm:
        return y
    out = rt.layer_norm_act(y, params["ln_gain"], params["ln_bias"], act,
                            eps=eps_ln, mask=ln_mask)
    if kind is BlockKind.EMBED_FC and mask is not None:
        out = rt.mul(out, rt.as_tensor(mask.reshape(-1, 1)))
    return out


def aggregate_outputs(outputs_2d, output_3d=None):
    """Zero-pad-sum the 2D block outputs; a 3D output passes through alone."""
    out2 = rt.zero_pad_sum(outputs_2d) if outputs_2d else None
    return out2, output_3d


# ---------------------------------------------------------------------------
# Execution plan for a hard genome
# ---------------------------------------------------------------------------

@dataclass
class ChoicePlan:
    index: int
    dim: int
    kinds: list
    active_preds: list          # [(pred_pos, src)] for mask-connected blocks
    pairs_src: list             # [(src_left, src_right)] in genome order
    out_pos2: np.ndarray
    out_rows3: np.ndarray


@dataclass
class Plan:
    live: list[int]
    pos2: dict
    rows3: dict
    choices: dict


def liveness(spec: SupernetSpec, genome: SubnetGenome) -> list[int]:
    """Choices whose output transitively reaches the head (the last choice)."""
    consumed_by: dict[int, set[int]] = {i: set() for i in range(spec.n_choices)}
    for cs, gc in zip(spec.choices, genome.choices):
        kinds = [cs.blocks[b] for b in gc.blocks]
        srcs = set()
        if any(k in MASKED_CONN_KINDS for k in kinds):
            srcs |= {s for pos, s in enumerate(cs.predecessors) if gc.conn[pos]}
        if any(k in PAIRWISE_KINDS for k in kinds):
            for l, r in gc.pairs:
                srcs.add(cs.predecessors[l])
                srcs.add(cs.predecessors[r])
        for s in srcs:
            if s >= NUM_RAW:
                consumed_by[s - NUM_RAW].add(cs.index)
    last = spec.n_choices - 1
    live = {last}
    for c in range(spec.n_choices - 1, -1, -1):
        if consumed_by[c] & live:
            live.add(c)
    return sorted(live)


def plan_execution(spec: SupernetSpec, genome: SubnetGenome) -> Plan:
    """Precompute active positions and gather structure for a genome."""
    validate_genome(spec, genome)
    layouts = compute_layouts(spec)
    live = liveness(spec, genome)
    live_set = set(live)
    pos2 = {SRC_DENSE: np.arange(spec.dense_width, dtype=np.intp),
            SRC_EMB: np.empty(0, dtype=np.intp)}
    rows3 = {SRC_DENSE: np.empty(0, dtype=np.intp),
             SRC_EMB: np.arange(spec.n_embeddings, dtype=np.intp)}
    plans = {}
    for cs, gc in zip(spec.choices, genome.choices):
        src_id = NUM_RAW + cs.index
        if cs.index not in live_set:
            pos2[src_id] = np.empty(0, dtype=np.intp)
            rows3[src_id] = np.empty(0, dtype=np.intp)
            continue
        d = cs.dim_options[gc.dim]
        kinds = [cs.blocks[b] for b in gc.blocks]
        active_preds = [(p, s) for p, s in enumerate(cs.predecessors)
                        if gc.conn[p]] if any(k in MASKED_CONN_KINDS
                                              for k in kinds) else []
        pairs_src = [(cs.predecessors[l], cs.predecessors[r]) for l, r in gc.pairs] \
            if any(k in PAIRWISE_KINDS for k in kinds) else []

        out_sets = []
        for kind in kinds:
            if kind is BlockKind.LINEAR:
                out_sets.append(np.arange(d, dtype=np.intp))
            elif kind is BlockKind.COMPRESSED_DOT:
                rows = _active_concat_rows(layouts, cs, active_preds, pos2, rows3)
                out_sets.append((rows[:, None] * cs.max_dim
                                 + np.arange(d)).ravel() if len(rows)
                                else np.empty(0, dtype=np.intp))
            elif kind in PAIRWISE_KINDS:
                ps = [flat_positions(layouts[sj], pos2[sj], rows3[sj], spec.embed_dim)
                      for _, sj in pairs_src]
                out_sets.append(np.unique(np.concatenate(ps)) if ps
                                else np.empty(0, dtype=np.intp))
        out_pos2 = np.unique(np.concatenate(out_sets)) if out_sets \
            else np.empty(0, dtype=np.intp)
        out_r3 = np.arange(d, dtype=np.intp) if BlockKind.EMBED_FC in kinds \
            else np.empty(0, dtype=np.intp)
        pos2[src_id] = out_pos2
        rows3[src_id] = out_r3
        plans[cs.index] = ChoicePlan(cs.index, d, kinds, active_preds,
                                     pairs_src, out_pos2, out_r3)
    return Plan(live, pos2, rows3, plans)


def _active_concat_rows(layouts, cs, active_preds, pos2, rows3) -> np.ndarray:
    """Active static row indices of the concat-3d adaptor output."""
    table = {(p, tag): (start, n) for tag, p, _, start, n in concat3_rows(layouts, cs)
             for tag in [tag]}
    rows = []
    for p, s in active_preds:
        if len(pos2[s]) and (p, "2d") in table:
            rows.append(np.array([table[(p, "2d")][0]], dtype=np.intp))
        if len(rows3[s]) and (p, "3d") in table:
            start, _ = table[(p, "3d")]
            rows.append(start + rows3[s])
    return np.concatenate(rows) if rows else np.empty(0, dtype=np.intp)


# ---------------------------------------------------------------------------
# Compact forward
# ---------------------------------------------------------------------------

def _union_accumulate(pieces, positions):
    """Sum compact pieces aligned by their static positions.

    A single piece passes through (no adds); otherwise pieces accumulate
    into the union frame, costing B * sum(len(positions_i)) adds.
    """
    if len(pieces) == 1:
        return pieces[0], np.asarray(positions[0], dtype=np.intp)
    union = np.unique(np.concatenate([np.asarray(p, dtype=np.intp)
                                      for p in positions]))
    mapped = [np.searchsorted(union, np.asarray(p, dtype=np.intp))
              for p in positions]
    return rt.padded_accumulate(pieces, mapped, len(union)), union


def forward_compact(spec: SupernetSpec, store: dict, plan: Plan,
                    dense, emb, eps_ln: float = 1e-5,
                    activations=None) -> Tensor:
    """Run a hard genome at effective shapes; returns the (B, 1) logit."""
    acts = activations or DEFAULT_ACTIVATIONS
    layouts = compute_layouts(spec)
    D = spec.embed_dim
    dense_t = rt.as_tensor(np.asarray(dense, dtype=np.float64))
    emb_t = rt.as_tensor(np.asarray(emb, dtype=np.float64))
    if dense_t.data.ndim != 2 or emb_t.data.ndim != 3:
        raise rt.DimensionError("expected dense (B,S) and embeddings (B,N,D)")
    B = dense_t.data.shape[0]
    t2 = {SRC_DENSE: dense_t, SRC_EMB: None}
    t3 = {SRC_DENSE: None, SRC_EMB: emb_t}
    flat_memo: dict[int, Tensor] = {}
    proj_memo: dict[tuple, Tensor] = {}
    inter_memo: dict[tuple, Tensor] = {}

    def flat(s):
        if s not in flat_memo:
            parts = []
            if t2[s] is not None:
                parts.append(t2[s])
            if t3[s] is not None:
                r = t3[s].data.shape[1]
                parts.append(rt.reshape(t3[s], (B, r * D)))
            flat_memo[s] = rt.concat(parts, axis=1) if len(parts) > 1 else parts[0]
        return flat_memo[s]

    for ci in plan.live:
        cs = spec.choices[ci]
        cp = plan.choices[ci]
        c = cs.index
        d = cp.dim
        pieces, piece_pos = [], []
        out3 = None

        flat_in = None
        flat_rows = None
        x3 = None
        x3_cols = None

        for kind in cp.kinds:
            if kind is BlockKind.LINEAR:
                if flat_in is None:
                    flat_in, flat_rows = _gather_flat(
                        spec, layouts, plan, cp, t2, t3, flat, B)
                w = rt.index_cols(rt.index_rows(
                    store[f"choice.{c}.linear.weight"], flat_rows),
                    np.arange(d, dtype=np.intp))
                b = rt.index_vec(store[f"choice.{c}.linear.bias"],
                                 np.arange(d, dtype=np.intp))
                y = rt.matmul(flat_in, w, b)
                y = rt.layer_norm_act(
                    y,
                    rt.index_vec(store[f"choice.{c}.linear.ln_gain"],
                                 np.arange(d, dtype=np.intp)),
                    rt.index_vec(store[f"choice.{c}.linear.ln_bias"],
                                 np.arange(d, dtype=np.intp)),
                    acts[BlockKind.LINEAR], eps=eps_ln)
                pieces.append(y)
                piece_pos.append(np.arange(d, dtype=np.intp))
            elif kind in (BlockKind.EMBED_FC, BlockKind.COMPRESSED_DOT):
                if x3 is None:
                    x3, x3_cols = _gather_concat3(
                        spec, layouts, plan, cs, cp, store, t2, t3, B)
                tag = "embedfc" if kind is BlockKind.EMBED_FC else "cdot"
                w = rt.index_cols(rt.index_rows(
                    store[f"choice.{c}.{tag}.weight"],
                    np.arange(d, dtype=np.intp)), x3_cols)
                comp = rt.embed_project(w, x3)
                if kind is BlockKind.EMBED_FC:
                    out3 = rt.layer_norm_act(
                        comp, store[f"choice.{c}.embedfc.ln_gain"],
                        store[f"choice.{c}.embedfc.ln_bias"],
                        acts[BlockKind.EMBED_FC], eps=eps_ln)
                else:
                    n_eff = x3.data.shape[1]
                    y = rt.reshape(rt.bmm(x3, rt.transpose23(comp)),
                                   (B, n_eff * d))
                    posn = (x3_cols[:, None] * cs.max_dim
                            + np.arange(d)).ravel()
                    y = rt.layer_norm_act(
                        y,
                        rt.index_vec(store[f"choice.{c}.cdot.ln_gain"], posn),
                        rt.index_vec(store[f"choice.{c}.cdot.ln_bias"], posn),
                        acts[BlockKind.COMPRESSED_DOT], eps=eps_ln)
                    pieces.append(y)
                    piece_pos.append(posn)
            elif kind in PAIRWISE_KINDS:
                terms, term_pos = [], []
                for si, sj in cp.pairs_src:
                    pkey = (si, sj)
                    pos_j = flat_positions(layouts[sj], plan.pos2[sj],
                                           plan.rows3[sj], D)
                    if pkey not in proj_memo:
                        pos_i = flat_positions(layouts[si], plan.pos2[si],
                                               plan.rows3[si], D)
                        h = rt.matmul(
                            flat(si),
                            rt.index_rows(store[f"pair.{si}.{sj}.fc1.weight"],
                                          pos_i),
                            store[f"pair.{si}.{sj}.fc1.bias"])
                        proj_memo[pkey] = rt.matmul(
                            h,
                            rt.index_cols(store[f"pair.{si}.{sj}.fc2.weight"],
                                          pos_j),
                            rt.index_vec(store[f"pair.{si}.{sj}.fc2.bias"],
                                         pos_j))
                    ikey = (kind, si, sj)
                    if ikey not in inter_memo:
                        if kind is BlockKind.PAIRWISE_GATING:
                            inter_memo[ikey] = rt.mul(
                                rt.sigmoid(proj_memo[pkey]), flat(sj))
                        else:
                            inter_memo[ikey] = rt.add(proj_memo[pkey], flat(sj))
                    terms.append(inter_memo[ikey])
                    term_pos.append(pos_j)
                y, upos = _union_accumulate(terms, term_pos)
                y = rt.layer_norm_act(
                    y,
                    rt.index_vec(store[f"choice.{c}.{kind.value}.ln_gain"], upos),
                    rt.index_vec(store[f"choice.{c}.{kind.value}.ln_bias"], upos),
                    acts[kind], eps=eps_ln)
                pieces.append(y)
                piece_pos.append(upos)

        src_id = NUM_RAW + c
        if pieces:
            out2, _ = _union_accumulate(pieces, piece_pos)
            t2[src_id] = out2
        else:
            t2[src_id] = None
        t3[src_id] = out3

    last = NUM_RAW + spec.n_choices - 1
    head_rows = flat_positions(layouts[last], plan.pos2[last],
                               plan.rows3[last], D)
    return rt.matmul(flat(last), rt.index_rows(store["head.weight"], head_rows),
                     store["head.bias"])


def _gather_flat(spec, layouts, plan, cp, t2, t3, flat, B):
    """Concatenate the active predecessors' flattened values for flat2d."""
    D = spec.embed_dim
    cs = spec.choices[cp.index]
    offsets = np.cumsum([0] + [layouts[s].flat_width(D) for s in cs.predecessors])
    pieces, rows = [], []
    for p, s in cp.active_preds:
        fpos = flat_positions(layouts[s], plan.pos2[s], plan.rows3[s], D)
        if len(fpos) == 0:
            continue
        pieces.append(flat(s))
        rows.append(offsets[p] + fpos)
    if not pieces:
        raise GenomeError(f"choice {cp.index}: linear block has no inputs")
    x = rt.concat(pieces, axis=1) if len(pieces) > 1 else pieces[0]
    return x, np.concatenate(rows)


def _gather_concat3(spec, layouts, plan, cs, cp, store, t2, t3, B):
    """Build the compact concat-3d input and its active static row indices."""
    D = spec.embed_dim
    table = {}
    for tag, p, s, start, n in concat3_rows(layouts, cs):
        table[(p, tag)] = start
    parts, cols = [], []
    for p, s in cp.active_preds:
        if t2[s] is not None and len(plan.pos2[s]):
            w = rt.index_rows(store[f"choice.{cs.index}.adapt3d.{s}.weight"],
                              plan.pos2[s])
            parts.append(rt.reshape(rt.matmul(t2[s], w), (B, 1, D)))
            cols.append(np.array([table[(p, "2d")]], dtype=np.intp))
        if t3[s] is not None and len(plan.rows3[s]):
            parts.append(t3[s])
            cols.append(table[(p, "3d")] + plan.rows3[s])
    if not parts:
        raise GenomeError(f"choice {cs.index}: concat-3d adaptor has no inputs")
    x3 = rt.concat(parts, axis=1) if len(parts) > 1 else parts[0]
    return x3, np.concatenate(cols)


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------

class SubnetModel:
    """A genome bound to a parameter store (shared or private)."""

    def __init__(self, spec, genome, store, eps_ln=1e-5, activations=None):
        self.spec = spec
        self.genome = genome
        self.store = store
        self.plan = plan_execution(spec, genome)
        self.eps_ln = eps_ln
        self.activations = activations or DEFAULT_ACTIVATIONS

    def forward(self, dense, emb) -> Tensor:
        return forward_compact(self.spec, self.store, self.plan, dense, emb,
                               self.eps_ln, self.activations)

    def params(self) -> list[Tensor]:
        return [self.store[k] for k in sorted(self.store)]


class Supernet:
    """Shared parameter store plus compact/static execution entry points."""

    def __init__(self, spec: SupernetSpec, rng=None, store=None,
                 eps_ln: float = 1e-5, activations=None):
        self.spec = spec
        self.layouts = compute_layouts(spec)
        if store is None:
            if rng is None:
                raise ValueError("Supernet needs an rng or an existing store")
            store = init_params(spec, rng)
        self.store = store
        self.eps_ln = eps_ln
        self.activations = activations or DEFAULT_ACTIVATIONS
        self._plans: dict[SubnetGenome, Plan] = {}

    def params(self) -> list[Tensor]:
        return [self.store[k] for k in sorted(self.store)]

    def plan(self, genome: SubnetGenome) -> Plan:
        if genome not in self._plans:
            self._plans[genome] = plan_execution(self.spec, genome)
        return self._plans[genome]

    def forward(self, dense, emb, genome: SubnetGenome) -> Tensor:
        return forward_compact(self.spec, self.store, self.plan(genome),
                               dense, emb, self.eps_ln, self.activations)

    def forward_full(self, dense, emb) -> Tensor:
        """The unmasked supernet: static-frame execution, every mask ones."""
        from .relaxed import forward_static
        return forward_static(self.spec, self.store, dense, emb, soft=None,
                              eps_ln=self.eps_ln, activations=self.activations)

    def bind(self, genome: SubnetGenome) -> SubnetModel:
        """A subnet view training against the shared weights."""
        return SubnetModel(self.spec, genome, self.store, self.eps_ln,
                           self.activations)

    def extract(self, genome: SubnetGenome) -> SubnetModel:
        """Standalone subnet with exactly the genome-selected parameter
        slices copied out of the shared store (everything else zero)."""
        dst = zero_params_like(self.store)
        copy_active_slices(self.spec, self.store, dst, self.plan(genome))
        return SubnetModel(self.spec, genome, dst, self.eps_ln, self.activations)

    def fresh(self, genome: SubnetGenome, rng) -> SubnetModel:
        """Standalone subnet with freshly initialized weights."""
        return SubnetModel(self.spec, genome, init_params(self.spec, rng),
                           self.eps_ln, self.activations)


def copy_active_slices(spec, src_store, dst_store, plan: Plan) -> None:
    """Copy the parameter slices a plan actually reads from src to dst."""
    layouts = compute_layouts(spec)
    D = spec.embed_dim

    def cp(name, rows=None, cols=None):
        s, t = src_store[name].data, dst_store[name].data
        if rows is None and cols is None:
            t[...] = s
        elif cols is None:
            t[rows] = s[rows]
        elif rows is None:
            t[:, cols] = s[:, cols]
        else:
            t[np.ix_(rows, cols)] = s[np.ix_(rows, cols)]

    for ci in plan.live:
        cs = spec.choices[ci]
        cpn = plan.choices[ci]
        c, d = cs.index, cpn.dim
        dr = np.arange(d, dtype=np.intp)
        for kind in cpn.kinds:
            if kind is BlockKind.LINEAR:
                offsets = np.cumsum(
                    [0] + [layouts[s].flat_width(D) for s in cs.predecessors])
                rows = [offsets[p] + flat_positions(layouts[s], plan.pos2[s],
                                                    plan.rows3[s], D)
                        for p, s in cpn.active_preds
                        if len(flat_positions(layouts[s], plan.pos2[s],
                                              plan.rows3[s], D))]
                rows = np.concatenate(rows)
                cp(f"choice.{c}.linear.weight", rows, dr)
                cp(f"choice.{c}.linear.bias", dr)
                cp(f"choice.{c}.linear.ln_gain", dr)
                cp(f"choice.{c}.linear.ln_bias", dr)
            elif kind in (BlockKind.EMBED_FC, BlockKind.COMPRESSED_DOT):
                cols = _active_concat_rows(layouts, cs, cpn.active_preds,
                                           plan.pos2, plan.rows3)
                tag = "embedfc" if kind is BlockKind.EMBED_FC else "cdot"
                cp(f"choice.{c}.{tag}.weight", dr, cols)
                for p, s in cpn.active_preds:
                    if layouts[s].width2 > 0 and len(plan.pos2[s]):
                        cp(f"choice.{c}.adapt3d.{s}.weight", plan.pos2[s])
                if kind is BlockKind.EMBED_FC:
                    cp(f"choice.{c}.embedfc.ln_gain")
                    cp(f"choice.{c}.embedfc.ln_bias")
                else:
                    posn = (cols[:, None] * cs.max_dim + np.arange(d)).ravel()
                    cp(f"choice.{c}.cdot.ln_gain", posn)
                    cp(f"choice.{c}.cdot.ln_bias", posn)
            elif kind in PAIRWISE_KINDS:
                upos = []
                for si, sj in cpn.pairs_src:
                    pos_i = flat_positions(layouts[si], plan.pos2[si],
                                           plan.rows3[si], D)
                    pos_j = flat_positions(layouts[sj], plan.pos2[sj],
                                           plan.rows3[sj], D)
                    cp(f"pair.{si}.{sj}.fc1.weight", pos_i)
                    cp(f"pair.{si}.{sj}.fc1.bias")
                    cp(f"pair.{si}.{sj}.fc2.weight", None, pos_j)
                    cp(f"pair.{si}.{sj}.fc2.bias", pos_j)
                    upos.append(pos_j)
                upos = np.unique(np.concatenate(upos))
                cp(f"choice.{c}.{kind.value}.ln_gain", upos)
                cp(f"choice.{c}.{kind.value}.ln_bias", upos)
    last = NUM_RAW + spec.n_choices - 1
    rows = flat_positions(layouts[last], plan.pos2[last], plan.rows3[last], D)
    cp("head.weight", rows)
    cp("head.bias")


def full_supernet_model(spec: SupernetSpec, store: dict,
                        eps_ln: float = 1e-5, activations=None) -> SubnetModel:
    """The all-enabled genome bound to a store (compact frame)."""
    return SubnetModel(spec, all_ones_genome(spec), store, eps_ln, activations)
