"""
Static-frame supernet execution with (possibly soft) decision weights.

Every block runs at its maximal shape; decisions enter as multiplicative
weights: block selection as a weighted sum of block outputs, connection
bits as scalars on predecessor contributions, pairwise left/right as weights
on each interaction term, and dimension choices as leading-ones mask
vectors. Layer norm statistics are taken over the mask-weighted entries, so
a saturated (one-hot) assignment reproduces the compact sliced execution of
the corresponding hard genome, and the all-ones assignment is the whole
supernet.

Weights may be python floats (hard, e.g. frozen decisions or the all-ones
forward; 0.0 terms are skipped, 1.0 scalings are elided) or runtime Tensors
(soft, differentiable — the DNAS path). Activity masks that gate layer-norm
statistics are propagated alongside values and combined with the smooth OR
`1 - prod(1 - x)`, which is exact at hard 0/1 assignments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import runtime as rt
from .runtime import Tensor
from .space import (
    BlockKind, DEFAULT_ACTIVATIONS, NUM_RAW, PAIRWISE_KINDS, SRC_DENSE,
    SRC_EMB, SupernetSpec,
)
from .supernet import (
    block_static_width, compute_layouts, concat3_rows,
)


@dataclass
class SoftChoice:
    """Decision weights for one choice; floats are hard, Tensors are soft."""
    block_w: list                  # one weight per available block
    conn_w: list                   # one weight per predecessor
    left_w: list                   # one weight per predecessor
    right_w: list                  # one weight per predecessor
    dim_mask: object = None        # None | np.ndarray | Tensor, length max_dim
    dim_probs: object = None       # kept for the cost polynomial


def all_ones_soft(spec: SupernetSpec) -> list[SoftChoice]:
    out = []
    for cs in spec.choices:
        out.append(SoftChoice(
            block_w=[1.0] * len(cs.blocks),
            conn_w=[1.0] * cs.n_preds,
            left_w=[1.0] * cs.n_preds,
            right_w=[1.0] * cs.n_preds,
            dim_mask=None,
        ))
    return out


def soft_dim_mask(dim_probs: Tensor, dim_options, width: int) -> Tensor:
    """Convex combination of leading-ones masks: m[j] = P(dim > j)."""
    M = np.zeros((len(dim_options), width))
    for k, d in enumerate(dim_options):
        M[k, :d] = 1.0
    return rt.reshape(rt.matmul(rt.reshape(dim_probs, (1, -1)), rt.as_tensor(M)),
                      (width,))


# ---------------------------------------------------------------------------
# Polymorphic helpers over float / ndarray / Tensor
# ---------------------------------------------------------------------------

def _is_t(x) -> bool:
    return isinstance(x, Tensor)


def _scale(t: Tensor, w) -> Tensor:
    """t * w where w is a float (1.0 elided) or a scalar-ish Tensor."""
    if _is_t(w):
        return rt.mul(t, w)
    if w == 1.0:
        return t
    return rt.scale(t, float(w))


def _m_mul(a, b):
    if _is_t(a) or _is_t(b):
        return rt.mul(rt.as_tensor(a), rt.as_tensor(b))
    return np.asarray(a) * b if isinstance(a, np.ndarray) or \
        isinstance(b, np.ndarray) else a * b


def _m_one_minus(x):
    if _is_t(x):
        return rt.affine_const(x, -1.0, 1.0)
    return 1.0 - x


def _m_or(items):
    """Smooth OR: 1 - prod(1 - x); exact on hard 0/1 inputs."""
    acc = None
    for x in items:
        inv = _m_one_minus(x)
        acc = inv if acc is None else _m_mul(acc, inv)
    return _m_one_minus(acc)


def _m_pad(x, width: int):
    """Right-pad a length-w vector (float scalars mean a full-ones vector)."""
    if isinstance(x, (int, float)):
        raise TypeError("pad needs a vector")
    if _is_t(x):
        w = x.data.shape[0]
        if w == width:
            return x
        return rt.reshape(rt.padded_accumulate(
            [rt.reshape(x, (1, w))], [np.arange(w)], width), (width,))
    x = np.asarray(x, dtype=np.float64)
    return x if len(x) == width else np.pad(x, (0, width - len(x)))


def _m_max(x):
    if _is_t(x):
        return rt.vmax(x)
    return float(np.max(x))


def _m_concat(items):
    if any(_is_t(x) for x in items):
        ts = [x if _is_t(x) else rt.as_tensor(np.atleast_1d(x)) for x in items]
        ts = [t if t.data.ndim == 1 else rt.reshape(t, (-1,)) for t in ts]
        ts = [rt.reshape(t, (1, -1)) for t in ts]
        total = sum(t.data.shape[1] for t in ts)
        return rt.reshape(rt.concat(ts, axis=1), (total,))
    return np.concatenate([np.atleast_1d(np.asarray(x, float)) for x in items])


def _m_kron_rows(a3, D: int):
    """Repeat each row activity D times (flat frame of a 3D part)."""
    if _is_t(a3):
        r = a3.data.shape[0]
        return rt.reshape(rt.mul(rt.reshape(a3, (r, 1)),
                                 rt.as_tensor(np.ones((1, D)))), (r * D,))
    return np.repeat(np.asarray(a3, float), D)


def _m_vec(x, width: int):
    """Materialize an activity as a vector (None means all ones)."""
    if x is None:
        return np.ones(width)
    return x


def _ln(x, gain, bias, act, mask, eps):
    """Dispatch masked layer norm: fused for constant masks, composite for
    Tensor masks (gradients flow into the mask)."""
    if mask is None or isinstance(mask, np.ndarray):
        return rt.layer_norm_act(x, gain, bias, act, eps=eps, mask=mask)
    neff = rt.sum_all(mask)
    mu = rt.div(rt.sum_last(rt.mul(x, mask)), neff)
    xc = rt.sub(x, mu)
    var = rt.div(rt.sum_last(rt.mul(rt.mul(xc, xc), mask)), neff)
    inv = rt.div(rt.as_tensor(1.0), rt.sqrt(rt.add(var, rt.as_tensor(eps))))
    xhat = rt.mul(xc, inv)
    y0 = rt.add(rt.mul(xhat, gain), bias)
    if act == "relu":
        y1 = rt.relu(y0)
    elif act == "sigmoid":
        y1 = rt.sigmoid(y0)
    else:
        y1 = y0
    return rt.mul(y1, mask)


def _mask_mul(t, mask):
    if mask is None:
        return t
    return rt.mul(t, rt.as_tensor(mask) if not _is_t(mask) else mask)


def _rows_mul(t3, mask):
    """Scale the middle-axis rows of (B,R,D) by a length-R mask."""
    if mask is None:
        return t3
    m = mask if _is_t(mask) else rt.as_tensor(np.asarray(mask, float))
    return rt.mul(t3, rt.reshape(m, (-1, 1)))


def _outer(a, b):
    """Outer product of two activity vectors."""
    if _is_t(a) or _is_t(b):
        at = a if _is_t(a) else rt.as_tensor(np.asarray(a, float))
        bt = b if _is_t(b) else rt.as_tensor(np.asarray(b, float))
        na, nb = at.data.shape[0], bt.data.shape[0]
        return rt.reshape(rt.mul(rt.reshape(at, (na, 1)),
                                 rt.reshape(bt, (1, nb))), (na * nb,))
    return np.outer(np.asarray(a, float), np.asarray(b, float)).ravel()


def _is_zero(w) -> bool:
    return isinstance(w, (int, float)) and w == 0.0


# ---------------------------------------------------------------------------
# Static forward
# ---------------------------------------------------------------------------

def forward_static(spec: SupernetSpec, store: dict, dense, emb,
                   soft: list[SoftChoice] | None = None,
                   eps_ln: float = 1e-5, activations=None) -> Tensor:
    """Static-frame forward pass; `soft=None` runs the all-enabled supernet."""
    acts = activations or DEFAULT_ACTIVATIONS
    layouts = compute_layouts(spec)
    D = spec.embed_dim
    if soft is None:
        soft = all_ones_soft(spec)
    dense_t = rt.as_tensor(np.asarray(dense, dtype=np.float64))
    emb_t = rt.as_tensor(np.asarray(emb, dtype=np.float64))
    B = dense_t.data.shape[0]

    t2 = {SRC_DENSE: dense_t, SRC_EMB: None}
    t3 = {SRC_DENSE: None, SRC_EMB: emb_t}
    a2 = {SRC_DENSE: None, SRC_EMB: None}
    a3 = {SRC_DENSE: None, SRC_EMB: None}
    flat_memo, aflat_memo, proj_memo, inter_memo = {}, {}, {}, {}

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

    def aflat(s):
        if s not in aflat_memo:
            lay = layouts[s]
            if a2[s] is None and a3[s] is None:
                aflat_memo[s] = None
            else:
                parts = []
                if lay.width2:
                    parts.append(_m_vec(a2[s], lay.width2))
                if lay.rows3:
                    parts.append(_m_kron_rows(_m_vec(a3[s], lay.rows3), D))
                aflat_memo[s] = _m_concat(parts)
        return aflat_memo[s]

    for cs in spec.choices:
        c = cs.index
        sc = soft[c]
        W2c = layouts[NUM_RAW + c].width2
        pieces, piece_pos, piece_masks = [], [], []
        out3 = None
        out3_act = None
        x_flat = None
        x3 = None
        arow = None

        def build_flat():
            segs = []
            for p, s in enumerate(cs.predecessors):
                w = sc.conn_w[p]
                if t2[s] is not None:
                    segs.append(_scale(t2[s], w))
                if t3[s] is not None:
                    r = t3[s].data.shape[1]
                    segs.append(_scale(rt.reshape(t3[s], (B, r * D)), w))
            return rt.concat(segs, axis=1) if len(segs) > 1 else segs[0]

        def build_x3():
            parts, acts_row = [], []
            hard_ones = True
            for tag, p, s, start, n in concat3_rows(layouts, cs):
                w = sc.conn_w[p]
                if tag == "2d":
                    A = store[f"choice.{c}.adapt3d.{s}.weight"]
                    parts.append(rt.reshape(rt.matmul(_scale(t2[s], w), A),
                                            (B, 1, D)))
                    pres = 1.0 if a2[s] is None else _m_max(a2[s])
                    acts_row.append(_m_mul(w, pres))
                else:
                    parts.append(_scale(t3[s], w))
                    acts_row.append(_m_mul(w, _m_vec(a3[s], n)))
                if _is_t(acts_row[-1]) or np.any(np.asarray(acts_row[-1]) != 1.0):
                    hard_ones = False
            x = rt.concat(parts, axis=1) if len(parts) > 1 else parts[0]
            return x, (None if hard_ones else _m_concat(acts_row))

        for b_idx, kind in enumerate(cs.blocks):
            bw = sc.block_w[b_idx]
            if _is_zero(bw):
                continue
            if kind is BlockKind.LINEAR:
                if x_flat is None:
                    x_flat = build_flat()
                y = rt.matmul(x_flat, store[f"choice.{c}.linear.weight"],
                              store[f"choice.{c}.linear.bias"])
                y = _mask_mul(y, sc.dim_mask)
                y = _ln(y, store[f"choice.{c}.linear.ln_gain"],
                        store[f"choice.{c}.linear.ln_bias"],
                        acts[kind], sc.dim_mask, eps_ln)
                pieces.append(_scale(y, bw))
                piece_pos.append(np.arange(cs.max_dim))
                piece_masks.append((bw, sc.dim_mask, cs.max_dim))
            elif kind is BlockKind.EMBED_FC:
                if x3 is None:
                    x3, arow = build_x3()
                comp = rt.embed_project(store[f"choice.{c}.embedfc.weight"], x3)
                o = _ln(comp, store[f"choice.{c}.embedfc.ln_gain"],
                        store[f"choice.{c}.embedfc.ln_bias"],
                        acts[kind], None, eps_ln)
                o = _rows_mul(o, sc.dim_mask)
                out3 = _scale(o, bw)
                out3_act = _m_mul(bw, _m_vec(sc.dim_mask, cs.max_dim)) \
                    if sc.dim_mask is not None or _is_t(bw) or bw != 1.0 else None
            elif kind is BlockKind.COMPRESSED_DOT:
                if x3 is None:
                    x3, arow = build_x3()
                comp = rt.embed_project(store[f"choice.{c}.cdot.weight"], x3)
                comp = _rows_mul(comp, sc.dim_mask)
                n3 = x3.data.shape[1]
                y = rt.reshape(rt.bmm(x3, rt.transpose23(comp)),
                               (B, n3 * cs.max_dim))
                if arow is None and sc.dim_mask is None:
                    lmask = None
                else:
                    lmask = _outer(_m_vec(arow, n3),
                                   _m_vec(sc.dim_mask, cs.max_dim))
                y = _ln(y, store[f"choice.{c}.cdot.ln_gain"],
                        store[f"choice.{c}.cdot.ln_bias"],
                        acts[kind], lmask, eps_ln)
                pieces.append(_scale(y, bw))
                piece_pos.append(np.arange(n3 * cs.max_dim))
                piece_masks.append((bw, lmask, n3 * cs.max_dim))
            elif kind in PAIRWISE_KINDS:
                wpair = block_static_width(spec, layouts, cs, kind)
                terms, tpos, tmask = [], [], []
                for i, si in enumerate(cs.predecessors):
                    for j, sj in enumerate(cs.predecessors):
                        w = _m_mul(sc.left_w[i], sc.right_w[j])
                        if _is_zero(w):
                            continue
                        pkey = (si, sj)
                        if pkey not in proj_memo:
                            h = rt.matmul(flat(si),
                                          store[f"pair.{si}.{sj}.fc1.weight"],
                                          store[f"pair.{si}.{sj}.fc1.bias"])
                            proj_memo[pkey] = rt.matmul(
                                h, store[f"pair.{si}.{sj}.fc2.weight"],
                                store[f"pair.{si}.{sj}.fc2.bias"])
                        ikey = (kind, si, sj)
                        if ikey not in inter_memo:
                            if kind is BlockKind.PAIRWISE_GATING:
                                inter_memo[ikey] = rt.mul(
                                    rt.sigmoid(proj_memo[pkey]), flat(sj))
                            else:
                                inter_memo[ikey] = rt.add(proj_memo[pkey], flat(sj))
                        fj = layouts[sj].flat_width(D)
                        terms.append(_scale(inter_memo[ikey], w))
                        tpos.append(np.arange(fj))
                        aj = aflat(sj)
                        if aj is None and not _is_t(w) and w == 1.0 \
                                and fj == wpair:
                            tmask.append(None)  # covers the whole frame
                        else:
                            tmask.append(_m_mul(
                                w, _m_pad(_m_vec(aj, fj), wpair)))
                y = _static_accumulate(terms, tpos, wpair)
                # a None term mask means hard ones over the whole frame
                lmask = None if any(m is None for m in tmask) else _m_or(tmask)
                y = _ln(y, store[f"choice.{c}.{kind.value}.ln_gain"],
                        store[f"choice.{c}.{kind.value}.ln_bias"],
                        acts[kind], lmask, eps_ln)
                pieces.append(_scale(y, bw))
                piece_pos.append(np.arange(wpair))
                piece_masks.append((bw, lmask, wpair))

        src_id = NUM_RAW + c
        t2[src_id] = _static_accumulate(pieces, piece_pos, W2c) if pieces else None
        t3[src_id] = out3
        a3[src_id] = out3_act
        if not pieces:
            a2[src_id] = None
        else:
            items = []
            plain_full = False
            for bw, m, w in piece_masks:
                if m is None and not _is_t(bw) and bw == 1.0 and w == W2c:
                    plain_full = True
                    break
                items.append(_m_mul(bw, _m_pad(_m_vec(m, w), W2c)))
            a2[src_id] = None if plain_full else _m_or(items)

    last = NUM_RAW + spec.n_choices - 1
    return rt.matmul(flat(last), store["head.weight"], store["head.bias"])


def _static_accumulate(pieces, positions, width: int):
    """Aggregate block/pair outputs in the static frame; a lone full-width
    piece passes through so the all-ones path matches compact execution."""
    if len(pieces) == 1 and pieces[0].data.shape[1] == width:
        return pieces[0]
    return rt.padded_accumulate(pieces, positions, width)
