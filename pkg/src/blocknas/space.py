"""
Search-space description and subnet genomes.

A supernet is a DAG of choice modules over two raw inputs (a dense 2D
feature vector, source 0, and a 3D embedding stack, source 1). Choice k is
source id NUM_RAW + k; a choice may only consume sources with smaller ids.
A genome fixes, per choice: the active block set (one block for sampled
genomes, several for merged/all-ones genomes), a multi-hot connection mask
over the allowed predecessors, the (left, right) pairs used by pairwise
blocks, and one dimension option.

Wire formats are versioned JSON; see README for the exact schema.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace

import numpy as np

NUM_RAW = 2
SRC_DENSE = 0
SRC_EMB = 1

GROWTH_DISTANCES = (1, 2, 3, 6, 9)
GROWTH_DIM_MULTIPLIERS = tuple(0.5 + 0.125 * k for k in range(7))

GENOME_FORMAT = "blocknas-genome"
SPEC_FORMAT = "blocknas-spec"
WIRE_VERSION = 1


class SpecError(ValueError):
    """A supernet spec violates its invariants."""


class GenomeError(ValueError):
    """A genome does not fit its supernet spec."""


class BlockKind(enum.Enum):
    LINEAR = "linear"
    EMBED_FC = "embedfc"
    COMPRESSED_DOT = "compressed_dot"
    PAIRWISE_GATING = "pairwise_gating"
    PAIRWISE_SUM = "pairwise_sum"


BLOCK_ORDER = tuple(BlockKind)
PAIRWISE_KINDS = (BlockKind.PAIRWISE_GATING, BlockKind.PAIRWISE_SUM)
DIMMED_KINDS = (BlockKind.LINEAR, BlockKind.EMBED_FC, BlockKind.COMPRESSED_DOT)
MASKED_CONN_KINDS = DIMMED_KINDS  # blocks whose inputs come from the multi-hot mask

MODES = ("full", "dims_only", "blocks_only")

# default activation per block output (the search does not search activations)
DEFAULT_ACTIVATIONS = {
    BlockKind.LINEAR: "relu",
    BlockKind.EMBED_FC: "relu",
    BlockKind.COMPRESSED_DOT: "identity",
    BlockKind.PAIRWISE_GATING: "relu",
    BlockKind.PAIRWISE_SUM: "relu",
}


@dataclass(frozen=True)
class ChoiceSpec:
    """One searchable layer slot."""
    index: int
    blocks: tuple[BlockKind, ...]
    predecessors: tuple[int, ...]          # global source ids, ascending
    dim_options: tuple[int, ...]           # strictly increasing
    base_block: int = 0                    # frozen/seed values used by restricted modes
    base_conn: tuple[int, ...] = ()
    base_left: int = 0
    base_right: int = 0
    base_dim: int = -1                     # -1 means "largest option"

    def __post_init__(self):
        if not self.blocks:
            raise SpecError(f"choice {self.index} has no blocks")
        if len(set(self.blocks)) != len(self.blocks):
            raise SpecError(f"choice {self.index} repeats a block kind")
        if not self.predecessors:
            raise SpecError(f"choice {self.index} has no predecessors")
        if list(self.predecessors) != sorted(set(self.predecessors)):
            raise SpecError(f"choice {self.index} predecessors not sorted/unique")
        if any(d <= 0 for d in self.dim_options):
            raise SpecError(f"choice {self.index} has a non-positive dim option")
        if list(self.dim_options) != sorted(set(self.dim_options)):
            raise SpecError(f"choice {self.index} dim options not strictly increasing")
        if not self.base_conn:
            object.__setattr__(self, "base_conn", tuple([1] * len(self.predecessors)))
        if len(self.base_conn) != len(self.predecessors):
            raise SpecError(f"choice {self.index} base_conn length mismatch")
        if self.base_dim == -1:
            object.__setattr__(self, "base_dim", len(self.dim_options) - 1)

    @property
    def max_dim(self) -> int:
        return self.dim_options[-1]

    @property
    def n_preds(self) -> int:
        return len(self.predecessors)

    def has_any(self, kinds) -> bool:
        return any(b in self.blocks for b in kinds)


@dataclass(frozen=True)
class SupernetSpec:
    """Declarative search-space description."""
    dense_width: int
    n_embeddings: int
    embed_dim: int
    choices: tuple[ChoiceSpec, ...]
    bottleneck_dim: int = 16
    mode: str = "full"

    def __post_init__(self):
        if self.dense_width < 1 or self.n_embeddings < 1 or self.embed_dim < 1:
            raise SpecError("raw input shapes must be positive")
        if self.mode not in MODES:
            raise SpecError(f"unknown mode {self.mode!r}")
        if not self.choices:
            raise SpecError("spec needs at least one choice")
        for i, c in enumerate(self.choices):
            if c.index != i:
                raise SpecError(f"choice at position {i} has index {c.index}")
            for p in c.predecessors:
                if p >= NUM_RAW + i:
                    raise SpecError(f"choice {i} consumes non-earlier source {p}")

    @property
    def n_choices(self) -> int:
        return len(self.choices)

    @property
    def n_sources(self) -> int:
        return NUM_RAW + len(self.choices)

    def with_mode(self, mode: str) -> "SupernetSpec":
        return replace(self, mode=mode)


@dataclass(frozen=True)
class GenomeChoice:
    """Per-choice decisions. `blocks` and `pairs` may hold several entries
    only for the all-ones genome and merged genomes."""
    blocks: tuple[int, ...]
    conn: tuple[int, ...]
    pairs: tuple[tuple[int, int], ...]
    dim: int

    @property
    def block_id(self) -> int:
        if len(self.blocks) != 1:
            raise GenomeError("block_id is only defined for single-block choices")
        return self.blocks[0]

    @property
    def left_idx(self) -> int:
        return self.pairs[0][0]

    @property
    def right_idx(self) -> int:
        return self.pairs[0][1]


@dataclass(frozen=True)
class SubnetGenome:
    choices: tuple[GenomeChoice, ...]

    def canonical_json(self) -> str:
        return json.dumps(genome_to_wire(self), sort_keys=True, separators=(",", ":"))


def dimension_mask(dim: int, width: int) -> np.ndarray:
    """Leading-ones mask: `dim` ones followed by zeros, length `width`."""
    if not 0 < dim <= width:
        raise GenomeError(f"dimension {dim} out of range for width {width}")
    m = np.zeros(width)
    m[:dim] = 1.0
    return m


# ---------------------------------------------------------------------------
# Validation and canonical genomes
# ---------------------------------------------------------------------------

def validate_genome(spec: SupernetSpec, genome: SubnetGenome) -> None:
    """Raise GenomeError unless `genome` fits `spec`."""
    if len(genome.choices) != spec.n_choices:
        raise GenomeError(f"genome has {len(genome.choices)} choices, "
                          f"spec has {spec.n_choices}")
    for cs, gc in zip(spec.choices, genome.choices):
        if not gc.blocks:
            raise GenomeError(f"choice {cs.index}: no active block")
        if list(gc.blocks) != sorted(set(gc.blocks)):
            raise GenomeError(f"choice {cs.index}: blocks not sorted/unique")
        if gc.blocks[0] < 0 or gc.blocks[-1] >= len(cs.blocks):
            raise GenomeError(f"choice {cs.index}: block id out of range")
        if len(gc.conn) != cs.n_preds:
            raise GenomeError(f"choice {cs.index}: conn mask length "
                              f"{len(gc.conn)} != {cs.n_preds}")
        if any(b not in (0, 1) for b in gc.conn):
            raise GenomeError(f"choice {cs.index}: conn mask not binary")
        kinds = [cs.blocks[b] for b in gc.blocks]
        if any(k in MASKED_CONN_KINDS for k in kinds) and not any(gc.conn):
            raise GenomeError(f"choice {cs.index}: empty connection mask")
        if any(k in PAIRWISE_KINDS for k in kinds):
            if not gc.pairs:
                raise GenomeError(f"choice {cs.index}: pairwise block without a pair")
        for (l, r) in gc.pairs:
            if not (0 <= l < cs.n_preds and 0 <= r < cs.n_preds):
                raise GenomeError(f"choice {cs.index}: pair ({l},{r}) out of range")
        if not 0 <= gc.dim < len(cs.dim_options):
            raise GenomeError(f"choice {cs.index}: dim index {gc.dim} out of range")


def all_ones_genome(spec: SupernetSpec) -> SubnetGenome:
    """The all-enabled genome: every mask set to ones, i.e. every block and
    connection active, every pairwise pair enabled, largest dimensions."""
    gcs = []
    for cs in spec.choices:
        pairs = tuple((l, r) for l in range(cs.n_preds) for r in range(cs.n_preds)) \
            if cs.has_any(PAIRWISE_KINDS) else ()
        gcs.append(GenomeChoice(
            blocks=tuple(range(len(cs.blocks))),
            conn=tuple([1] * cs.n_preds),
            pairs=pairs,
            dim=len(cs.dim_options) - 1,
        ))
    return SubnetGenome(tuple(gcs))


def base_genome(spec: SupernetSpec) -> SubnetGenome:
    """The frozen seed configuration carried by the spec."""
    gcs = []
    for cs in spec.choices:
        pairs = ((cs.base_left, cs.base_right),) \
            if cs.blocks[cs.base_block] in PAIRWISE_KINDS else ()
        gcs.append(GenomeChoice(
            blocks=(cs.base_block,),
            conn=tuple(cs.base_conn),
            pairs=pairs,
            dim=cs.base_dim,
        ))
    return SubnetGenome(tuple(gcs))


# ---------------------------------------------------------------------------
# Free decisions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Decision:
    """One independent categorical decision of the search."""
    choice: int
    kind: str        # block | conn | left | right | dim
    arg: int         # predecessor position for conn, else 0
    n_options: int

    @property
    def name(self) -> str:
        suffix = f".{self.arg}" if self.kind == "conn" else ""
        return f"c{self.choice}.{self.kind}{suffix}"


def free_decisions(spec: SupernetSpec) -> list[Decision]:
    """Enumerate the decisions left free by the spec's search mode."""
    out = []
    for cs in spec.choices:
        search_blocks = spec.mode in ("full", "blocks_only") and len(cs.blocks) > 1
        search_conns = spec.mode == "full"
        search_dims = (spec.mode in ("full", "dims_only")
                       and len(cs.dim_options) > 1 and cs.has_any(DIMMED_KINDS))
        if search_blocks:
            out.append(Decision(cs.index, "block", 0, len(cs.blocks)))
        if search_conns:
            if cs.has_any(MASKED_CONN_KINDS):
                for p in range(cs.n_preds):
                    out.append(Decision(cs.index, "conn", p, 2))
            if cs.has_any(PAIRWISE_KINDS):
                out.append(Decision(cs.index, "left", 0, cs.n_preds))
                out.append(Decision(cs.index, "right", 0, cs.n_preds))
        if search_dims:
            out.append(Decision(cs.index, "dim", 0, len(cs.dim_options)))
    return out


def assemble_genome(spec: SupernetSpec, options: dict) -> SubnetGenome:
    """Build a genome from {Decision -> chosen option}, filling frozen fields
    from the spec's base configuration. An all-off connection draw for a
    choice whose selected block needs inputs is repaired by enabling the
    nearest predecessor."""
    by_choice: dict[int, dict] = {}
    for d, v in options.items():
        by_choice.setdefault(d.choice, {})[(d.kind, d.arg)] = v
    gcs = []
    for cs in spec.choices:
        got = by_choice.get(cs.index, {})
        block = got.get(("block", 0), cs.base_block)
        dim = got.get(("dim", 0), cs.base_dim)
        if spec.mode == "full":
            conn = [got.get(("conn", p), cs.base_conn[p]) for p in range(cs.n_preds)]
            left = got.get(("left", 0), cs.base_left)
            right = got.get(("right", 0), cs.base_right)
        else:
            conn = list(cs.base_conn)
            left, right = cs.base_left, cs.base_right
        kind = cs.blocks[block]
        if kind in MASKED_CONN_KINDS and not any(conn):
            conn[-1] = 1
        if kind not in DIMMED_KINDS:
            dim = cs.base_dim
        pairs = ((left, right),) if kind in PAIRWISE_KINDS else ()
        gcs.append(GenomeChoice((block,), tuple(conn), pairs, dim))
    g = SubnetGenome(tuple(gcs))
    validate_genome(spec, g)
    return g


# ---------------------------------------------------------------------------
# Random sampling
# ---------------------------------------------------------------------------

def sample_random_genome(spec: SupernetSpec, rng: np.random.Generator,
                         connection_on_prob: float = 0.8) -> SubnetGenome:
    """Uniform block/dim/pair sampling with Bernoulli connection bits.

    Connection masks are resampled until at least one bit is set, which
    keeps the Bernoulli marginal approximately (small documented bias).
    Fields frozen by the spec's mode come from the base configuration.
    """
    if not 0.0 < connection_on_prob <= 1.0:
        raise ValueError("connection_on_prob must be in (0, 1]")
    gcs = []
    for cs in spec.choices:
        if spec.mode in ("full", "blocks_only"):
            block = int(rng.integers(len(cs.blocks)))
        else:
            block = cs.base_block
        kind = cs.blocks[block]
        if spec.mode == "full":
            if kind in MASKED_CONN_KINDS:
                while True:
                    conn = (rng.random(cs.n_preds) < connection_on_prob).astype(int)
                    if conn.any():
                        break
                conn = tuple(int(b) for b in conn)
            else:
                conn = tuple(cs.base_conn)
            left = int(rng.integers(cs.n_preds))
            right = int(rng.integers(cs.n_preds))
        else:
            conn = tuple(cs.base_conn)
            left, right = cs.base_left, cs.base_right
        if spec.mode in ("full", "dims_only") and kind in DIMMED_KINDS:
            dim = int(rng.integers(len(cs.dim_options)))
        else:
            dim = cs.base_dim
        pairs = ((left, right),) if kind in PAIRWISE_KINDS else ()
        gcs.append(GenomeChoice((block,), conn, pairs, dim))
    g = SubnetGenome(tuple(gcs))
    validate_genome(spec, g)
    return g


# ---------------------------------------------------------------------------
# Search-space size
# ---------------------------------------------------------------------------

def search_space_size(spec: SupernetSpec) -> int:
    """Exact number of distinct genomes, as a big integer.

    Per choice the count is summed over selectable blocks, since the
    connection decision structure depends on the block kind: a multi-hot
    mask contributes 2^P - 1 valid patterns, a pairwise pair P^2, and a
    dimension decision applies only to blocks with an internal projection.
    Frozen fields contribute a factor of 1.
    """
    total = 1
    for cs in spec.choices:
        P = cs.n_preds
        n_dims = len(cs.dim_options)
        if spec.mode == "dims_only":
            kind = cs.blocks[cs.base_block]
            total *= n_dims if kind in DIMMED_KINDS else 1
            continue
        if spec.mode == "blocks_only":
            total *= len(cs.blocks)
            continue
        per_choice = 0
        for kind in cs.blocks:
            conn_patterns = P * P if kind in PAIRWISE_KINDS else (2 ** P - 1)
            dims = n_dims if kind in DIMMED_KINDS else 1
            per_choice += conn_patterns * dims
        total *= per_choice
    return total


# ---------------------------------------------------------------------------
# Supernet growth
# ---------------------------------------------------------------------------

def grow_supernet(seed: SupernetSpec, rng: np.random.Generator) -> SupernetSpec:
    """Grow a searchable supernet from a single-block-per-choice seed.

    Applies, in order: a DAG-order-preserving random permutation of the
    choice list; duplicate-and-insert-after for choices holding EmbedFC or
    compressed dot product; block completion within each choice; rewiring to
    predecessors at list distances {1, 2, 3, 6, 9} (raw inputs occupy the
    first two list positions); dimension options at 7 multipliers uniformly
    spaced over [0.5x, 1.25x] of the seed dimension, truncated to integers.
    """
    for cs in seed.choices:
        if len(cs.blocks) != 1:
            raise SpecError("grow_supernet needs a single-block-per-choice seed")

    # step 1: random topological permutation (Kahn with random tie-breaking)
    n = seed.n_choices
    preds_of = {i: [p - NUM_RAW for p in seed.choices[i].predecessors if p >= NUM_RAW]
                for i in range(n)}
    indeg = {i: len(preds_of[i]) for i in range(n)}
    succs = {i: [] for i in range(n)}
    for i, ps in preds_of.items():
        for p in ps:
            succs[p].append(i)
    ready = sorted(i for i in range(n) if indeg[i] == 0)
    order = []
    while ready:
        pick = int(rng.integers(len(ready)))
        node = ready.pop(pick)
        order.append(node)
        for s in succs[node]:
            indeg[s] -= 1
            if indeg[s] == 0:
                ready.append(s)
        ready.sort()
    if len(order) != n:
        raise SpecError("seed choice graph has a cycle")

    # carry (seed block, seed pred sources in new numbering, seed dim)
    new_pos = {old: new for new, old in enumerate(order)}

    def remap(src: int) -> int:
        return src if src < NUM_RAW else NUM_RAW + new_pos[src - NUM_RAW]

    nodes = []
    for old in order:
        cs = seed.choices[old]
        nodes.append({
            "block": cs.blocks[0],
            "seed_preds": sorted(remap(p) for p in cs.predecessors),
            "seed_dim": cs.dim_options[cs.base_dim],
        })

    # step 2: duplicate choices holding EmbedFC or compressed dot product;
    # insertion shifts later positions, so remap the carried seed preds
    grown = []
    old_to_grown = {}
    for oi, node in enumerate(nodes):
        old_to_grown[oi] = len(grown)
        grown.append(node)
        if node["block"] in (BlockKind.EMBED_FC, BlockKind.COMPRESSED_DOT):
            grown.append(dict(node))

    def remap2(src: int) -> int:
        return src if src < NUM_RAW else NUM_RAW + old_to_grown[src - NUM_RAW]

    for node in grown:
        node["seed_preds"] = sorted(remap2(p) for p in node["seed_preds"])

    # steps 3-5: completion, distance wiring, dimension options
    choices = []
    for i, node in enumerate(grown):
        kinds = {node["block"]}
        if kinds & {BlockKind.EMBED_FC, BlockKind.COMPRESSED_DOT}:
            kinds |= {BlockKind.EMBED_FC, BlockKind.COMPRESSED_DOT}
        if kinds & {BlockKind.LINEAR, BlockKind.PAIRWISE_GATING, BlockKind.PAIRWISE_SUM}:
            kinds |= {BlockKind.LINEAR, BlockKind.PAIRWISE_GATING, BlockKind.PAIRWISE_SUM}
        blocks = tuple(b for b in BLOCK_ORDER if b in kinds)

        q = NUM_RAW + i  # position in the extended list (raw inputs first)
        preds = tuple(sorted(q - d for d in GROWTH_DISTANCES if q - d >= 0))

        seed_dim = node["seed_dim"]
        opts = []
        for m in GROWTH_DIM_MULTIPLIERS:
            v = max(1, int(seed_dim * m))
            if v not in opts:
                opts.append(v)
        dim_options = tuple(opts)

        conn = [1 if p in node["seed_preds"] else 0 for p in preds]
        if not any(conn):
            conn[-1] = 1
        base_left = base_right = len(preds) - 1
        if node["block"] in PAIRWISE_KINDS:
            present = [k for k, p in enumerate(preds) if p in node["seed_preds"]]
            if present:
                base_left = base_right = present[0]
        base_dim = dim_options.index(seed_dim) if seed_dim in dim_options \
            else len(dim_options) - 1
        choices.append(ChoiceSpec(
            index=i,
            blocks=blocks,
            predecessors=preds,
            dim_options=dim_options,
            base_block=blocks.index(node["block"]),
            base_conn=tuple(conn),
            base_left=base_left,
            base_right=base_right,
            base_dim=base_dim,
        ))

    return SupernetSpec(
        dense_width=seed.dense_width,
        n_embeddings=seed.n_embeddings,
        embed_dim=seed.embed_dim,
        choices=tuple(choices),
        bottleneck_dim=seed.bottleneck_dim,
        mode=seed.mode,
    )


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def chain_spec(dense_width: int, n_embeddings: int, embed_dim: int,
               blocks, dims, bottleneck_dim: int = 16,
               mode: str = "full") -> SupernetSpec:
    """A production-like chain: choice 0 consumes the raw inputs, choice i
    consumes choice i-1 plus the raw embeddings, one block per choice."""
    if len(blocks) != len(dims):
        raise SpecError("blocks and dims must align")
    choices = []
    for i, (kind, dim) in enumerate(zip(blocks, dims)):
        kind = BlockKind(kind) if not isinstance(kind, BlockKind) else kind
        preds = (SRC_DENSE, SRC_EMB) if i == 0 else (SRC_EMB, NUM_RAW + i - 1)
        choices.append(ChoiceSpec(
            index=i, blocks=(kind,), predecessors=preds,
            dim_options=(int(dim),),
            base_left=len(preds) - 1, base_right=len(preds) - 1))
    return SupernetSpec(dense_width, n_embeddings, embed_dim, tuple(choices),
                        bottleneck_dim=bottleneck_dim, mode=mode)


def dims_only_spec(n_choices: int, dim_options, dense_width: int = 4,
                   n_embeddings: int = 2, embed_dim: int = 4,
                   block: str = "linear") -> SupernetSpec:
    """A dimension-search-only chain (e.g. 28 decisions x 9 options)."""
    kind = BlockKind(block)
    choices = []
    for i in range(n_choices):
        preds = (SRC_DENSE, SRC_EMB) if i == 0 else (NUM_RAW + i - 1,)
        choices.append(ChoiceSpec(
            index=i, blocks=(kind,), predecessors=preds,
            dim_options=tuple(int(d) for d in dim_options)))
    return SupernetSpec(dense_width, n_embeddings, embed_dim, tuple(choices),
                        mode="dims_only")


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def genome_to_wire(genome: SubnetGenome) -> dict:
    return {
        "format": GENOME_FORMAT,
        "version": WIRE_VERSION,
        "choices": [
            {"blocks": list(gc.blocks), "conn": list(gc.conn),
             "pairs": [list(p) for p in gc.pairs], "dim": gc.dim}
            for gc in genome.choices
        ],
    }


def genome_from_wire(doc: dict) -> SubnetGenome:
    if doc.get("format") != GENOME_FORMAT:
        raise GenomeError(f"not a genome document: {doc.get('format')!r}")
    if doc.get("version") != WIRE_VERSION:
        raise GenomeError(f"unsupported genome version {doc.get('version')!r}")
    gcs = []
    for c in doc["choices"]:
        gcs.append(GenomeChoice(
            blocks=tuple(int(b) for b in c["blocks"]),
            conn=tuple(int(b) for b in c["conn"]),
            pairs=tuple((int(l), int(r)) for l, r in c["pairs"]),
            dim=int(c["dim"]),
        ))
    return SubnetGenome(tuple(gcs))


def spec_to_wire(spec: SupernetSpec) -> dict:
    return {
        "format": SPEC_FORMAT,
        "version": WIRE_VERSION,
        "dense_width": spec.dense_width,
        "n_embeddings": spec.n_embeddings,
        "embed_dim": spec.embed_dim,
        "bottleneck_dim": spec.bottleneck_dim,
        "mode": spec.mode,
        "choices": [
            {
                "index": c.index,
                "blocks": [b.value for b in c.blocks],
                "predecessors": list(c.predecessors),
                "dim_options": list(c.dim_options),
                "base_block": c.base_block,
                "base_conn": list(c.base_conn),
                "base_left": c.base_left,
                "base_right": c.base_right,
                "base_dim": c.base_dim,
            }
            for c in spec.choices
        ],
    }


def spec_from_wire(doc: dict) -> SupernetSpec:
    if doc.get("format") != SPEC_FORMAT:
        raise SpecError(f"not a spec document: {doc.get('format')!r}")
    if doc.get("version") != WIRE_VERSION:
        raise SpecError(f"unsupported spec version {doc.get('version')!r}")
    choices = tuple(
        ChoiceSpec(
            index=int(c["index"]),
            blocks=tuple(BlockKind(b) for b in c["blocks"]),
            predecessors=tuple(int(p) for p in c["predecessors"]),
            dim_options=tuple(int(d) for d in c["dim_options"]),
            base_block=int(c["base_block"]),
            base_conn=tuple(int(b) for b in c["base_conn"]),
            base_left=int(c["base_left"]),
            base_right=int(c["base_right"]),
            base_dim=int(c["base_dim"]),
        )
        for c in doc["choices"]
    )
    return SupernetSpec(
        dense_width=int(doc["dense_width"]),
        n_embeddings=int(doc["n_embeddings"]),
        embed_dim=int(doc["embed_dim"]),
        choices=choices,
        bottleneck_dim=int(doc["bottleneck_dim"]),
        mode=doc["mode"],
    )


def save_genome(genome: SubnetGenome, path) -> None:
    with open(path, "w") as f:
        json.dump(genome_to_wire(genome), f, indent=2, sort_keys=True)
        f.write("\n")


def load_genome(path) -> SubnetGenome:
    with open(path) as f:
        return genome_from_wire(json.load(f))


def save_spec(spec: SupernetSpec, path) -> None:
    with open(path, "w") as f:
        json.dump(spec_to_wire(spec), f, indent=2, sort_keys=True)
        f.write("\n")


def load_spec(path) -> SupernetSpec:
    with open(path) as f:
        return spec_from_wire(json.load(f))
