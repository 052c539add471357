"""
Post-search genome transforms: naive dimension scaling and model merging.

Merging unions block sets, connection masks and pairwise pairs, and takes
the maximal dimension per choice; merged pairwise blocks therefore hold
several (left, right) pairs and sum their interactions, which the realize
path supports directly.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from .space import (
    BlockKind, DIMMED_KINDS, GenomeChoice, SubnetGenome, SupernetSpec,
    validate_genome,
)

SCALE_RULES = ("embedfc_3x", "mixed_1p5x_2x")


def naive_scale(genome: SubnetGenome, spec: SupernetSpec, rule: str):
    """Scale block dimensions per rule; returns (genome', spec').

    embedfc_3x triples the dimension of choices with an active EmbedFC;
    mixed_1p5x_2x scales choices with any active projection block by 1.5x
    (rounded up) and doubles the pairwise bottleneck. The spec's dimension
    tables are extended to hold the new values.
    """
    if rule not in SCALE_RULES:
        raise ValueError(f"unknown scale rule {rule!r}")
    validate_genome(spec, genome)
    new_choices = []
    new_genome = []
    for cs, gc in zip(spec.choices, genome.choices):
        kinds = [cs.blocks[b] for b in gc.blocks]
        cur = cs.dim_options[gc.dim]
        new_dim = cur
        if rule == "embedfc_3x" and BlockKind.EMBED_FC in kinds:
            new_dim = 3 * cur
        elif rule == "mixed_1p5x_2x" and any(k in DIMMED_KINDS for k in kinds):
            new_dim = math.ceil(1.5 * cur)
        opts = tuple(sorted(set(cs.dim_options) | {new_dim}))
        new_choices.append(replace(
            cs, dim_options=opts,
            base_dim=opts.index(cs.dim_options[cs.base_dim])))
        new_genome.append(replace(gc, dim=opts.index(new_dim)))
    bneck = spec.bottleneck_dim * (2 if rule == "mixed_1p5x_2x" else 1)
    spec2 = replace(spec, choices=tuple(new_choices), bottleneck_dim=bneck)
    g2 = SubnetGenome(tuple(new_genome))
    validate_genome(spec2, g2)
    return g2, spec2


def merge_genomes(genomes, spec: SupernetSpec) -> SubnetGenome:
    """Union of blocks / connections / pairs, maximal dimension per choice."""
    genomes = list(genomes)
    if not genomes:
        raise ValueError("merge_genomes needs at least one genome")
    for g in genomes:
        validate_genome(spec, g)
    merged = []
    for ci, cs in enumerate(spec.choices):
        gcs = [g.choices[ci] for g in genomes]
        blocks = tuple(sorted(set().union(*[set(gc.blocks) for gc in gcs])))
        conn = tuple(int(any(gc.conn[p] for gc in gcs))
                     for p in range(cs.n_preds))
        pairs = tuple(sorted(set().union(*[set(gc.pairs) for gc in gcs])))
        dim = max(gc.dim for gc in gcs)
        merged.append(GenomeChoice(blocks, conn, pairs, dim))
    out = SubnetGenome(tuple(merged))
    validate_genome(spec, out)
    return out
