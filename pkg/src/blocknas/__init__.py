"""Desk-scale NAS over low-level building blocks for CTR-style ranking models."""

__version__ = "0.1.0"

from .space import (  # noqa: F401
    BlockKind, ChoiceSpec, SubnetGenome, SupernetSpec,
    all_ones_genome, base_genome, chain_spec, dims_only_spec, free_decisions,
    grow_supernet, load_genome, load_spec, sample_random_genome, save_genome,
    save_spec, search_space_size, validate_genome,
)
from .supernet import Supernet, SubnetModel  # noqa: F401
