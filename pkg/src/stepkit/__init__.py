"""stepkit: parse, reserialize, retrieve and evaluate STEP (ISO 10303-21)
CAD exchange files."""

__version__ = "0.1.0"

from .graph import (
    CanonicalGraph,
    RefGraph,
    build_graph,
    canonical_form,
    detect_cycles,
    entity_count,
    find_roots,
    renumber_entities,
)
from .model import (
    BranchAnnotation,
    EntityInstance,
    HeaderRecord,
    StepFile,
)
from .parser import check_completion, parse_step, serialize_step
from .reserialize import (
    ReserializeOptions,
    SerializationTree,
    annotate_branches,
    build_serialization_tree,
    format_real,
    normalize_floats,
    reserialize_dfs,
    reserialize_dfs_with_map,
    strip_annotations,
    verify_equivalence,
)

__all__ = [
    "BranchAnnotation",
    "CanonicalGraph",
    "EntityInstance",
    "HeaderRecord",
    "RefGraph",
    "ReserializeOptions",
    "SerializationTree",
    "StepFile",
    "annotate_branches",
    "build_graph",
    "build_serialization_tree",
    "canonical_form",
    "check_completion",
    "detect_cycles",
    "entity_count",
    "find_roots",
    "format_real",
    "normalize_floats",
    "parse_step",
    "renumber_entities",
    "reserialize_dfs",
    "reserialize_dfs_with_map",
    "serialize_step",
    "strip_annotations",
    "verify_equivalence",
]
