"""In-memory model of an ISO 10303-21 exchange file.

A parsed file is a flat, ordered list of entity instances plus the header
records. Parameters form a small tagged-union tree. Real literals keep
their exact source spelling so a file can be re-emitted without touching
digits the pipeline never rewrote; precision normalization replaces the
text explicitly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

TERMINATOR_LINE = "END-ISO-10303-21;"

TYPE_NAME_RE = re.compile(r"[A-Z_][A-Z0-9_]*\Z")

# Structural comment emitted in front of an entity by the DFS reserializer.
ANNOTATION_BODY_RE = re.compile(
    r"\s*STEPKIT branch children=(\d+) depth=(\d+) size=(\d+)\s*\Z"
)
ANNOTATION_COMMENT_RE = re.compile(
    r"/\*\s*STEPKIT branch children=\d+ depth=\d+ size=\d+\s*\*/"
)


@dataclass(frozen=True)
class Real:
    """Real literal; ``text`` is the exact source spelling of ``value``."""

    text: str
    value: float

    @staticmethod
    def from_text(text: str) -> Real:
        return Real(text, float(text))


@dataclass(frozen=True)
class Integer:
    value: int


@dataclass(frozen=True)
class Text:
    """String parameter kept in its raw Part-21 encoding (quotes stripped,
    ``''`` and ``\\X\\`` escapes left untouched)."""

    raw: str


@dataclass(frozen=True)
class EnumToken:
    """Enumeration value, stored without the surrounding dots."""

    name: str


@dataclass(frozen=True)
class Reference:
    """Cross-reference to another entity (``#target``)."""

    target: int


@dataclass(frozen=True)
class ListOf:
    items: tuple[ParamValue, ...]


@dataclass(frozen=True)
class Omitted:
    """The ``$`` placeholder."""


@dataclass(frozen=True)
class Derived:
    """The ``*`` placeholder."""


@dataclass(frozen=True)
class TypedValue:
    """Typed parameter, e.g. ``LENGTH_MEASURE(2.5)``."""

    keyword: str
    value: ParamValue


ParamValue = (
    Real | Integer | Text | EnumToken | Reference | ListOf | Omitted | Derived | TypedValue
)


@dataclass(frozen=True)
class BranchAnnotation:
    """Branch statistics attached to an expanded entity by the reserializer.

    ``child_count`` counts distinct referenced entities, ``branch_depth`` is
    the height of the expansion subtree (leaves have depth 0) and
    ``subtree_size`` counts first-encounter entities in the subtree, the
    owner included.
    """

    owner: int
    child_count: int
    branch_depth: int
    subtree_size: int


def format_annotation_comment(ann: BranchAnnotation) -> str:
    return (
        f"/* STEPKIT branch children={ann.child_count} "
        f"depth={ann.branch_depth} size={ann.subtree_size} */"
    )


@dataclass(frozen=True)
class ComplexPart:
    type_name: str
    params: tuple[ParamValue, ...]


@dataclass(frozen=True)
class EntityInstance:
    """One ``#id=TYPE(...);`` record of the DATA section.

    For Part-21 complex (multi-keyword) instances ``complex_parts`` holds the
    ordered parts and ``type_name`` mirrors the first part's keyword.
    """

    id: int
    type_name: str
    params: tuple[ParamValue, ...]
    complex_parts: tuple[ComplexPart, ...] | None = None
    annotation: BranchAnnotation | None = None

    def param_groups(self) -> list[tuple[ParamValue, ...]]:
        """Parameter lists in declaration order (one per complex part)."""
        if self.complex_parts is not None:
            return [part.params for part in self.complex_parts]
        return [self.params]


@dataclass(frozen=True)
class HeaderRecord:
    name: str
    params: tuple[ParamValue, ...]


@dataclass(frozen=True)
class StepFile:
    header: tuple[HeaderRecord, ...]
    entities: tuple[EntityInstance, ...]
    trailing_complete: bool = True

    def entities_by_id(self) -> dict[int, EntityInstance]:
        return {e.id: e for e in self.entities}


def transform_param(value, ref_fn=None, real_fn=None):
    """Rebuild a parameter tree, rewriting references and/or reals.

    ``ref_fn`` maps an entity id to a new id; ``real_fn`` maps a Real to a
    replacement Real. Untouched nodes are returned as-is.
    """
    if isinstance(value, Reference) and ref_fn is not None:
        return Reference(ref_fn(value.target))
    if isinstance(value, Real) and real_fn is not None:
        return real_fn(value)
    if isinstance(value, ListOf):
        return ListOf(tuple(transform_param(v, ref_fn, real_fn) for v in value.items))
    if isinstance(value, TypedValue):
        return TypedValue(value.keyword, transform_param(value.value, ref_fn, real_fn))
    return value


def transform_entity(entity: EntityInstance, ref_fn=None, real_fn=None,
                     new_id: int | None = None) -> EntityInstance:
    params = tuple(transform_param(p, ref_fn, real_fn) for p in entity.params)
    parts = None
    if entity.complex_parts is not None:
        parts = tuple(
            ComplexPart(part.type_name,
                        tuple(transform_param(p, ref_fn, real_fn) for p in part.params))
            for part in entity.complex_parts
        )
    return EntityInstance(
        id=entity.id if new_id is None else new_id,
        type_name=entity.type_name,
        params=params,
        complex_parts=parts,
        annotation=entity.annotation,
    )


def iter_references(values) -> list[int]:
    """Referenced entity ids in left-to-right parameter order, duplicates kept."""
    refs: list[int] = []
    stack = list(reversed(list(values)))
    while stack:
        v = stack.pop()
        if isinstance(v, Reference):
            refs.append(v.target)
        elif isinstance(v, ListOf):
            stack.extend(reversed(v.items))
        elif isinstance(v, TypedValue):
            stack.append(v.value)
    return refs


def entity_references(entity: EntityInstance) -> list[int]:
    refs: list[int] = []
    for group in entity.param_groups():
        refs.extend(iter_references(group))
    return refs
