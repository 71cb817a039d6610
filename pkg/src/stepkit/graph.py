"""Cross-reference graph over entity instances.

Edges follow ``#id`` parameters in left-to-right order, duplicates kept
(parameter arity matters for equivalence). The canonical form relabels
nodes by a DFS that orders roots by content, not by identifier, so files
that differ only in identifier choice and entity order compare equal.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .errors import CyclicModelError, DanglingReferenceError, InvalidModelError
from .model import (
    Derived,
    EntityInstance,
    EnumToken,
    Integer,
    ListOf,
    Omitted,
    Real,
    Reference,
    StepFile,
    Text,
    TypedValue,
    entity_references,
    transform_entity,
)


@dataclass(frozen=True)
class RefGraph:
    nodes: frozenset[int]
    out_edges: dict[int, list[int]]
    in_degree: dict[int, int]


@dataclass(frozen=True)
class CanonicalGraph:
    """Renaming- and order-invariant encoding of an acyclic StepFile.

    ``nodes`` holds one encoded entity per canonical label, in label order;
    references inside an encoding use canonical labels.
    """

    nodes: tuple[str, ...]


def build_graph(file: StepFile) -> RefGraph:
    """Build the reference graph; raises :class:`DanglingReferenceError` if
    any reference does not resolve."""
    ids = {e.id for e in file.entities}
    out_edges: dict[int, list[int]] = {}
    in_degree = {eid: 0 for eid in ids}
    for entity in file.entities:
        refs = entity_references(entity)
        for target in refs:
            if target not in ids:
                raise DanglingReferenceError(entity.id, target)
            in_degree[target] += 1
        out_edges[entity.id] = refs
    return RefGraph(frozenset(ids), out_edges, in_degree)


def entity_count(file: StepFile) -> int:
    """Number of DATA-section entity instances (header records excluded)."""
    return len(file.entities)


def find_roots(graph: RefGraph) -> list[int]:
    """Ids with in-degree 0, ascending. Empty for fully cyclic graphs."""
    return sorted(n for n in graph.nodes if graph.in_degree[n] == 0)


def detect_cycles(graph: RefGraph) -> list[list[int]]:
    """One representative cycle per non-trivial strongly connected component.

    Each cycle is reported as its sorted node list; self-loops appear as
    single-node lists. Returns [] iff the graph is acyclic.
    """
    index_of: dict[int, int] = {}
    lowlink: dict[int, int] = {}
    on_stack: set[int] = set()
    stack: list[int] = []
    counter = 0
    cycles: list[list[int]] = []

    for start in sorted(graph.nodes):
        if start in index_of:
            continue
        # Iterative Tarjan; frame = (node, iterator over successors).
        work = [(start, iter(graph.out_edges.get(start, ())))]
        index_of[start] = lowlink[start] = counter
        counter += 1
        stack.append(start)
        on_stack.add(start)
        while work:
            node, successors = work[-1]
            advanced = False
            for succ in successors:
                if succ not in index_of:
                    index_of[succ] = lowlink[succ] = counter
                    counter += 1
                    stack.append(succ)
                    on_stack.add(succ)
                    work.append((succ, iter(graph.out_edges.get(succ, ()))))
                    advanced = True
                    break
                if succ in on_stack:
                    lowlink[node] = min(lowlink[node], index_of[succ])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                lowlink[parent] = min(lowlink[parent], lowlink[node])
            if lowlink[node] == index_of[node]:
                component: list[int] = []
                while True:
                    member = stack.pop()
                    on_stack.discard(member)
                    component.append(member)
                    if member == node:
                        break
                if len(component) > 1 or node in graph.out_edges.get(node, ()):
                    cycles.append(sorted(component))
    cycles.sort(key=lambda c: c[0])
    return cycles


def _encode_value(value, ref_encoder) -> str:
    if isinstance(value, Real):
        return repr(value.value)
    if isinstance(value, Integer):
        return str(value.value)
    if isinstance(value, Text):
        return f"'{value.raw}'"
    if isinstance(value, EnumToken):
        return f".{value.name}."
    if isinstance(value, Reference):
        return ref_encoder(value.target)
    if isinstance(value, ListOf):
        return "(" + ",".join(_encode_value(v, ref_encoder) for v in value.items) + ")"
    if isinstance(value, Omitted):
        return "$"
    if isinstance(value, Derived):
        return "*"
    if isinstance(value, TypedValue):
        return f"{value.keyword}({_encode_value(value.value, ref_encoder)})"
    raise InvalidModelError(f"unknown parameter value {value!r}")


def _encode_entity(entity: EntityInstance, ref_encoder) -> str:
    if entity.complex_parts is not None:
        body = "".join(
            f"{part.type_name}("
            + ",".join(_encode_value(v, ref_encoder) for v in part.params)
            + ")"
            for part in entity.complex_parts)
        return f"({body})"
    args = ",".join(_encode_value(v, ref_encoder) for v in entity.params)
    return f"{entity.type_name}({args})"


def _postorder(graph: RefGraph, roots: list[int]) -> list[int]:
    """All nodes, children before parents. Graph must be acyclic."""
    order: list[int] = []
    done: set[int] = set()
    for root in roots:
        if root in done:
            continue
        stack: list[tuple[int, bool]] = [(root, False)]
        opened: set[int] = set()
        while stack:
            node, processed = stack.pop()
            if processed:
                done.add(node)
                order.append(node)
                continue
            if node in done:
                continue
            opened.add(node)
            stack.append((node, True))
            for succ in reversed(graph.out_edges.get(node, ())):
                if succ not in done:
                    stack.append((succ, False))
        done.update(opened)
    return order


def structural_fingerprints(file: StepFile, graph: RefGraph | None = None) -> dict[int, str]:
    """Identifier-independent content hash per entity (acyclic files only).

    The hash covers the entity's type, parameters and, recursively, the
    fingerprints of everything it references.
    """
    if graph is None:
        graph = build_graph(file)
    cycles = detect_cycles(graph)
    if cycles:
        raise CyclicModelError(cycles)
    by_id = file.entities_by_id()
    fingerprints: dict[int, str] = {}
    for eid in _postorder(graph, find_roots(graph)):
        encoded = _encode_entity(by_id[eid], lambda t: "@" + fingerprints[t])
        fingerprints[eid] = hashlib.sha1(encoded.encode()).hexdigest()
    return fingerprints


def canonical_form(file: StepFile) -> CanonicalGraph:
    """Canonical encoding invariant under identifier renaming and entity
    reordering. Raises :class:`CyclicModelError` on cyclic files."""
    graph = build_graph(file)
    fingerprints = structural_fingerprints(file, graph)
    by_id = file.entities_by_id()
    roots = sorted(find_roots(graph),
                   key=lambda eid: (by_id[eid].type_name, fingerprints[eid]))
    labels: dict[int, int] = {}
    visit_order: list[int] = []
    for root in roots:
        stack = [root]
        while stack:
            node = stack.pop()
            if node in labels:
                continue
            labels[node] = len(labels) + 1
            visit_order.append(node)
            stack.extend(reversed(graph.out_edges.get(node, ())))
    nodes = tuple(
        _encode_entity(by_id[eid], lambda t: f"@{labels[t]}") for eid in visit_order)
    return CanonicalGraph(nodes)


def renumber_entities(file: StepFile, mapping: dict[int, int]) -> StepFile:
    """Apply an id permutation to entities and every reference.

    ``mapping`` must cover every entity id and assign distinct positive new
    ids. Entity order is preserved.
    """
    ids = {e.id for e in file.entities}
    if set(mapping) != ids:
        raise InvalidModelError("id mapping does not cover exactly the entity ids")
    new_ids = list(mapping.values())
    if len(set(new_ids)) != len(new_ids) or any(n <= 0 for n in new_ids):
        raise InvalidModelError("id mapping must be a positive-id bijection")
    entities = tuple(
        transform_entity(e, ref_fn=lambda t: mapping[t], new_id=mapping[e.id])
        for e in file.entities)
    return StepFile(file.header, entities, file.trailing_complete)
