"""DFS-based reserialization of the entity reference graph.

The reference DAG is expanded into a tree in which every entity is expanded
exactly once (later references become leaf stubs), then emitted in DFS
post-order so each branch is a contiguous run and every reference points
backward. Entity ids are renumbered 1..N in emission order, real literals
are rewritten to a fixed number of significant digits, and expanded
entities with a non-trivial subtree get a branch-statistics comment.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

from .errors import CyclicModelError
from .graph import (
    build_graph,
    canonical_form,
    detect_cycles,
    find_roots,
    structural_fingerprints,
)
from .model import (
    ANNOTATION_COMMENT_RE,
    BranchAnnotation,
    EntityInstance,
    HeaderRecord,
    Real,
    StepFile,
    transform_entity,
    transform_param,
)

ROOT_ORDER_ORIGINAL_ID = "original-id"
ROOT_ORDER_CANONICAL = "canonical"


@dataclass(frozen=True)
class ReserializeOptions:
    sig_digits: int = 6
    annotate: bool = True
    root_order: str = ROOT_ORDER_ORIGINAL_ID

    def __post_init__(self):
        if not 3 <= self.sig_digits <= 17:
            raise ValueError("sig_digits must be in [3, 17]")
        if self.root_order not in (ROOT_ORDER_ORIGINAL_ID, ROOT_ORDER_CANONICAL):
            raise ValueError(f"unknown root order {self.root_order!r}")


@dataclass
class TreeNode:
    """Node of the serialization tree.

    ``expanded`` is True at the first encounter of an entity anywhere in the
    tree; later references are stubs with no children. Stats are only
    meaningful on expanded nodes: ``child_count`` counts distinct referenced
    entities, ``branch_depth`` the subtree height (stubs count as leaves),
    ``subtree_size`` the expanded nodes in the subtree, this node included.
    """

    entity_id: int
    expanded: bool
    children: list["TreeNode"] = field(default_factory=list)
    child_count: int = 0
    branch_depth: int = 0
    subtree_size: int = 0


@dataclass
class SerializationTree:
    roots: list[TreeNode]

    def expanded_in_emission_order(self) -> list[TreeNode]:
        """Expanded nodes in DFS post-order (children before parents)."""
        order: list[TreeNode] = []
        for root in self.roots:
            stack: list[tuple[TreeNode, bool]] = [(root, False)]
            while stack:
                node, processed = stack.pop()
                if processed:
                    order.append(node)
                    continue
                stack.append((node, True))
                for child in reversed(node.children):
                    if child.expanded:
                        stack.append((child, False))
        return order


def build_serialization_tree(file: StepFile,
                             opts: ReserializeOptions = ReserializeOptions()) -> SerializationTree:
    """Expand the reference DAG into the pruned serialization tree.

    Raises :class:`CyclicModelError` for cyclic files and
    :class:`DanglingReferenceError` for unresolved references.
    """
    graph = build_graph(file)
    cycles = detect_cycles(graph)
    if cycles:
        raise CyclicModelError(cycles)
    roots = find_roots(graph)
    if opts.root_order == ROOT_ORDER_CANONICAL:
        fingerprints = structural_fingerprints(file, graph)
        by_id = file.entities_by_id()
        roots.sort(key=lambda eid: (by_id[eid].type_name, fingerprints[eid]))

    expanded: set[int] = set()

    def expand(eid: int) -> TreeNode:
        expanded.add(eid)
        root = TreeNode(eid, True)
        # frame: (node, iterator over remaining referenced ids)
        stack = [(root, iter(graph.out_edges.get(eid, ())))]
        while stack:
            node, refs = stack[-1]
            advanced = False
            for target in refs:
                if target in expanded:
                    node.children.append(TreeNode(target, False))
                    continue
                expanded.add(target)
                child = TreeNode(target, True)
                node.children.append(child)
                stack.append((child, iter(graph.out_edges.get(target, ()))))
                advanced = True
                break
            if advanced:
                continue
            stack.pop()
            refs_here = graph.out_edges.get(node.entity_id, ())
            node.child_count = len(dict.fromkeys(refs_here))
            if node.children:
                node.branch_depth = 1 + max(c.branch_depth for c in node.children)
            node.subtree_size = 1 + sum(
                c.subtree_size for c in node.children if c.expanded)
        return root

    return SerializationTree([expand(r) for r in roots])


def annotate_branches(tree: SerializationTree) -> list[BranchAnnotation]:
    """One annotation per expanded node with subtree_size > 1, in emission
    order; owners are the tree's (original) entity ids."""
    return [
        BranchAnnotation(n.entity_id, n.child_count, n.branch_depth, n.subtree_size)
        for n in tree.expanded_in_emission_order()
        if n.subtree_size > 1
    ]


def format_real(value: float, sig_digits: int) -> str:
    """Shortest Part-21 real literal for ``value`` at ``sig_digits``
    significant digits (round-half-even).

    The decimal point is always present; exponent form uses ``E`` with no
    plus sign. Of the plain and exponent spellings the shorter wins, ties
    going to the plain form.
    """
    if not math.isfinite(value):
        raise ValueError(f"cannot format non-finite value {value!r}")
    if value == 0.0:
        return "0."
    mantissa, _, exponent = format(value, f".{sig_digits - 1}e").partition("e")
    negative = mantissa.startswith("-")
    digits = mantissa.lstrip("-").replace(".", "").rstrip("0")
    if not digits:
        return "0."
    exp = int(exponent)
    sign = "-" if negative else ""

    if exp >= 0:
        if exp + 1 >= len(digits):
            plain = digits + "0" * (exp + 1 - len(digits)) + "."
        else:
            plain = digits[: exp + 1] + "." + digits[exp + 1:]
    else:
        plain = "0." + "0" * (-exp - 1) + digits
    plain = sign + plain

    exp_text = exponent.lstrip("+")
    expform = f"{sign}{digits[0]}.{digits[1:]}E{exp_text}"
    return plain if len(plain) <= len(expform) else expform


def normalize_floats(file: StepFile, sig_digits: int) -> StepFile:
    """Rewrite every real literal (header included) to ``sig_digits``
    significant digits; topology untouched."""

    def rewrite(r: Real) -> Real:
        return Real.from_text(format_real(r.value, sig_digits))

    header = tuple(
        HeaderRecord(rec.name, tuple(transform_param(p, real_fn=rewrite)
                                     for p in rec.params))
        for rec in file.header)
    entities = tuple(transform_entity(e, real_fn=rewrite) for e in file.entities)
    return StepFile(header, entities, file.trailing_complete)


def reserialize_dfs(file: StepFile,
                    opts: ReserializeOptions = ReserializeOptions()) -> StepFile:
    """Reserialize a StepFile in children-first DFS order. See module docs."""
    new_file, _ = reserialize_dfs_with_map(file, opts)
    return new_file


def reserialize_dfs_with_map(file: StepFile,
                             opts: ReserializeOptions = ReserializeOptions()
                             ) -> tuple[StepFile, dict[int, int]]:
    """Like :func:`reserialize_dfs` but also returns the old->new id map."""
    tree = build_serialization_tree(file, opts)
    order = tree.expanded_in_emission_order()
    id_map = {node.entity_id: i + 1 for i, node in enumerate(order)}
    stats = {node.entity_id: node for node in order}
    by_id = file.entities_by_id()

    def rewrite_real(r: Real) -> Real:
        return Real.from_text(format_real(r.value, opts.sig_digits))

    entities = []
    for node in order:
        old = by_id[node.entity_id]
        new = transform_entity(old, ref_fn=id_map.__getitem__,
                               real_fn=rewrite_real, new_id=id_map[old.id])
        ann = None
        if opts.annotate and stats[old.id].subtree_size > 1:
            s = stats[old.id]
            ann = BranchAnnotation(new.id, s.child_count, s.branch_depth, s.subtree_size)
        entities.append(EntityInstance(new.id, new.type_name, new.params,
                                       new.complex_parts, annotation=ann))

    header = normalize_floats(StepFile(file.header, ()), opts.sig_digits).header
    return StepFile(header, tuple(entities), trailing_complete=True), id_map


def strip_annotations(text: str) -> str:
    """Remove branch-annotation comments; all other text survives.

    Lines consisting solely of an annotation comment are removed outright,
    so stripping an annotated reserialization gives the byte-identical
    unannotated output. Idempotent.
    """
    out: list[str] = []
    for line in text.splitlines(keepends=True):
        cleaned = ANNOTATION_COMMENT_RE.sub("", line)
        if cleaned != line and not cleaned.strip():
            continue
        out.append(cleaned)
    return "".join(out)


_EXPONENT_RE = re.compile(r"[eE][+-]?\d+\Z")


def _significant_digits(text: str) -> int:
    body = _EXPONENT_RE.sub("", text.strip().lstrip("+-"))
    intpart, _, frac = body.partition(".")
    if frac:
        digits = (intpart + frac).lstrip("0")
    else:
        # Trailing zeros without fractional digits are magnitude padding
        # (e.g. "123456780." printed from an 8-digit value), not precision.
        digits = intpart.lstrip("0").rstrip("0")
    return max(1, len(digits))


def file_precision(file: StepFile) -> int:
    """Largest significant-digit count appearing in the file's real
    literals (capped at 17); 17 when the file has no reals."""
    best = 0

    def scan(value):
        nonlocal best
        if isinstance(value, Real):
            best = max(best, _significant_digits(value.text))

    for entity in file.entities:
        for group in entity.param_groups():
            for p in group:
                _walk_params(p, scan)
    return min(best, 17) if best else 17


def _walk_params(value, fn):
    fn(value)
    inner = getattr(value, "items", None)
    if inner is not None:
        for v in inner:
            _walk_params(v, fn)
    nested = getattr(value, "value", None)
    if nested is not None and not isinstance(nested, (int, float, str)):
        _walk_params(nested, fn)


def verify_equivalence(a: StepFile, b: StepFile) -> bool:
    """True iff the two files describe the same model up to identifier
    renaming, entity reordering and float precision.

    Both files are normalized to the coarser of their two precisions before
    canonical comparison. Raises :class:`CyclicModelError` on cyclic input.
    """
    precision = max(1, min(file_precision(a), file_precision(b)))
    na = normalize_floats(a, precision)
    nb = normalize_floats(b, precision)
    return canonical_form(na) == canonical_form(nb)
