from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stepkit import (
    ReserializeOptions,
    annotate_branches,
    build_serialization_tree,
    canonical_form,
    format_real,
    normalize_floats,
    parse_step,
    reserialize_dfs,
    reserialize_dfs_with_map,
    serialize_step,
    strip_annotations,
    verify_equivalence,
)
from stepkit.errors import CyclicModelError
from stepkit.model import Real, Reference

from corpus import synthetic_step_text


def make(body: str):
    return parse_step(f"ISO-10303-21;HEADER;ENDSEC;DATA;{body}ENDSEC;END-ISO-10303-21;")


class TestReserializeDfs:
    def test_hand_traced_post_order(self):
        f = make("#10=A(#7,#23);#7=B();#23=C(#7);")
        out = reserialize_dfs(f, ReserializeOptions(annotate=False))
        lines = [l for l in serialize_step(out).splitlines() if l.startswith("#")]
        assert lines == ["#1=B();", "#2=C(#1);", "#3=A(#1,#2);"]
        assert verify_equivalence(f, out)

    def test_single_entity(self):
        f = make("#42=A();")
        out = reserialize_dfs(f)
        assert [e.id for e in out.entities] == [1]
        assert out.entities[0].type_name == "A"

    def test_shared_child_expanded_once(self):
        # both parents use #3; it must be defined once, before both
        f = make("#1=P(#3);#2=Q(#3);#3=S();")
        out = reserialize_dfs(f, ReserializeOptions(annotate=False))
        text = serialize_step(out)
        assert text.count("=S()") == 1
        ids = [e.id for e in out.entities]
        assert ids == [1, 2, 3]

    def test_ids_renumbered_dense(self):
        f = parse_step(synthetic_step_text(99))
        out = reserialize_dfs(f)
        assert sorted(e.id for e in out.entities) == list(range(1, len(out.entities) + 1))

    def test_no_forward_references(self, corpus):
        for text in corpus:
            out = reserialize_dfs(parse_step(text))
            seen = set()
            for e in out.entities:
                for group in e.param_groups():
                    for ref in _refs(group):
                        assert ref in seen, f"forward reference #{ref} in #{e.id}"
                seen.add(e.id)

    def test_semantic_preservation_all_opts(self, corpus):
        options = [
            ReserializeOptions(),
            ReserializeOptions(sig_digits=8, annotate=False),
            ReserializeOptions(sig_digits=3, root_order="canonical"),
        ]
        for text in corpus[:20]:
            f = parse_step(text)
            for opts in options:
                assert verify_equivalence(f, reserialize_dfs(f, opts))

    def test_deterministic_bytes(self):
        f = parse_step(synthetic_step_text(7))
        a = serialize_step(reserialize_dfs(f))
        b = serialize_step(reserialize_dfs(f))
        assert a == b

    def test_cyclic_rejected(self):
        with pytest.raises(CyclicModelError):
            reserialize_dfs(make("#1=A(#2);#2=B(#1);"))

    def test_id_map_applies(self):
        f = make("#10=A(#7);#7=B();")
        out, id_map = reserialize_dfs_with_map(f)
        assert id_map == {7: 1, 10: 2}
        assert [e.id for e in out.entities] == [1, 2]

    def test_multi_root_contiguous_ascending(self):
        f = make("#9=R2(#5);#5=L2();#2=R1(#3);#3=L1();")
        out = reserialize_dfs(f, ReserializeOptions(annotate=False))
        names = [e.type_name for e in out.entities]
        # roots ascend by original id: the #2 subtree comes first, contiguous
        assert names == ["L1", "R1", "L2", "R2"]


def _refs(group):
    out = []
    stack = list(group)
    while stack:
        v = stack.pop()
        if isinstance(v, Reference):
            out.append(v.target)
        items = getattr(v, "items", None)
        if items is not None:
            stack.extend(items)
        nested = getattr(v, "value", None)
        if nested is not None and not isinstance(nested, (int, float, str)):
            stack.append(nested)
    return out


class TestFormatReal:
    @pytest.mark.parametrize("value,sig,expected", [
        (0.30000000000000004, 6, "0.3"),
        (1.0, 6, "1."),
        (-2.5000001e-07, 6, "-2.5E-07"),
        (0.0, 6, "0."),
        (-0.0, 6, "0."),
        (123456789.0, 4, "1.235E08"),
        (1000000.0, 6, "1.E06"),
        (0.125, 2, "0.12"),     # round-half-even
        (0.135, 2, "0.14"),     # 0.135 is stored slightly above the midpoint
        (-42.0, 6, "-42."),
        (1e-07, 6, "1.E-07"),
    ])
    def test_cases(self, value, sig, expected):
        assert format_real(value, sig) == expected

    @settings(max_examples=200, deadline=None)
    @given(st.floats(allow_nan=False, allow_infinity=False), st.integers(3, 17))
    def test_reparse_matches_rounded_value(self, value, sig):
        text = format_real(value, sig)
        reparsed = float(text)
        rounded = float(format(value, f".{sig - 1}e"))
        assert reparsed == rounded
        assert "." in text  # Part-21 reals always carry the point

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            format_real(float("inf"), 6)


class TestNormalizeFloats:
    def test_rounding(self):
        f = make("#1=A(0.30000000000000004);")
        out = normalize_floats(f, 6)
        assert out.entities[0].params[0] == Real("0.3", 0.3)

    def test_topology_untouched(self):
        f = make("#1=A(#2,1.23456789);#2=B();")
        out = normalize_floats(f, 3)
        assert out.entities[0].params[0] == Reference(2)
        assert out.entities[0].params[1].text == "1.23"

    def test_header_reals_normalized(self):
        f = parse_step("ISO-10303-21;HEADER;PREC(0.123456789);ENDSEC;"
                       "DATA;ENDSEC;END-ISO-10303-21;")
        out = normalize_floats(f, 4)
        assert out.header[0].params[0].text == "0.1235"


class TestAnnotations:
    def test_branch_stats(self):
        f = make("#1=A(#2,#3,#4);#2=B();#3=C();#4=D();")
        tree = build_serialization_tree(f)
        anns = annotate_branches(tree)
        assert len(anns) == 1
        ann = anns[0]
        assert (ann.owner, ann.child_count, ann.branch_depth, ann.subtree_size) == (1, 3, 1, 4)

    def test_leaves_carry_no_annotation(self):
        f = make("#1=A(#2);#2=B();")
        anns = annotate_branches(build_serialization_tree(f))
        assert [a.owner for a in anns] == [1]

    def test_chain_depth(self):
        f = make("#1=A(#2);#2=B(#3);#3=C(#4);#4=D(#5);#5=E();")
        anns = {a.owner: a for a in annotate_branches(build_serialization_tree(f))}
        assert anns[1].branch_depth == 4

    def test_child_count_dedupes_targets(self):
        f = make("#1=A(#2,#2);#2=B();")
        anns = annotate_branches(build_serialization_tree(f))
        assert anns[0].child_count == 1

    def test_annotated_file_round_trips(self):
        f = make("#1=A(#2,#3);#2=B();#3=C(#2);")
        out = reserialize_dfs(f)
        text = serialize_step(out)
        assert parse_step(text) == out


class TestStripAnnotations:
    def test_strip_equals_unannotated(self, corpus):
        for text in corpus[:15]:
            f = parse_step(text)
            with_ann = serialize_step(reserialize_dfs(f, ReserializeOptions(annotate=True)))
            without = serialize_step(reserialize_dfs(f, ReserializeOptions(annotate=False)))
            assert strip_annotations(with_ann) == without

    def test_user_comment_preserved(self):
        text = "/* keep me */\n#1=A();\n"
        assert strip_annotations(text) == text

    def test_idempotent(self):
        f = make("#1=A(#2,#3);#2=B();#3=C(#2);")
        text = serialize_step(reserialize_dfs(f))
        once = strip_annotations(text)
        assert strip_annotations(once) == once

    def test_stripped_output_still_parses(self):
        f = make("#1=A(#2,#3);#2=B();#3=C(#2);")
        text = serialize_step(reserialize_dfs(f))
        stripped = strip_annotations(text)
        assert parse_step(stripped).entities == tuple(
            type(e)(e.id, e.type_name, e.params, e.complex_parts, None)
            for e in parse_step(text).entities)


class TestVerifyEquivalence:
    def test_reserialized_equivalent(self):
        f = parse_step(synthetic_step_text(5))
        assert verify_equivalence(f, reserialize_dfs(f))

    def test_retargeted_reference_not_equivalent(self):
        f = make("#1=A(#2,#3);#2=B(1.);#3=C(2.);#4=D(#2);")
        g = make("#1=A(#2,#3);#2=B(1.);#3=C(2.);#4=D(#3);")
        assert not verify_equivalence(f, g)

    def test_rounded_file_equivalent_at_coarser_precision(self):
        f = make("#1=A(0.123456789012);")
        g = normalize_floats(f, 6)
        assert verify_equivalence(f, g)

    def test_canonical_matches_reserialized(self):
        f = parse_step(synthetic_step_text(11))
        out = reserialize_dfs(f, ReserializeOptions(sig_digits=17, annotate=False))
        assert canonical_form(f) == canonical_form(out)
