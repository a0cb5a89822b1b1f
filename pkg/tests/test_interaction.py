import random

import pytest

from urbanflow.interaction import (
    InteractionError,
    LinkSpec,
    SelectionState,
    apply_selection,
    augment,
    propagate,
    strip_augmentation,
)
from urbanflow.layers import AttributeDef, make_layer, serialize_layer


def table(cols, rows):
    return make_layer("table", [AttributeDef(n, d) for n, d in cols], rows)


def test_augment_marks_selected():
    l = table([("v", "number")], [[1], [2], [3]])
    out = augment(l, SelectionState("i", frozenset({1})))
    idx = out.attr_index("interaction")
    assert [r[idx] for r in out.records] == [False, True, False]
    assert out.schema[idx].dtype == "boolean"


def test_augment_empty_selection_all_false():
    l = table([("v", "number")], [[1], [2]])
    out = augment(l, SelectionState("i"))
    assert [r[-1] for r in out.records] == [False, False]


def test_augment_attr_collision():
    l = table([("interaction", "boolean")], [[True]])
    with pytest.raises(InteractionError) as e:
        augment(l, SelectionState("i"))
    assert e.value.code == "attr_collision"


def test_augment_strip_roundtrip_byte_identical():
    l = table([("v", "number"), ("t", "text")], [[1, "a"], [2, None]])
    out = augment(l, SelectionState("i", frozenset({0})))
    assert serialize_layer(strip_augmentation(out)) == serialize_layer(l)


def test_apply_selection_modes():
    s = SelectionState("i", frozenset({1, 2}), revision=5)
    toggled = apply_selection(s, {2, 3}, "toggle")
    assert toggled.selected == {1, 3} and toggled.revision == 6
    cleared = apply_selection(toggled, {9, 10}, "clear", record_count=4)
    assert cleared.selected == frozenset() and cleared.revision == 7
    replaced = apply_selection(cleared, set(), "replace")
    assert replaced.selected == frozenset()  # replace with empty == clear


def test_apply_selection_validates_ids():
    s = SelectionState("i")
    with pytest.raises(InteractionError) as e:
        apply_selection(s, {5}, "replace", record_count=3)
    assert e.value.code == "unknown_record_id"


def _fixture():
    """complaints -> neighborhoods -> boroughs (paper's multi-resolution shape)."""
    rng = random.Random(4)
    hoods = table([("name", "text"), ("borough", "text")],
                  [[f"N{i}", f"B{i % 3}"] for i in range(9)])
    boroughs = table([("name", "text")], [[f"B{i}"] for i in range(3)])
    complaints = table([("cid", "number"), ("name", "text")],
                       [[float(i), f"N{rng.randint(0, 8)}"] for i in range(60)])
    layers = {"i_c": complaints, "i_n": hoods, "i_b": boroughs}
    links = [
        LinkSpec("i_c", "i_n", "name", "name"),
        LinkSpec("i_n", "i_b", "borough", "name"),
    ]
    states = {k: SelectionState(k) for k in layers}
    return layers, links, states


def test_propagate_borough_selection_matches_relational_filter():
    layers, links, states = _fixture()
    states["i_b"] = apply_selection(states["i_b"], {1}, "replace")  # B1
    out = propagate("i_b", states, links, layers)
    hood_names = {r[0] for i, r in enumerate(layers["i_n"].records) if i in out["i_n"].selected}
    expect_hoods = {r[0] for r in layers["i_n"].records if r[1] == "B1"}
    assert hood_names == expect_hoods
    expect_complaints = {i for i, r in enumerate(layers["i_c"].records)
                         if r[1] in expect_hoods}
    assert out["i_c"].selected == expect_complaints


def test_propagate_no_links_only_origin():
    layers, _, states = _fixture()
    states["i_c"] = apply_selection(states["i_c"], {0, 1}, "replace")
    out = propagate("i_c", states, [], layers)
    assert out["i_c"].selected == {0, 1}
    assert out["i_n"].selected == frozenset()


def test_propagate_empty_selection_propagates_empty():
    layers, links, states = _fixture()
    states["i_n"] = apply_selection(states["i_n"], {0}, "replace")
    out = propagate("i_n", states, links, layers)
    states2 = dict(out)
    states2["i_n"] = apply_selection(states2["i_n"], set(), "clear")
    out2 = propagate("i_n", states2, links, layers)
    assert out2["i_c"].selected == frozenset()
    assert out2["i_b"].selected == frozenset()


def test_propagate_idempotent():
    layers, links, states = _fixture()
    states["i_b"] = apply_selection(states["i_b"], {0}, "replace")
    once = propagate("i_b", states, links, layers)
    twice = propagate("i_b", once, links, layers)
    assert {k: v.selected for k, v in twice.items()} == \
           {k: v.selected for k, v in once.items()}
    assert {k: v.revision for k, v in twice.items()} == \
           {k: v.revision for k, v in once.items()}


def test_propagate_null_keys_never_match():
    a = table([("k", "text")], [["x"], [None]])
    b = table([("k", "text")], [[None], ["x"]])
    layers = {"ia": a, "ib": b}
    links = [LinkSpec("ia", "ib", "k", "k")]
    states = {"ia": SelectionState("ia", frozenset({0, 1}), 1), "ib": SelectionState("ib")}
    out = propagate("ia", states, links, layers)
    assert out["ib"].selected == {1}


def test_propagate_unknown_key_attr():
    a = table([("k", "text")], [["x"]])
    layers = {"ia": a, "ib": a}
    links = [LinkSpec("ia", "ib", "nope", "k")]
    states = {k: SelectionState(k) for k in layers}
    with pytest.raises(InteractionError) as e:
        propagate("ia", states, links, layers)
    assert e.value.code == "unknown_link_key_attr"


def test_propagate_terminates_on_mutual_links():
    a = table([("k", "text")], [["x"], ["y"]])
    layers = {"ia": a, "ib": a}
    links = [LinkSpec("ia", "ib", "k", "k"), LinkSpec("ib", "ia", "k", "k")]
    states = {"ia": SelectionState("ia", frozenset({0}), 1), "ib": SelectionState("ib")}
    out = propagate("ia", states, links, layers)  # must not oscillate
    assert out["ib"].selected == {0}
    assert out["ia"].selected == {0}
