import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from urbanflow.annotations import (
    AnnotationError,
    parse_annotations,
    substitute,
    widget_descriptors,
)

CORPUS = json.loads(
    (Path(__file__).resolve().parent.parent / "docs" / "annotation_corpus.json").read_text()
)


def test_dropdown_mark_example():
    sites = parse_annotations("mark: $[dropdown,Mark,bar|point|line,0]")
    assert len(sites) == 1
    s = sites[0]
    assert s.widget == "dropdown"
    assert s.params["label"] == "Mark"
    assert s.params["options"] == ["bar", "point", "line"]
    assert s.default == 0


def test_escape_yields_no_site():
    assert parse_annotations("cost: $$[notwidget]") == []


def test_slider_example():
    (s,) = parse_annotations("$[slider,Height,0,500,10,100]")
    assert (s.params["min"], s.params["max"], s.params["step"]) == (0, 500, 10)
    assert s.default == 100


def test_sites_have_dense_ordinals_and_increasing_spans():
    code = "$[checkbox,A,true] mid $[date,B,2024-01-01] end $[slider,C,0,1,0.5,0.5]"
    sites = parse_annotations(code)
    assert [s.ordinal for s in sites] == [0, 1, 2]
    spans = [s.span for s in sites]
    assert all(a[1] <= b[0] for a, b in zip(spans, spans[1:]))
    assert parse_annotations(code) == sites  # stable


def test_substitution_mark_replacement():
    code = '"mark": "$[dropdown,Mark,bar|point|line,1]"'
    out = substitute(code, parse_annotations(code), {})
    assert out == '"mark": "point"'


def test_substitution_with_values():
    code = "h=$[slider,H,0,500,10,100]; on=$[checkbox,On,false]"
    sites = parse_annotations(code)
    out = substitute(code, sites, {0: 250.0, 1: True})
    assert out == "h=250; on=true"


def test_substitute_rejects_bad_value():
    code = "$[slider,H,0,500,10,100]"
    sites = parse_annotations(code)
    with pytest.raises(AnnotationError) as e:
        substitute(code, sites, {0: 115.0})  # off the step lattice
    assert e.value.code == "value_out_of_constraints"


def test_widget_descriptors_defaults_and_overrides():
    code = "$[dropdown,Mark,bar|point|line,0] $[checkbox,On,false]"
    sites = parse_annotations(code)
    descs = widget_descriptors(sites, {})
    assert descs[0].current == 0 and descs[1].current is False
    descs = widget_descriptors(sites, {1: True})
    assert descs[1].current is True
    assert descs[0].constraints["options"] == ["bar", "point", "line"]


def test_widget_descriptor_unknown_ordinal():
    sites = parse_annotations("$[checkbox,On,false]")
    with pytest.raises(AnnotationError):
        widget_descriptors(sites, {3: True})


def test_slider_value_on_lattice_accepted():
    sites = parse_annotations("$[slider,H,0,500,10,100]")
    descs = widget_descriptors(sites, {0: 110.0})
    assert descs[0].current == 110.0


def test_date_value_validation():
    sites = parse_annotations("$[date,D,2024-01-01]")
    with pytest.raises(AnnotationError):
        widget_descriptors(sites, {0: "not-a-date"})
    assert widget_descriptors(sites, {0: "2025-06-30"})[0].current == "2025-06-30"


# --- conformance corpus -------------------------------------------------------

@pytest.mark.parametrize("entry", CORPUS["accepted"],
                         ids=lambda e: e["code"][:40] or "<empty>")
def test_corpus_accepted(entry):
    sites = parse_annotations(entry["code"])
    assert len(sites) == entry["sites"]
    out = substitute(entry["code"], sites, {})
    assert out == entry["substituted"]
    if entry.get("reparse", True):
        assert parse_annotations(out) == []


@pytest.mark.parametrize("entry", CORPUS["rejected"], ids=lambda e: e["code"][:40])
def test_corpus_rejected(entry):
    with pytest.raises(AnnotationError) as e:
        parse_annotations(entry["code"])
    assert e.value.code == "malformed_annotation"
    assert list(e.value.span) == entry["span"]
    assert entry["reason"].lower() in str(e.value).lower()


# --- generated round-trip property ---------------------------------------------

_plain = st.text(
    alphabet=st.characters(blacklist_characters="$", blacklist_categories=("Cs",)),
    max_size=12,
)


@st.composite
def annotation_and_token(draw):
    widget = draw(st.sampled_from(["checkbox", "dropdown", "slider", "date"]))
    label = draw(st.text(alphabet="abcXYZ _carbon", max_size=6))
    if widget == "checkbox":
        default = draw(st.booleans())
        return f"$[checkbox,{label},{'true' if default else 'false'}]", str(default).lower()
    if widget == "dropdown":
        options = draw(st.lists(st.text(alphabet="abc123 .-", max_size=5),
                                min_size=1, max_size=4))
        idx = draw(st.integers(0, len(options) - 1))
        return f"$[dropdown,{label},{'|'.join(options)},{idx}]", options[idx]
    if widget == "slider":
        lo = draw(st.integers(-50, 50))
        steps = draw(st.integers(1, 20))
        step = draw(st.sampled_from([1, 2, 5, 0.5, 0.25]))
        hi = lo + steps * step
        k = draw(st.integers(0, steps))
        default = lo + k * step
        tok = str(int(default)) if default == int(default) else repr(float(default))
        return f"$[slider,{label},{lo},{hi},{step},{tok}]", tok
    day = draw(st.integers(1, 28))
    iso = f"2024-03-{day:02d}"
    return f"$[date,{label},{iso}]", iso


@st.composite
def annotated_code(draw):
    n = draw(st.integers(0, 5))
    pairs = [draw(annotation_and_token()) for _ in range(n)]
    fragments = [draw(_plain) for _ in range(n + 1)]
    code = fragments[0]
    expected = fragments[0]
    for (ann, tok), frag in zip(pairs, fragments[1:]):
        code += ann + frag
        expected += tok + frag
    return code, expected, n


@settings(max_examples=120, deadline=None)
@given(annotated_code())
def test_generated_roundtrip(case):
    code, expected, n = case
    sites = parse_annotations(code)
    assert len(sites) == n
    out = substitute(code, sites, {})
    assert out == expected  # tokens spliced, residue preserved verbatim
    assert parse_annotations(out) == []
    assert substitute(code, sites, {}) == out  # deterministic
