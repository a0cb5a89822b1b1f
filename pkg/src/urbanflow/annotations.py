"""GUI annotations embedded in node code.

Grammar (byte-oriented over the UTF-8 encoding of the code):

    Annotation := "$[" Type ("," Param)* "]"
    Type       := checkbox | dropdown | slider | date

    checkbox(label, default)            default in {true,false}
    dropdown(label, options, default)   options pipe-separated, default a 0-based index
    slider(label, min, max, step, default)   decimals; default on the step lattice
    date(label, default)                default an ISO-8601 date

"$$[" escapes a literal "$[". Params may not contain "]", "," or "$";
dropdown options additionally may not contain "|". Parsing finds sites,
`widget_descriptors` resolves current values, `substitute` splices chosen
values back into executable text (raw tokens, no quoting).
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date as _date
from typing import Any, Optional

from .canonical import format_decimal

WIDGETS = ("checkbox", "dropdown", "slider", "date")

# |v - lattice point| tolerated up to this fraction of the step magnitude
_STEP_TOL = 1e-9


class AnnotationError(Exception):
    def __init__(self, code: str, detail: str = "", span: Optional[tuple[int, int]] = None,
                 ordinal: Optional[int] = None):
        self.code = code
        self.detail = detail
        self.span = span
        self.ordinal = ordinal
        super().__init__(f"{code}: {detail}" if detail else code)


def _malformed(span: tuple[int, int], reason: str) -> AnnotationError:
    return AnnotationError("malformed_annotation", reason, span=span)


@dataclass(frozen=True)
class AnnotationSite:
    ordinal: int
    span: tuple[int, int]  # byte offsets in the UTF-8 encoding, [start, end)
    widget: str
    params: dict[str, Any]
    default: Any


@dataclass(frozen=True)
class WidgetDescriptor:
    ordinal: int
    widget: str
    label: str
    constraints: dict[str, Any]
    current: Any


def _parse_float(tok: str, span: tuple[int, int], what: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise _malformed(span, f"{what} is not a number: {tok!r}")


def _on_lattice(v: float, lo: float, hi: float, step: float) -> bool:
    tol = _STEP_TOL * max(1.0, abs(lo), abs(hi), abs(step))
    if v < lo - tol or v > hi + tol:
        return False
    k = round((v - lo) / step)
    return abs((v - lo) - k * step) <= tol


def _parse_site(ordinal: int, span: tuple[int, int], fields: list[str]) -> AnnotationSite:
    widget = fields[0]
    if widget not in WIDGETS:
        raise _malformed(span, f"unknown widget type {widget!r}")
    params = fields[1:]
    if any("$" in p for p in params):
        raise _malformed(span, "params may not contain '$'")

    if widget == "checkbox":
        if len(params) != 2:
            raise _malformed(span, f"checkbox takes (label, default), got {len(params)} params")
        label, default = params
        if default not in ("true", "false"):
            raise _malformed(span, f"checkbox default must be true/false, got {default!r}")
        return AnnotationSite(ordinal, span, widget, {"label": label}, default == "true")

    if widget == "dropdown":
        if len(params) != 3:
            raise _malformed(span, f"dropdown takes (label, options, default), got {len(params)} params")
        label, options_raw, default_raw = params
        options = options_raw.split("|")  # always >= 1 option; empty text is legal
        try:
            idx = int(default_raw)
        except ValueError:
            raise _malformed(span, f"dropdown default must be an index, got {default_raw!r}")
        if not 0 <= idx < len(options):
            raise _malformed(span, f"dropdown default {idx} out of range for {len(options)} options")
        return AnnotationSite(ordinal, span, widget, {"label": label, "options": options}, idx)

    if widget == "slider":
        if len(params) != 5:
            raise _malformed(span, f"slider takes (label, min, max, step, default), got {len(params)} params")
        label = params[0]
        lo = _parse_float(params[1], span, "slider min")
        hi = _parse_float(params[2], span, "slider max")
        step = _parse_float(params[3], span, "slider step")
        default = _parse_float(params[4], span, "slider default")
        if step <= 0:
            raise _malformed(span, "slider step must be positive")
        if lo > hi:
            raise _malformed(span, "slider min must not exceed max")
        if not _on_lattice(default, lo, hi, step):
            raise _malformed(span, f"slider default {default!r} out of range")
        return AnnotationSite(ordinal, span, widget,
                              {"label": label, "min": lo, "max": hi, "step": step}, default)

    # date
    if len(params) != 2:
        raise _malformed(span, f"date takes (label, default), got {len(params)} params")
    label, default = params
    try:
        _date.fromisoformat(default)
    except ValueError:
        raise _malformed(span, f"date default must be ISO-8601, got {default!r}")
    return AnnotationSite(ordinal, span, widget, {"label": label}, default)


def parse_annotations(code: str) -> list[AnnotationSite]:
    """Scan code for annotation sites; raises on the first malformed one."""
    data = code.encode("utf-8")
    sites: list[AnnotationSite] = []
    i = 0
    n = len(data)
    while i < n:
        if data[i : i + 3] == b"$$[":
            i += 3
            continue
        if data[i : i + 2] == b"$[":
            start = i
            end = data.find(b"]", i + 2)
            if end == -1:
                raise _malformed((start, n), "unterminated annotation")
            body = data[i + 2 : end].decode("utf-8")
            span = (start, end + 1)
            fields = body.split(",")
            sites.append(_parse_site(len(sites), span, fields))
            i = end + 1
            continue
        i += 1
    return sites


def _validate_value(site: AnnotationSite, value: Any) -> Any:
    bad = AnnotationError("value_out_of_constraints", f"ordinal {site.ordinal}", ordinal=site.ordinal)
    if site.widget == "checkbox":
        if not isinstance(value, bool):
            raise bad
        return value
    if site.widget == "dropdown":
        if not isinstance(value, int) or isinstance(value, bool):
            raise bad
        if not 0 <= value < len(site.params["options"]):
            raise bad
        return value
    if site.widget == "slider":
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise bad
        v = float(value)
        if not _on_lattice(v, site.params["min"], site.params["max"], site.params["step"]):
            raise bad
        return v
    if not isinstance(value, str):
        raise bad
    try:
        _date.fromisoformat(value)
    except ValueError:
        raise bad
    return value


def widget_descriptors(sites: list[AnnotationSite], values: dict[int, Any]) -> list[WidgetDescriptor]:
    """Resolve each site to its current value (provided or default)."""
    ordinals = {s.ordinal for s in sites}
    for k in values:
        if k not in ordinals:
            raise AnnotationError("value_out_of_constraints", f"no site with ordinal {k}", ordinal=k)
    out = []
    for s in sites:
        current = _validate_value(s, values[s.ordinal]) if s.ordinal in values else s.default
        constraints: dict[str, Any] = {}
        if s.widget == "dropdown":
            constraints["options"] = list(s.params["options"])
        elif s.widget == "slider":
            constraints = {"min": s.params["min"], "max": s.params["max"], "step": s.params["step"]}
        out.append(WidgetDescriptor(s.ordinal, s.widget, s.params["label"], constraints, current))
    return out


def _token(site: AnnotationSite, value: Any) -> bytes:
    if site.widget == "checkbox":
        return b"true" if value else b"false"
    if site.widget == "dropdown":
        return site.params["options"][value].encode("utf-8")
    if site.widget == "slider":
        return format_decimal(float(value)).encode("utf-8")
    return str(value).encode("utf-8")


def substitute(code: str, sites: list[AnnotationSite], values: dict[int, Any]) -> str:
    """Replace every site span with its value token and unescape "$$["."""
    by_ordinal = {s.ordinal: s for s in sites}
    resolved: dict[int, Any] = {}
    for s in sites:
        resolved[s.ordinal] = _validate_value(s, values[s.ordinal]) if s.ordinal in values else s.default
    data = code.encode("utf-8")
    out = bytearray()
    i = 0
    n = len(data)
    spans = sorted((s.span, s.ordinal) for s in sites)
    next_site = 0
    while i < n:
        if next_site < len(spans) and i == spans[next_site][0][0]:
            (start, end), ordinal = spans[next_site]
            out += _token(by_ordinal[ordinal], resolved[ordinal])
            i = end
            next_site += 1
            continue
        if data[i : i + 3] == b"$$[":
            out += b"$["
            i += 3
            continue
        out.append(data[i])
        i += 1
    return out.decode("utf-8")


def render_code(code: str, values: dict[int, Any]) -> str:
    """parse + substitute in one step (the execution-time path)."""
    return substitute(code, parse_annotations(code), values)
