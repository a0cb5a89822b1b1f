"""Regenerate docs/annotation_corpus.json.

The corpus is hand-specified: every accepted entry pairs an annotation with
the token its default substitutes to, and the expected output is assembled
by plain string composition here, never by the parser under test. Rejected
entries carry the expected malformed span, computed from the known prefix
layout.
"""

from __future__ import annotations

import json
from pathlib import Path

# (annotation, token its default substitutes to)
PAIRS = [
    ("$[checkbox,Show,true]", "true"),
    ("$[checkbox,Show parks,false]", "false"),
    ("$[checkbox,3D buildings,true]", "true"),
    ("$[checkbox,x,false]", "false"),
    ("$[checkbox,,true]", "true"),
    ("$[slider,Height,0,500,10,100]", "100"),
    ("$[slider,Height,0,500,10,0]", "0"),
    ("$[slider,Height,0,500,10,500]", "500"),
    ("$[slider,Opacity,0,1,0.1,0.5]", "0.5"),
    ("$[slider,Temp,-10,10,2.5,-5]", "-5"),
    ("$[slider,Temp,-10,10,2.5,7.5]", "7.5"),
    ("$[slider,Zoom,1,20,1,12]", "12"),
    ("$[slider,Radius,0,0.001,0.0001,0.0005]", "0.0005"),
    ("$[dropdown,Mark,bar|point|line,0]", "bar"),
    ("$[dropdown,Mark,bar|point|line,1]", "point"),
    ("$[dropdown,Mark,bar|point|line,2]", "line"),
    ("$[dropdown,Method,zscore|minmax,1]", "minmax"),
    ("$[dropdown,One,only,0]", "only"),
    ("$[dropdown,City,Boston|Chicago|Milan,2]", "Milan"),
    ("$[dropdown,Scale,linear|log,0]", "linear"),
    ("$[date,Start,2024-01-01]", "2024-01-01"),
    ("$[date,End,2023-12-31]", "2023-12-31"),
    ("$[date,Capture,2020-02-29]", "2020-02-29"),
]

CONTEXTS = [
    ('{"mark": "', '"}'),
    ("height = ", "  # meters"),
    ("when ", " then"),
    ("def f():\n    return ", "\n"),
    ("naive text before ", " and after"),
    ("x=(", ")"),
    ("'", "'"),
]


def accepted_entries() -> list[dict]:
    out = []
    for ann, tok in PAIRS:
        out.append({"code": ann, "sites": 1, "substituted": tok})
    for i, (ann, tok) in enumerate(PAIRS):
        pre, post = CONTEXTS[i % len(CONTEXTS)]
        out.append({"code": pre + ann + post, "sites": 1, "substituted": pre + tok + post})
    # multi-site
    for i in range(0, len(PAIRS) - 2, 3):
        (a1, t1), (a2, t2), (a3, t3) = PAIRS[i], PAIRS[i + 1], PAIRS[i + 2]
        code = f"a: {a1}, b: {a2}\nc: {a3}"
        sub = f"a: {t1}, b: {t2}\nc: {t3}"
        out.append({"code": code, "sites": 3, "substituted": sub})
    # escapes: substituted text contains a literal "$[" by design, so it is
    # final (never re-parsed); pinned to exact expected bytes instead
    out += [
        {"code": "cost: $$[notwidget]", "sites": 0,
         "substituted": "cost: $[notwidget]", "reparse": False},
        {"code": "$$[x] $[checkbox,A,true]", "sites": 1,
         "substituted": "$[x] true", "reparse": False},
        {"code": "$$[a]$$[b]", "sites": 0, "substituted": "$[a]$[b]", "reparse": False},
        {"code": "$[checkbox,A,false] then $$[lit]", "sites": 1,
         "substituted": "false then $[lit]", "reparse": False},
    ]
    # zero-site inputs
    out += [
        {"code": "no annotations here", "sites": 0, "substituted": "no annotations here"},
        {"code": "", "sites": 0, "substituted": ""},
        {"code": "plain $ dollar", "sites": 0, "substituted": "plain $ dollar"},
        {"code": "a ] stray bracket", "sites": 0, "substituted": "a ] stray bracket"},
    ]
    return out


# (prefix, bad annotation or unterminated tail, reason substring, terminated?)
REJECTED = [
    ("", "$[checkbox,Show]", "checkbox takes", True),
    ("", "$[checkbox,Show,yes]", "true/false", True),
    ("", "$[toggle,Show,true]", "unknown widget", True),
    ("", "$[dropdown,Mark,bar|point,5]", "out of range", True),
    ("", "$[dropdown,Mark,bar|point,x]", "index", True),
    ("", "$[dropdown,Mark,bar|point]", "dropdown takes", True),
    ("", "$[slider,H,0,10,1]", "slider takes", True),
    ("", "$[slider,H,0,10,0,5]", "positive", True),
    ("", "$[slider,H,10,0,1,5]", "exceed", True),
    ("", "$[slider,H,0,10,1,11]", "out of range", True),
    ("", "$[slider,H,0,10,3,5]", "out of range", True),
    ("", "$[slider,H,a,10,1,5]", "not a number", True),
    ("", "$[date,Start,January 1]", "ISO-8601", True),
    ("", "$[date,Start,2024-13-01]", "ISO-8601", True),
    ("", "$[date,2024-01-01]", "date takes", True),
    ("", "$[checkbox,Show,true", "unterminated", False),
    ("x = ", "$[slider,H,0,10", "unterminated", False),
    ("", "$[]", "unknown widget", True),
    ("", "$[,a,b]", "unknown widget", True),
    ("", "$[checkbox,A,true,extra]", "checkbox takes", True),
    ("", "$[dropdown,M,a|b,1,extra]", "dropdown takes", True),
    ("", "$[slider,H,0,10,1,5,9]", "slider takes", True),
    ("pre ", "$[date,D,nope]", "ISO-8601", True),
    ("", "$[checkbox,A$,true]", "'$'", True),
    ("", "$[slider,H,0,10,1,5.3]", "out of range", True),
]


def rejected_entries() -> list[dict]:
    out = []
    for pre, ann, reason, terminated in REJECTED:
        code = pre + ann + ("" if terminated else "")
        start = len(pre.encode())
        end = start + len(ann.encode()) if terminated else len(code.encode())
        out.append({"code": code, "span": [start, end], "reason": reason})
    return out


def main() -> None:
    corpus = {"accepted": accepted_entries(), "rejected": rejected_entries()}
    target = Path(__file__).resolve().parent.parent / "docs" / "annotation_corpus.json"
    target.write_text(json.dumps(corpus, indent=1, ensure_ascii=False) + "\n")
    print(f"wrote {target}: {len(corpus['accepted'])} accepted, "
          f"{len(corpus['rejected'])} rejected")


if __name__ == "__main__":
    main()
