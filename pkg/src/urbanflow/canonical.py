"""Canonical JSON serialization and content hashing.

Every document this package persists, caches, or hashes goes through
`canonical_bytes`: UTF-8, key-sorted, compact separators, no NaN/Inf.
Equal values always produce identical bytes, so content hashes are
well-defined.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any


def canonical_bytes(obj: Any) -> bytes:
    """Serialize a JSON-compatible object to canonical UTF-8 bytes."""
    return json.dumps(
        obj,
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
        allow_nan=False,
    ).encode("utf-8")


def from_canonical(data: bytes | str) -> Any:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return json.loads(data)


def content_hash(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def hash_obj(obj: Any) -> str:
    return content_hash(canonical_bytes(obj))


def format_decimal(x: float) -> str:
    """Shortest round-trip decimal text for a float (integers lose the '.0')."""
    if x == int(x) and abs(x) < 1e16:
        return str(int(x))
    return repr(float(x))
