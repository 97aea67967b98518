"""Canonical JSON encoding and content digests."""

from __future__ import annotations

import hashlib
import json
from typing import Any


def canonical_json(obj: Any) -> str:
    # sorted keys, no insignificant whitespace
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def digest(obj: Any) -> str:
    if isinstance(obj, bytes):
        data = obj
    elif isinstance(obj, str):
        data = obj.encode("utf-8")
    else:
        data = canonical_json(obj).encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def pretty_json(obj: Any) -> str:
    """Stable human-readable form used for every file written to a run tree."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
