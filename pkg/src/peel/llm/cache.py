"""Content-addressed store for ensemble task records."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Optional

from ..canon import pretty_json


def atomic_write_text(path: Path, text: str) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class TaskCache:
    """Records live at ``<root>/<task_kind>/<input_hash>.json``."""

    def __init__(self, root):
        self.root = Path(root)

    def path(self, task_kind: str, input_hash: str) -> Path:
        return self.root / task_kind / f"{input_hash}.json"

    def get(self, task_kind: str, input_hash: str) -> Optional[dict]:
        p = self.path(task_kind, input_hash)
        try:
            return json.loads(p.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        except json.JSONDecodeError:
            return None  # a torn file from another writer is treated as a miss

    def put(self, task_kind: str, input_hash: str, record: dict) -> None:
        p = self.path(task_kind, input_hash)
        if p.exists():
            return
        atomic_write_text(p, pretty_json(record))
