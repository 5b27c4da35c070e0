"""Replay-fixture mirroring for served responses.

File layout and bytes match what the pipeline's recording client
writes: one ``<method>/<digest>.json`` per request, sorted keys,
two-space indent, trailing newline.
"""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path
from typing import Any


class FixtureWriter:
    def __init__(self, root: Path | str) -> None:
        self._root = Path(root)
        self._root.mkdir(parents=True, exist_ok=True)

    @property
    def root(self) -> Path:
        return self._root

    def write(self, method: str, digest: str, payload: dict[str, Any]) -> Path:
        path = self._root / method / f"{digest}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        # Unique temp name: concurrent identical requests must not
        # interleave writes before the atomic rename.
        tmp = path.with_name(f".{digest}.{os.getpid()}.{threading.get_ident()}.tmp")
        tmp.write_text(
            json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        os.replace(tmp, path)
        return path
