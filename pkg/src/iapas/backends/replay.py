"""Deterministic replay backend serving previously recorded responses.

Fixtures live one file per request at ``<dir>/<method>/<digest>.json``,
each holding the wire-format response payload. Lookups are pure reads,
so the store is safe for concurrent use; a request without a fixture is
a hard error, never a silent default.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Sequence

from ..errors import FixtureMissError
from .base import (
    BackendRequestKey,
    InferenceBackend,
    detect_request_key,
    generate_request_key,
    read_image_bytes,
    segment_request_key,
    tag_request_key,
)
from .wire import (
    parse_detect_response,
    parse_generate_response,
    parse_segment_response,
    parse_tag_response,
)
from ..types import Detection, DetectionSet, ImageRef, MaskSet


def fixture_path(fixture_dir: Path, key: BackendRequestKey) -> Path:
    return Path(fixture_dir) / key.method / f"{key.digest}.json"


def write_fixture(fixture_dir: Path, key: BackendRequestKey, payload: dict[str, Any]) -> Path:
    """Atomically write one response fixture; returns its path."""
    path = fixture_path(fixture_dir, key)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    os.replace(tmp, path)
    return path


def store_digest(fixture_dir: Path) -> str:
    """Content hash of an entire fixture directory (order-independent)."""
    fixture_dir = Path(fixture_dir)
    hasher = hashlib.sha256()
    entries = sorted(
        p.relative_to(fixture_dir).as_posix()
        for p in fixture_dir.rglob("*.json")
        if p.is_file()
    )
    for rel in entries:
        content_hash = hashlib.sha256((fixture_dir / rel).read_bytes()).hexdigest()
        hasher.update(rel.encode("utf-8"))
        hasher.update(b"\x00")
        hasher.update(content_hash.encode("ascii"))
        hasher.update(b"\x00")
    return hasher.hexdigest()


class ReplayBackend(InferenceBackend):
    """Serves recorded responses keyed by canonical request digests."""

    def __init__(self, fixture_dir: Path | str) -> None:
        self._dir = Path(fixture_dir)
        if not self._dir.is_dir():
            raise FixtureMissError(f"fixture directory does not exist: {self._dir}")

    @property
    def identity(self) -> str:
        return f"replay:{store_digest(self._dir)}"

    def _load(self, key: BackendRequestKey) -> Any:
        path = fixture_path(self._dir, key)
        if not path.is_file():
            raise FixtureMissError(f"fixture miss: {key}")
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)

    def _tag_image(self, image: ImageRef) -> list[str]:
        key = tag_request_key(read_image_bytes(image))
        return parse_tag_response(self._load(key))

    def _generate_text(self, prompt: str) -> str:
        return parse_generate_response(self._load(generate_request_key(prompt)))

    def _detect_regions(
        self,
        image: ImageRef,
        prompts: list[str],
        box_threshold: float,
        text_threshold: float,
    ) -> DetectionSet:
        key = detect_request_key(read_image_bytes(image), prompts, box_threshold, text_threshold)
        return parse_detect_response(self._load(key), image.id)

    def _segment_regions(
        self, image: ImageRef, detections: Sequence[Detection]
    ) -> MaskSet:
        key = segment_request_key(read_image_bytes(image), [d.box for d in detections])
        return parse_segment_response(self._load(key), image, detections)
