"""Recording wrapper: serve from an inner backend while writing replay fixtures.

This is how fixture directories are produced: point a recorder at a live
backend, run the pipeline once, and commit the resulting fixture tree for
offline replay. Responses are stored in canonical wire format, so a
subsequent :class:`~iapas.backends.replay.ReplayBackend` over the same
directory reproduces the recorded run exactly.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

from ..types import Detection, DetectionSet, ImageRef, MaskSet
from .base import (
    InferenceBackend,
    detect_request_key,
    generate_request_key,
    read_image_bytes,
    segment_request_key,
    tag_request_key,
)
from .replay import write_fixture
from .wire import encode_detections, encode_masks


class RecordingBackend(InferenceBackend):
    """Delegates to ``inner`` and persists every response as a fixture."""

    def __init__(self, inner: InferenceBackend, fixture_dir: Path | str) -> None:
        self._inner = inner
        self._dir = Path(fixture_dir)
        self._dir.mkdir(parents=True, exist_ok=True)

    @property
    def identity(self) -> str:
        return f"record:{self._inner.identity}"

    def _tag_image(self, image: ImageRef) -> list[str]:
        tags = self._inner.tag_image(image)
        key = tag_request_key(read_image_bytes(image))
        write_fixture(self._dir, key, {"tags": list(tags)})
        return tags

    def _generate_text(self, prompt: str) -> str:
        text = self._inner.generate_text(prompt)
        write_fixture(self._dir, generate_request_key(prompt), {"text": text})
        return text

    def _detect_regions(
        self,
        image: ImageRef,
        prompts: list[str],
        box_threshold: float,
        text_threshold: float,
    ) -> DetectionSet:
        result = self._inner.detect_regions(image, prompts, box_threshold, text_threshold)
        key = detect_request_key(read_image_bytes(image), prompts, box_threshold, text_threshold)
        write_fixture(self._dir, key, encode_detections(result.detections))
        return result

    def _segment_regions(
        self, image: ImageRef, detections: Sequence[Detection]
    ) -> MaskSet:
        result = self._inner.segment_regions(image, detections)
        key = segment_request_key(read_image_bytes(image), [d.box for d in detections])
        write_fixture(self._dir, key, encode_masks(result.masks))
        return result
