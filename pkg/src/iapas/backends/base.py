"""Backend contract and canonical request identity.

Every model interaction goes through the four-method
:class:`InferenceBackend` interface. Requests have a canonical byte
encoding whose SHA-256 digest keys replay fixtures; two logically equal
requests (same image bytes, same prompt list, same thresholds) always
map to the same key regardless of how they were constructed.

Canonical encoding, fields joined by the unit separator byte 0x1F:

* ``tag``:      method name, image-bytes SHA-256 hex
* ``generate``: method name, prompt text (UTF-8)
* ``detect``:   method name, image-bytes SHA-256 hex, each prompt,
                box threshold, text threshold (thresholds with 6 decimals)
* ``segment``:  method name, image-bytes SHA-256 hex, each box as
                "x0,y0,x1,y1" with 6 decimals
"""

from __future__ import annotations

import hashlib
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence

from ..errors import DatasetError
from ..types import BoundingBox, Detection, DetectionSet, ImageRef, MaskSet

_US = "\x1f"

METHOD_TAG = "tag"
METHOD_GENERATE = "generate"
METHOD_DETECT = "detect"
METHOD_SEGMENT = "segment"

METHODS = (METHOD_TAG, METHOD_GENERATE, METHOD_DETECT, METHOD_SEGMENT)


@dataclass(frozen=True)
class BackendRequestKey:
    """Identity of one backend request: method plus canonical-encoding digest."""

    method: str
    digest: str

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown backend method {self.method!r}")

    def __str__(self) -> str:
        return f"{self.method}/{self.digest}"


def image_bytes_digest(image_bytes: bytes) -> str:
    return hashlib.sha256(image_bytes).hexdigest()


def _key(method: str, *parts: str) -> BackendRequestKey:
    encoded = _US.join((method, *parts)).encode("utf-8")
    return BackendRequestKey(method=method, digest=hashlib.sha256(encoded).hexdigest())


def format_box(box: BoundingBox) -> str:
    return f"{box.x0:.6f},{box.y0:.6f},{box.x1:.6f},{box.y1:.6f}"


def tag_request_key(image_bytes: bytes) -> BackendRequestKey:
    return _key(METHOD_TAG, image_bytes_digest(image_bytes))


def generate_request_key(prompt: str) -> BackendRequestKey:
    return _key(METHOD_GENERATE, prompt)


def detect_request_key(
    image_bytes: bytes,
    prompts: Sequence[str],
    box_threshold: float,
    text_threshold: float,
) -> BackendRequestKey:
    return _key(
        METHOD_DETECT,
        image_bytes_digest(image_bytes),
        *prompts,
        f"{box_threshold:.6f}",
        f"{text_threshold:.6f}",
    )


def segment_request_key(
    image_bytes: bytes, boxes: Sequence[BoundingBox]
) -> BackendRequestKey:
    return _key(METHOD_SEGMENT, image_bytes_digest(image_bytes), *(format_box(b) for b in boxes))


def read_image_bytes(image: ImageRef) -> bytes:
    try:
        return image.path.read_bytes()
    except OSError as exc:
        raise DatasetError(f"cannot read image file {image.path}: {exc}") from exc


class InferenceBackend(ABC):
    """Four-method boundary behind which all foundation-model inference lives.

    The public methods enforce the shared preconditions (and the empty-box
    short-circuit) so every implementation behaves identically at the edge;
    subclasses provide the _-prefixed hooks. Implementations must tolerate
    concurrent calls.
    """

    def tag_image(self, image: ImageRef) -> list[str]:
        """Raw object-tag strings for one image, pre-hygiene; may be empty."""
        return self._tag_image(image)

    def generate_text(self, prompt: str) -> str:
        """Raw completion text for an instruction prompt."""
        if not prompt:
            raise ValueError("prompt must be non-empty")
        return self._generate_text(prompt)

    def detect_regions(
        self,
        image: ImageRef,
        prompts: Sequence[str],
        box_threshold: float,
        text_threshold: float,
    ) -> DetectionSet:
        """Open-vocabulary detections for the prompt list, already thresholded."""
        if not prompts:
            raise ValueError("prompts must be non-empty")
        for name, value in ("box_threshold", box_threshold), ("text_threshold", text_threshold):
            if not 0.0 < value <= 1.0:
                raise ValueError(f"{name} must be in (0,1], got {value}")
        return self._detect_regions(image, list(prompts), box_threshold, text_threshold)

    def segment_regions(self, image: ImageRef, detections: Sequence[Detection]) -> MaskSet:
        """One mask per detection box, aligned by index.

        An empty detection list yields an empty MaskSet without touching
        the backend.
        """
        detections = tuple(detections)
        if not detections:
            return MaskSet(image_id=image.id)
        return self._segment_regions(image, detections)

    @property
    @abstractmethod
    def identity(self) -> str:
        """Stable description of this backend for run manifests."""

    @abstractmethod
    def _tag_image(self, image: ImageRef) -> list[str]: ...

    @abstractmethod
    def _generate_text(self, prompt: str) -> str: ...

    @abstractmethod
    def _detect_regions(
        self,
        image: ImageRef,
        prompts: list[str],
        box_threshold: float,
        text_threshold: float,
    ) -> DetectionSet: ...

    @abstractmethod
    def _segment_regions(
        self, image: ImageRef, detections: tuple[Detection, ...]
    ) -> MaskSet: ...
