"""Endpoint dispatch shared by the HTTP app and the scripted recorder.

One call path for both entry points: validate the request against the
golden schema, decode the payload, run the model under its mutex,
encode the response, validate it against the golden schema, and mirror
it to the fixture store when recording. A request fault raises
:class:`RequestRejected` (HTTP 400); everything that goes wrong on the
server side of the contract raises :class:`ModelFailure` (HTTP 500) --
an invalid response is never sent.
"""

from __future__ import annotations

import base64
import binascii
import io
import threading
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
from PIL import Image

from . import hashing
from .models import ModelSet
from .recording import FixtureWriter
from .schemas import METHODS, SchemaIndex


class RequestRejected(Exception):
    """The request violates the wire contract."""


class ModelFailure(Exception):
    """A model raised, or produced output that fails the wire contract."""


def encode_mask_png(bits: np.ndarray) -> str:
    """Boolean grid to base64 single-channel PNG, 255 = foreground."""
    image = Image.fromarray(bits.astype(np.uint8) * 255, mode="L")
    buffer = io.BytesIO()
    image.save(buffer, format="PNG")
    return base64.b64encode(buffer.getvalue()).decode("ascii")


class InferenceService:
    def __init__(
        self,
        models: ModelSet,
        schemas: SchemaIndex,
        record_dir: Path | str | None = None,
    ) -> None:
        self._models = models
        self._schemas = schemas
        self._recorder = FixtureWriter(record_dir) if record_dir else None
        self._locks = {method: threading.Lock() for method in METHODS}

    @property
    def models(self) -> ModelSet:
        return self._models

    def health(self) -> dict[str, Any]:
        payload = {"status": "ok", "models": self._models.identities()}
        self._ensure_valid_response("health_response", payload)
        return payload

    def dispatch(self, method: str, payload: Any) -> tuple[dict[str, Any], str]:
        """Serve one request; returns (response payload, fixture digest)."""
        if method not in METHODS:
            raise RequestRejected(f"unknown method {method!r}")
        message = self._schemas.error_for(f"{method}_request", payload)
        if message is not None:
            raise RequestRejected(message)
        response, digest = getattr(self, f"_{method}")(payload)
        self._ensure_valid_response(f"{method}_response", response)
        if self._recorder is not None:
            try:
                self._recorder.write(method, digest, response)
            except OSError as exc:
                raise ModelFailure(f"fixture recording failed: {exc}") from exc
        return response, digest

    def handle(self, method: str, payload: Any) -> dict[str, Any]:
        return self.dispatch(method, payload)[0]

    def _ensure_valid_response(self, kind: str, payload: Any) -> None:
        message = self._schemas.error_for(kind, payload)
        if message is not None:
            raise ModelFailure(f"response failed wire validation: {message}")

    def _run(self, method: str, call: Callable[[], Any]) -> Any:
        try:
            with self._locks[method]:
                return call()
        except Exception as exc:
            raise ModelFailure(f"{method} model failure: {exc}") from exc

    @staticmethod
    def _decode_image(payload: dict[str, Any]) -> tuple[bytes, Image.Image]:
        try:
            image_bytes = base64.b64decode(payload["image_png_b64"], validate=True)
        except (binascii.Error, ValueError) as exc:
            raise RequestRejected(f"image_png_b64: invalid base64 ({exc})") from exc
        try:
            image = Image.open(io.BytesIO(image_bytes))
            image.load()
        except Exception as exc:
            raise RequestRejected(f"image_png_b64: image decode failure ({exc})") from exc
        return image_bytes, image

    def _tag(self, payload: dict[str, Any]) -> tuple[dict[str, Any], str]:
        image_bytes, image = self._decode_image(payload)
        tags = self._run("tag", lambda: self._models.tagger.tag(image))
        return {"tags": list(tags)}, hashing.tag_digest(image_bytes)

    def _generate(self, payload: dict[str, Any]) -> tuple[dict[str, Any], str]:
        prompt, max_tokens = payload["prompt"], payload["max_tokens"]
        text = self._run(
            "generate", lambda: self._models.generator.generate(prompt, max_tokens)
        )
        return {"text": text}, hashing.generate_digest(prompt)

    def _detect(self, payload: dict[str, Any]) -> tuple[dict[str, Any], str]:
        image_bytes, image = self._decode_image(payload)
        prompts = list(payload["prompts"])
        box_threshold = float(payload["box_threshold"])
        text_threshold = float(payload["text_threshold"])
        found = self._run(
            "detect",
            lambda: self._models.detector.detect(
                image, prompts, box_threshold, text_threshold
            ),
        )
        response = {
            "detections": [
                {"box": list(d.box), "score": d.score, "phrase": d.phrase}
                for d in found
            ]
        }
        digest = hashing.detect_digest(image_bytes, prompts, box_threshold, text_threshold)
        return response, digest

    def _segment(self, payload: dict[str, Any]) -> tuple[dict[str, Any], str]:
        image_bytes, image = self._decode_image(payload)
        boxes = payload["boxes"]
        _check_box_geometry(boxes)
        masks = self._run(
            "segment",
            lambda: self._models.segmenter.segment(
                image, [tuple(box) for box in boxes]
            ),
        )
        if len(masks) != len(boxes):
            raise ModelFailure(
                f"segment model returned {len(masks)} masks for {len(boxes)} boxes"
            )
        expected = (image.height, image.width)
        for index, mask in enumerate(masks):
            if mask.shape != expected:
                raise ModelFailure(
                    f"masks[{index}]: segment model returned shape {mask.shape}, "
                    f"image is {expected}"
                )
        response = {"masks": [encode_mask_png(mask) for mask in masks]}
        return response, hashing.segment_digest(image_bytes, boxes)


def _check_box_geometry(boxes: Sequence[Sequence[float]]) -> None:
    # JSON Schema cannot express the cross-field ordering constraint.
    for index, (x0, y0, x1, y1) in enumerate(boxes):
        if not (x0 < x1 and y0 < y1):
            raise RequestRejected(
                f"boxes[{index}]: degenerate box (requires x0 < x1 and y0 < y1)"
            )
