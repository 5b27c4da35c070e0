"""JSON wire format shared by the remote client, the replay store and the sidecar.

All requests are JSON objects; images and masks travel as base64 PNG.
Response payloads are validated field by field before any domain object
is constructed, so an invalid response can never leak a partially-built
value into the pipeline.
"""

from __future__ import annotations

import base64
import binascii
import io
from typing import Any, Sequence

import numpy as np
from PIL import Image

from ..errors import SchemaError
from ..types import BinaryMask, BoundingBox, Detection, DetectionSet, ImageRef, MaskSet

# Completion budget sent with every generate request; descriptor lists are short.
GENERATE_MAX_TOKENS = 256

ENDPOINT_PATHS = {
    "tag": "/v1/tag",
    "generate": "/v1/generate",
    "detect": "/v1/detect",
    "segment": "/v1/segment",
}


def encode_image_b64(image_bytes: bytes) -> str:
    return base64.b64encode(image_bytes).decode("ascii")


def tag_request(image_bytes: bytes) -> dict[str, Any]:
    return {"image_png_b64": encode_image_b64(image_bytes)}


def generate_request(prompt: str, max_tokens: int = GENERATE_MAX_TOKENS) -> dict[str, Any]:
    return {"prompt": prompt, "max_tokens": max_tokens}


def detect_request(
    image_bytes: bytes,
    prompts: Sequence[str],
    box_threshold: float,
    text_threshold: float,
) -> dict[str, Any]:
    return {
        "image_png_b64": encode_image_b64(image_bytes),
        "prompts": list(prompts),
        "box_threshold": box_threshold,
        "text_threshold": text_threshold,
    }


def segment_request(image_bytes: bytes, boxes: Sequence[BoundingBox]) -> dict[str, Any]:
    return {
        "image_png_b64": encode_image_b64(image_bytes),
        "boxes": [[b.x0, b.y0, b.x1, b.y1] for b in boxes],
    }


def _expect_object(payload: Any) -> dict[str, Any]:
    if not isinstance(payload, dict):
        raise SchemaError(f"response must be a JSON object, got {type(payload).__name__}")
    return payload


def _expect_list(payload: dict[str, Any], field: str) -> list[Any]:
    value = payload.get(field)
    if not isinstance(value, list):
        raise SchemaError(f"{field}: expected a list, got {type(value).__name__}")
    return value


def _expect_number(value: Any, field: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{field}: expected a number, got {type(value).__name__}")
    return float(value)


def parse_tag_response(payload: Any) -> list[str]:
    tags = _expect_list(_expect_object(payload), "tags")
    for index, tag in enumerate(tags):
        if not isinstance(tag, str):
            raise SchemaError(f"tags[{index}]: expected a string, got {type(tag).__name__}")
    return list(tags)


def parse_generate_response(payload: Any) -> str:
    text = _expect_object(payload).get("text")
    if not isinstance(text, str):
        raise SchemaError(f"text: expected a string, got {type(text).__name__}")
    return text


def _parse_box(raw: Any, field: str) -> BoundingBox:
    if not isinstance(raw, list) or len(raw) != 4:
        raise SchemaError(f"{field}: expected [x0, y0, x1, y1]")
    coords = [_expect_number(raw[i], f"{field}[{i}]") for i in range(4)]
    for i, coord in enumerate(coords):
        if not 0.0 <= coord <= 1.0:
            raise SchemaError(f"{field}[{i}]: coordinate {coord} out of [0, 1]")
    x0, y0, x1, y1 = coords
    if not (x0 < x1 and y0 < y1):
        raise SchemaError(f"{field}: degenerate box (requires x0 < x1 and y0 < y1)")
    return BoundingBox(x0, y0, x1, y1)


def parse_detect_response(payload: Any, image_id: str) -> DetectionSet:
    entries = _expect_list(_expect_object(payload), "detections")
    detections: list[Detection] = []
    for index, entry in enumerate(entries):
        field = f"detections[{index}]"
        if not isinstance(entry, dict):
            raise SchemaError(f"{field}: expected an object")
        box = _parse_box(entry.get("box"), f"{field}.box")
        score = _expect_number(entry.get("score"), f"{field}.score")
        if not 0.0 <= score <= 1.0:
            raise SchemaError(f"{field}.score: {score} out of [0, 1]")
        phrase = entry.get("phrase", "")
        if not isinstance(phrase, str):
            raise SchemaError(f"{field}.phrase: expected a string")
        detections.append(Detection(box=box, score=score, phrase=phrase))
    return DetectionSet(image_id=image_id, detections=tuple(detections))


def decode_mask_png(data_b64: str, field: str) -> np.ndarray:
    """Decode a base64 PNG into a boolean grid; any nonzero channel is foreground."""
    try:
        raw = base64.b64decode(data_b64, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise SchemaError(f"{field}: invalid base64 ({exc})") from exc
    try:
        with Image.open(io.BytesIO(raw)) as img:
            array = np.asarray(img)
    except Exception as exc:
        raise SchemaError(f"{field}: PNG decode failure ({exc})") from exc
    if array.ndim == 3:
        return np.any(array != 0, axis=2)
    return array != 0


def encode_mask_png(mask: BinaryMask) -> str:
    """Inverse of :func:`decode_mask_png`: single-channel PNG, 255 = foreground."""
    img = Image.fromarray(mask.bits.astype(np.uint8) * 255, mode="L")
    buffer = io.BytesIO()
    img.save(buffer, format="PNG")
    return base64.b64encode(buffer.getvalue()).decode("ascii")


def parse_segment_response(
    payload: Any, image: ImageRef, detections: Sequence[Detection]
) -> MaskSet:
    entries = _expect_list(_expect_object(payload), "masks")
    if len(entries) != len(detections):
        raise SchemaError(
            f"mask count mismatch: got {len(entries)} masks for {len(detections)} boxes"
        )
    masks: list[BinaryMask] = []
    for index, entry in enumerate(entries):
        field = f"masks[{index}]"
        if not isinstance(entry, str):
            raise SchemaError(f"{field}: expected a base64 string")
        bits = decode_mask_png(entry, field)
        if bits.shape != (image.height, image.width):
            raise SchemaError(
                f"{field}: mask dimension mismatch: got {bits.shape[1]}x{bits.shape[0]}, "
                f"image is {image.width}x{image.height}"
            )
        masks.append(BinaryMask(width=image.width, height=image.height, bits=bits))
    return MaskSet(
        image_id=image.id, masks=tuple(masks), source_detections=tuple(detections)
    )


def encode_detections(detections: Sequence[Detection]) -> dict[str, Any]:
    """Wire-format detect response for a detection list."""
    return {
        "detections": [
            {"box": [d.box.x0, d.box.y0, d.box.x1, d.box.y1], "score": d.score, "phrase": d.phrase}
            for d in detections
        ]
    }


def encode_masks(masks: Sequence[BinaryMask]) -> dict[str, Any]:
    """Wire-format segment response for a mask list."""
    return {"masks": [encode_mask_png(mask) for mask in masks]}
