"""Canonical request identity for the replay fixture store.

The pipeline client derives the same keys from the same requests, so
fixtures recorded here are served by its replay backend with no
coordination beyond this recipe. Fields are joined with the unit
separator byte 0x1F and hashed with SHA-256:

* ``tag``:      method name, image-bytes SHA-256 hex
* ``generate``: method name, prompt text (UTF-8)
* ``detect``:   method name, image-bytes SHA-256 hex, each prompt,
                box threshold, text threshold (thresholds with 6 decimals)
* ``segment``:  method name, image-bytes SHA-256 hex, each box as
                "x0,y0,x1,y1" with 6 decimals

Threshold and coordinate floats survive a JSON round trip exactly, so
hashing the values as received matches hashing them as sent.
"""

from __future__ import annotations

import hashlib
from typing import Sequence

_US = "\x1f"


def _digest(method: str, *parts: str) -> str:
    encoded = _US.join((method, *parts)).encode("utf-8")
    return hashlib.sha256(encoded).hexdigest()


def image_digest(image_bytes: bytes) -> str:
    return hashlib.sha256(image_bytes).hexdigest()


def tag_digest(image_bytes: bytes) -> str:
    return _digest("tag", image_digest(image_bytes))


def generate_digest(prompt: str) -> str:
    return _digest("generate", prompt)


def detect_digest(
    image_bytes: bytes,
    prompts: Sequence[str],
    box_threshold: float,
    text_threshold: float,
) -> str:
    return _digest(
        "detect",
        image_digest(image_bytes),
        *prompts,
        f"{box_threshold:.6f}",
        f"{text_threshold:.6f}",
    )


def segment_digest(image_bytes: bytes, boxes: Sequence[Sequence[float]]) -> str:
    formatted = (",".join(f"{coord:.6f}" for coord in box) for box in boxes)
    return _digest("segment", image_digest(image_bytes), *formatted)


def fixture_relpath(method: str, digest: str) -> str:
    return f"{method}/{digest}.json"
