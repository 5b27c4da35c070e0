"""Batch fixture recording from a scripted request list.

The script is a JSON array; each entry names a method and its inputs,
with image paths resolved against the script file's directory:

    {"method": "tag",      "image": "imgs/000.png"}
    {"method": "generate", "prompt": "...", "max_tokens": 256}
    {"method": "detect",   "image": "...", "prompts": ["..."],
     "box_threshold": 0.2, "text_threshold": 0.2}
    {"method": "segment",  "image": "...", "boxes": [[0.1, 0.1, 0.5, 0.5]]}

Entries run through the same dispatch path as the HTTP server, so a
recorded fixture is exactly what a live request would have produced.
Per-entry failures are reported and the run continues; an empty script
is a successful no-op.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path
from typing import Any

from .service import InferenceService, ModelFailure, RequestRejected

DEFAULT_MAX_TOKENS = 256


def load_script(path: Path | str) -> list[dict[str, Any]]:
    document = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(document, list):
        raise ValueError("request script must be a JSON array")
    for index, entry in enumerate(document):
        if not isinstance(entry, dict):
            raise ValueError(f"script entry {index} must be an object")
    return document


def _image_b64(entry: dict[str, Any], base_dir: Path) -> str:
    raw = entry.get("image")
    if not isinstance(raw, str) or not raw:
        raise ValueError("entry needs an 'image' path")
    return base64.b64encode((base_dir / raw).read_bytes()).decode("ascii")


def build_wire_payload(entry: dict[str, Any], base_dir: Path) -> tuple[str, dict[str, Any]]:
    """Translate one script entry into (method, wire request payload)."""
    method = entry.get("method")
    if method == "tag":
        return method, {"image_png_b64": _image_b64(entry, base_dir)}
    if method == "generate":
        return method, {
            "prompt": entry.get("prompt"),
            "max_tokens": entry.get("max_tokens", DEFAULT_MAX_TOKENS),
        }
    if method == "detect":
        return method, {
            "image_png_b64": _image_b64(entry, base_dir),
            "prompts": entry.get("prompts"),
            "box_threshold": entry.get("box_threshold"),
            "text_threshold": entry.get("text_threshold"),
        }
    if method == "segment":
        return method, {
            "image_png_b64": _image_b64(entry, base_dir),
            "boxes": entry.get("boxes"),
        }
    raise ValueError(f"unknown method {method!r}")


def record_fixtures(
    script_path: Path | str,
    service: InferenceService,
) -> list[dict[str, Any]]:
    """Run every script entry, returning one report row per entry."""
    script_path = Path(script_path)
    entries = load_script(script_path)
    report: list[dict[str, Any]] = []
    for index, entry in enumerate(entries):
        try:
            method, payload = build_wire_payload(entry, script_path.parent)
            _, digest = service.dispatch(method, payload)
        except (ValueError, OSError, RequestRejected, ModelFailure) as exc:
            report.append(
                {
                    "index": index,
                    "method": entry.get("method"),
                    "status": "failed",
                    "error": str(exc),
                }
            )
            continue
        report.append(
            {"index": index, "method": method, "status": "ok", "key": f"{method}/{digest}"}
        )
    return report
