"""Golden wire-schema loading and validation.

The schema files are shared verbatim with the pipeline client. Every
request is validated before dispatch and every response before send; a
response that fails validation is a server fault, never sent.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any

from jsonschema import Draft202012Validator

METHODS = ("tag", "generate", "detect", "segment")

_SCHEMA_NAMES = tuple(
    [f"{method}_request" for method in METHODS]
    + [f"{method}_response" for method in METHODS]
    + ["error_response", "health_response"]
)

ENV_SCHEMA_DIR = "MODELSERVER_SCHEMAS"


def find_schema_dir(explicit: Path | str | None = None) -> Path:
    """Locate the shared schema directory.

    Order: explicit argument, the MODELSERVER_SCHEMAS environment
    variable, then an upward search from this file for a ``schemas/``
    directory (which finds the repo checkout layout).
    """
    if explicit is not None:
        return Path(explicit)
    env = os.environ.get(ENV_SCHEMA_DIR)
    if env:
        return Path(env)
    for base in Path(__file__).resolve().parents:
        candidate = base / "schemas"
        if (candidate / "tag_request.schema.json").is_file():
            return candidate
    raise FileNotFoundError(
        "cannot locate the wire schema directory; "
        f"pass --schemas or set {ENV_SCHEMA_DIR}"
    )


class SchemaIndex:
    """Compiled validators for every wire schema in one directory."""

    def __init__(self, schema_dir: Path | str) -> None:
        self._dir = Path(schema_dir)
        self._validators: dict[str, Draft202012Validator] = {}
        for name in _SCHEMA_NAMES:
            path = self._dir / f"{name}.schema.json"
            if not path.is_file():
                raise FileNotFoundError(f"wire schema missing: {path}")
            document = json.loads(path.read_text(encoding="utf-8"))
            Draft202012Validator.check_schema(document)
            self._validators[name] = Draft202012Validator(document)

    @property
    def directory(self) -> Path:
        return self._dir

    def error_for(self, kind: str, payload: Any) -> str | None:
        """First violation as "<json path>: <message>", or None if valid."""
        errors = sorted(
            self._validators[kind].iter_errors(payload),
            key=lambda err: [str(part) for part in err.absolute_path],
        )
        if not errors:
            return None
        first = errors[0]
        return f"{first.json_path}: {first.message}"

    def is_valid(self, kind: str, payload: Any) -> bool:
        return self.error_for(kind, payload) is None
