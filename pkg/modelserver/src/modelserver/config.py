"""Server configuration."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path


@dataclass(frozen=True)
class ServerConfig:
    """Bind address, one model identifier per endpoint, and recording.

    When ``record_dir`` is set, every served response is also written as
    a replay fixture keyed by the canonical request digest, so a live
    session doubles as fixture capture. ``schema_dir`` of None means
    autodiscovery (see :func:`modelserver.schemas.find_schema_dir`).
    """

    host: str = "127.0.0.1"
    port: int = 8701
    models: dict[str, str] = field(
        default_factory=lambda: {
            "tag": "synthetic",
            "generate": "synthetic",
            "detect": "synthetic",
            "segment": "synthetic",
        }
    )
    device: str = "cpu"
    record_dir: Path | None = None
    schema_dir: Path | None = None

    def __post_init__(self) -> None:
        if not 1 <= self.port <= 65535:
            raise ValueError(f"port must be in [1, 65535], got {self.port}")
        missing = {"tag", "generate", "detect", "segment"} - set(self.models)
        if missing:
            raise ValueError(f"missing model identifier(s) for: {', '.join(sorted(missing))}")
