"""Shared fixtures: live sidecar instances and deterministic sample images."""

from __future__ import annotations

import socket
import threading
import time
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest
import uvicorn
from PIL import Image

from modelserver.app import create_app
from modelserver.config import ServerConfig

REPO_ROOT = Path(__file__).resolve().parents[2]
SCHEMA_DIR = REPO_ROOT / "schemas"
MINI_DATASET = REPO_ROOT / "tests" / "data" / "mini_dataset"

# Planted defect rectangle in sample images: pixel (x0, x1, y0, y1), half-open.
DEFECT_RECT = (30, 46, 10, 22)
SAMPLE_SIZE = 64


def write_sample_image(path: Path, seed: int = 7, defect: bool = True) -> Path:
    """64x64 gray texture, optionally with one dark rectangle."""
    rng = np.random.RandomState(seed)
    pixels = rng.randint(96, 161, size=(SAMPLE_SIZE, SAMPLE_SIZE)).astype(np.uint8)
    if defect:
        x0, x1, y0, y1 = DEFECT_RECT
        pixels[y0:y1, x0:x1] = 24
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(pixels, mode="L").save(path, format="PNG")
    return path


@pytest.fixture
def sample_image(tmp_path: Path) -> Path:
    return write_sample_image(tmp_path / "sample.png")


def _free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


class LiveServer:
    """Uvicorn in a daemon thread, torn down via the should_exit flag."""

    def __init__(self, app) -> None:
        self._config = uvicorn.Config(
            app=app, host="127.0.0.1", port=_free_port(), log_level="warning"
        )
        self._server = uvicorn.Server(self._config)
        self._thread = threading.Thread(target=self._server.run, daemon=True)

    @property
    def base_url(self) -> str:
        return f"http://127.0.0.1:{self._config.port}"

    def start(self, timeout: float = 10.0) -> "LiveServer":
        self._thread.start()
        deadline = time.monotonic() + timeout
        while not self._server.started:
            if time.monotonic() > deadline or not self._thread.is_alive():
                raise RuntimeError("server failed to start")
            time.sleep(0.02)
        return self

    def stop(self) -> None:
        self._server.should_exit = True
        self._thread.join(timeout=5.0)


@pytest.fixture(scope="session")
def sidecar(tmp_path_factory: pytest.TempPathFactory) -> SimpleNamespace:
    """One synthetic-model server for the whole session, recording fixtures."""
    record_dir = tmp_path_factory.mktemp("recorded-fixtures")
    config = ServerConfig(schema_dir=SCHEMA_DIR, record_dir=record_dir)
    server = LiveServer(create_app(config)).start()
    yield SimpleNamespace(base_url=server.base_url, record_dir=record_dir)
    server.stop()


@pytest.fixture
def server_factory():
    """Start short-lived servers with custom model sets; stops them after."""
    servers: list[LiveServer] = []

    def start(app) -> str:
        server = LiveServer(app).start()
        servers.append(server)
        return server.base_url

    yield start
    for server in servers:
        server.stop()
