"""Shared fixtures: bundled mini dataset, replay fixtures, stub backend."""

from __future__ import annotations

from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import pytest
from PIL import Image

from iapas.backends import InferenceBackend, ReplayBackend
from iapas.datasets import DatasetManifest, scan_mvtec_layout
from iapas.types import (
    BinaryMask,
    BoundingBox,
    Detection,
    DetectionSet,
    ImageRef,
    MaskSet,
)

DATA_DIR = Path(__file__).resolve().parent / "data"

# Verdict lines recorded by the acceptance suite, one per criterion;
# printed after the run so they survive pytest's output capture.
ACCEPTANCE_VERDICTS: list[str] = []


def record_verdict(line: str) -> None:
    ACCEPTANCE_VERDICTS.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_VERDICTS:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def mini_dataset_dir() -> Path:
    return DATA_DIR / "mini_dataset"


@pytest.fixture(scope="session")
def fixture_dir() -> Path:
    return DATA_DIR / "fixtures"


@pytest.fixture(scope="session")
def schemas_dir() -> Path:
    return Path(__file__).resolve().parent.parent / "schemas"


@pytest.fixture(scope="session")
def replay_backend(fixture_dir: Path) -> ReplayBackend:
    return ReplayBackend(fixture_dir)


@pytest.fixture(scope="session")
def mini_manifest(mini_dataset_dir: Path) -> DatasetManifest:
    return scan_mvtec_layout(mini_dataset_dir)


def write_png(path: Path, pixels: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(pixels, mode="L").save(path, format="PNG")


def make_image_ref(
    directory: Path,
    image_id: str = "cat/test/defect/000",
    width: int = 16,
    height: int = 16,
    split: str = "anomalous",
    seed: int = 0,
) -> ImageRef:
    path = directory / f"{image_id.replace('/', '_')}.png"
    rng = np.random.RandomState(seed)
    write_png(path, rng.randint(0, 256, size=(height, width)).astype(np.uint8))
    return ImageRef(
        id=image_id,
        path=path,
        width=width,
        height=height,
        category=image_id.split("/")[0],
        split=split,
    )


def full_mask(width: int, height: int, value: bool = True) -> BinaryMask:
    return BinaryMask(
        width=width, height=height, bits=np.full((height, width), value, dtype=bool)
    )


class StubBackend(InferenceBackend):
    """Programmable in-memory backend that counts calls per method."""

    def __init__(
        self,
        tags: Sequence[str] | Callable[[ImageRef], list[str]] = (),
        completion: str | Callable[[str], str] = "",
        detector: Callable[[ImageRef, list[str]], Sequence[Detection]] | None = None,
        segmenter: Callable[[ImageRef, tuple[Detection, ...]], MaskSet] | None = None,
    ) -> None:
        self._tags = tags
        self._completion = completion
        self._detector = detector
        self._segmenter = segmenter
        self.calls = {"tag": 0, "generate": 0, "detect": 0, "segment": 0}

    @property
    def identity(self) -> str:
        return "stub:test"

    def _tag_image(self, image: ImageRef) -> list[str]:
        self.calls["tag"] += 1
        if callable(self._tags):
            return self._tags(image)
        return list(self._tags)

    def _generate_text(self, prompt: str) -> str:
        self.calls["generate"] += 1
        if callable(self._completion):
            return self._completion(prompt)
        return self._completion

    def _detect_regions(
        self,
        image: ImageRef,
        prompts: list[str],
        box_threshold: float,
        text_threshold: float,
    ) -> DetectionSet:
        self.calls["detect"] += 1
        found = self._detector(image, prompts) if self._detector else ()
        return DetectionSet(image_id=image.id, detections=tuple(found))

    def _segment_regions(
        self, image: ImageRef, detections: tuple[Detection, ...]
    ) -> MaskSet:
        self.calls["segment"] += 1
        if self._segmenter:
            return self._segmenter(image, detections)
        masks = tuple(
            rasterize_box(d.box, image.width, image.height) for d in detections
        )
        return MaskSet(image_id=image.id, masks=masks, source_detections=tuple(detections))


def rasterize_box(box: BoundingBox, width: int, height: int) -> BinaryMask:
    bits = np.zeros((height, width), dtype=bool)
    x0, x1 = int(round(box.x0 * width)), int(round(box.x1 * width))
    y0, y1 = int(round(box.y0 * height)), int(round(box.y1 * height))
    bits[y0:y1, x0:x1] = True
    return BinaryMask(width=width, height=height, bits=bits)
