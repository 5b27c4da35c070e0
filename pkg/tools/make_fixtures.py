#!/usr/bin/env python3
"""Regenerate the committed mini dataset and replay fixtures.

The mini dataset is a synthetic 64x64 "carpet" category: two normal
training images, one defect-free test image, and two test images with
rectangular defects plus exact ground-truth masks. Fixtures are produced
by running every pipeline toggle combination against a rule-based
synthetic backend wrapped in a recorder, so the committed fixture tree
covers exactly the requests the test suite replays.

Images and fixtures must be regenerated together: fixture keys hash the
PNG bytes, and PNG encoders may differ across library versions.

Usage: python3 tools/make_fixtures.py [--data-dir tests/data]
"""

from __future__ import annotations

import argparse
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from iapas.backends import InferenceBackend, RecordingBackend
from iapas.pipeline import run_ablation
from iapas.types import (
    BinaryMask,
    BoundingBox,
    Detection,
    DetectionSet,
    ImageRef,
    MaskSet,
    PipelineConfig,
)

SIZE = 64

# Ground-truth defect rectangles in pixels, (x0, x1, y0, y1) half-open.
DEFECT_A = (40, 52, 8, 20)
DEFECT_B1 = (30, 40, 6, 14)
DEFECT_B2 = (46, 60, 44, 58)

# Detector boxes: ground truth dilated by one pixel (imperfect localization).
BOX_A = BoundingBox(39 / 64, 7 / 64, 53 / 64, 21 / 64)
BOX_A_DUP = BoundingBox(40 / 64, 7 / 64, 54 / 64, 21 / 64)
BOX_B1 = BoundingBox(29 / 64, 5 / 64, 41 / 64, 15 / 64)
BOX_B2 = BoundingBox(45 / 64, 43 / 64, 61 / 64, 59 / 64)
BOX_WHOLE_OBJECT = BoundingBox(0.05, 0.05, 0.95, 0.95)

TAG_PHRASE = "cloth fabric gray material pattern texture"
TAGGED_COMPLETION = "discoloration, fray, rip, bubble, stain, burn"
FALLBACK_COMPLETION = "smudge, tear, dent"


def _texture(seed: int) -> np.ndarray:
    rng = np.random.RandomState(seed)
    return rng.randint(96, 161, size=(SIZE, SIZE)).astype(np.uint8)


def _stamp_defect(pixels: np.ndarray, rect: tuple[int, int, int, int], seed: int) -> None:
    x0, x1, y0, y1 = rect
    rng = np.random.RandomState(seed)
    pixels[y0:y1, x0:x1] = rng.randint(20, 33, size=(y1 - y0, x1 - x0)).astype(np.uint8)


def _save_gray(pixels: np.ndarray, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(pixels, mode="L").save(path, format="PNG")


def _save_mask(rects: list[tuple[int, int, int, int]], path: Path) -> None:
    bits = np.zeros((SIZE, SIZE), dtype=np.uint8)
    for x0, x1, y0, y1 in rects:
        bits[y0:y1, x0:x1] = 255
    _save_gray(bits, path)


def build_mini_dataset(root: Path) -> None:
    carpet = root / "carpet"
    _save_gray(_texture(1), carpet / "train" / "good" / "000.png")
    _save_gray(_texture(2), carpet / "train" / "good" / "001.png")
    _save_gray(_texture(3), carpet / "test" / "good" / "000.png")

    hole0 = _texture(4)
    _stamp_defect(hole0, DEFECT_A, 40)
    _save_gray(hole0, carpet / "test" / "hole" / "000.png")
    _save_mask([DEFECT_A], carpet / "ground_truth" / "hole" / "000_mask.png")

    hole1 = _texture(5)
    _stamp_defect(hole1, DEFECT_B1, 50)
    _stamp_defect(hole1, DEFECT_B2, 51)
    _save_gray(hole1, carpet / "test" / "hole" / "001.png")
    _save_mask([DEFECT_B1, DEFECT_B2], carpet / "ground_truth" / "hole" / "001_mask.png")


def _rasterize_box(box: BoundingBox, width: int, height: int) -> BinaryMask:
    bits = np.zeros((height, width), dtype=bool)
    x0, x1 = int(round(box.x0 * width)), int(round(box.x1 * width))
    y0, y1 = int(round(box.y0 * height)), int(round(box.y1 * height))
    bits[y0:y1, x0:x1] = True
    return BinaryMask(width=width, height=height, bits=bits)


class SyntheticBackend(InferenceBackend):
    """Deterministic stand-in models keyed on image id and prompt content.

    The tagger knows the carpet tag phrase (one image also emits a
    blacklisted tag to exercise hygiene), the generator answers the
    tag-bearing prompt with defect adjectives and anything else with a
    fallback list, the detector returns a whole-object box plus defect
    boxes whose presence and confidence depend on prompt richness, and
    the segmenter rasterizes each box.
    """

    @property
    def identity(self) -> str:
        return "synthetic:mini-carpet-v1"

    def _tag_image(self, image: ImageRef) -> list[str]:
        if image.id.endswith("train/good/000"):
            return ["Cloth fabric gray material pattern texture"]
        return [TAG_PHRASE, "hole"]

    def _generate_text(self, prompt: str) -> str:
        if TAG_PHRASE in prompt:
            return TAGGED_COMPLETION
        return FALLBACK_COMPLETION

    def _detect_regions(
        self,
        image: ImageRef,
        prompts: list[str],
        box_threshold: float,
        text_threshold: float,
    ) -> DetectionSet:
        tagged = TAG_PHRASE in prompts
        rich = "discoloration" in prompts
        fallback = "smudge" in prompts
        fixed = "abnormal" in prompts
        hole0 = image.id.endswith("test/hole/000")
        hole1 = image.id.endswith("test/hole/001")

        found: list[Detection] = []
        if tagged:
            found.append(Detection(BOX_WHOLE_OBJECT, 0.9, "fabric"))
        elif fixed:
            found.append(Detection(BOX_WHOLE_OBJECT, 0.55, "abnormal"))
        if rich:
            if hole0:
                found.append(Detection(BOX_A, 0.85, "discoloration"))
                found.append(Detection(BOX_A_DUP, 0.45, "discoloration"))
            if hole1:
                found.append(Detection(BOX_B2, 0.88, "rip"))
                found.append(Detection(BOX_B1, 0.8, "fray"))
        elif fallback:
            if hole0:
                found.append(Detection(BOX_A, 0.7, "smudge"))
                found.append(Detection(BOX_A_DUP, 0.45, "smudge"))
            if hole1:
                found.append(Detection(BOX_B2, 0.65, "dent"))
                found.append(Detection(BOX_B1, 0.6, "tear"))
        elif fixed:
            if hole1:
                found.append(Detection(BOX_B2, 0.4, "defect"))
        return DetectionSet(image_id=image.id, detections=tuple(found))

    def _segment_regions(
        self, image: ImageRef, detections: tuple[Detection, ...]
    ) -> MaskSet:
        masks = tuple(
            _rasterize_box(d.box, image.width, image.height) for d in detections
        )
        return MaskSet(image_id=image.id, masks=masks, source_detections=tuple(detections))


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument(
        "--data-dir",
        default=Path(__file__).resolve().parent.parent / "tests" / "data",
        type=Path,
    )
    args = parser.parse_args(argv)

    dataset_dir = args.data_dir / "mini_dataset"
    fixture_dir = args.data_dir / "fixtures"
    for directory in (dataset_dir, fixture_dir):
        if directory.exists():
            shutil.rmtree(directory)

    build_mini_dataset(dataset_dir)
    backend = RecordingBackend(SyntheticBackend(), fixture_dir)
    with tempfile.TemporaryDirectory() as scratch:
        rows = run_ablation(dataset_dir, "carpet", PipelineConfig(), backend, scratch)
    for row in rows:
        ap = "-" if row["ap"] is None else f"{row['ap']:.4f}"
        f1 = "-" if row["f1_max"] is None else f"{row['f1_max']:.4f}"
        print(f"{row['label']}: ap={ap} f1_max={f1}")
    fixture_count = sum(1 for _ in fixture_dir.rglob("*.json"))
    print(f"wrote {dataset_dir} and {fixture_count} fixtures under {fixture_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
