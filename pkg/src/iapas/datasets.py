"""Dataset ingestion and on-disk codecs.

Two ingestion paths exist: a native scanner for the MVTec-AD directory
convention, and a generic JSON manifest for datasets with other layouts.
Directory entries are sorted lexicographically before id assignment, so
scans are identical across filesystems.

Score maps persist in the ``.iaps`` container: magic ``IAPS``, u16 LE
format version (currently 1), u32 LE width, u32 LE height, then
width*height IEEE-754 binary32 values, little-endian, row-major.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from PIL import Image

from .errors import CodecError, DatasetError
from .types import SPLIT_ANOMALOUS, SPLIT_NORMAL, BinaryMask, ImageRef, ScoreMap

IAPS_MAGIC = b"IAPS"
IAPS_VERSION = 1
_IAPS_HEADER = struct.Struct("<4sHII")

# Guards the u32 dimension fields against absurd allocations (2 gigapixels).
MAX_PIXELS = 1 << 31


@dataclass(frozen=True)
class Category:
    name: str
    images: tuple[ImageRef, ...]


@dataclass(frozen=True)
class DatasetManifest:
    """All images of a dataset, grouped by category."""

    name: str
    root: Path
    categories: tuple[Category, ...]

    def __post_init__(self) -> None:
        ids = [image.id for category in self.categories for image in category.images]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise DatasetError(f"duplicate image id(s) in manifest: {', '.join(dupes[:5])}")

    def category(self, name: str) -> Category:
        for category in self.categories:
            if category.name == name:
                return category
        raise DatasetError(
            f"category {name!r} not found; available: "
            f"{', '.join(c.name for c in self.categories) or '(none)'}"
        )


def _image_size(path: Path) -> tuple[int, int]:
    try:
        with Image.open(path) as img:
            return img.width, img.height
    except Exception as exc:
        raise DatasetError(f"cannot decode image {path}: {exc}") from exc


def _sorted_pngs(directory: Path) -> list[Path]:
    if not directory.is_dir():
        return []
    return sorted(
        (entry for entry in directory.iterdir() if entry.is_file() and entry.suffix == ".png"),
        key=lambda p: p.name,
    )


def scan_mvtec_layout(root: Path | str) -> DatasetManifest:
    """Discover an MVTec-AD-style tree.

    Per category: normal train images at ``<cat>/train/good/*.png``; test
    images at ``<cat>/test/<defect_type>/*.png`` with ground truth at
    ``<cat>/ground_truth/<defect_type>/<stem>_mask.png``. ``test/good``
    images join the anomalous evaluation pool mask-free (all-zero ground
    truth). A defect-type test image without its mask file is a hard
    error.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root does not exist: {root}")
    categories: list[Category] = []
    for cat_dir in sorted((d for d in root.iterdir() if d.is_dir()), key=lambda p: p.name):
        if not (cat_dir / "train").is_dir() and not (cat_dir / "test").is_dir():
            continue
        images: list[ImageRef] = []
        for path in _sorted_pngs(cat_dir / "train" / "good"):
            width, height = _image_size(path)
            images.append(
                ImageRef(
                    id=f"{cat_dir.name}/train/good/{path.stem}",
                    path=path,
                    width=width,
                    height=height,
                    category=cat_dir.name,
                    split=SPLIT_NORMAL,
                )
            )
        test_dir = cat_dir / "test"
        if test_dir.is_dir():
            for defect_dir in sorted(
                (d for d in test_dir.iterdir() if d.is_dir()), key=lambda p: p.name
            ):
                defect_type = defect_dir.name
                for path in _sorted_pngs(defect_dir):
                    width, height = _image_size(path)
                    gt_path: Path | None = None
                    if defect_type != "good":
                        gt_path = (
                            cat_dir / "ground_truth" / defect_type / f"{path.stem}_mask.png"
                        )
                        if not gt_path.is_file():
                            raise DatasetError(
                                f"test image {path} has no ground-truth mask "
                                f"(expected {gt_path})"
                            )
                    images.append(
                        ImageRef(
                            id=f"{cat_dir.name}/test/{defect_type}/{path.stem}",
                            path=path,
                            width=width,
                            height=height,
                            category=cat_dir.name,
                            split=SPLIT_ANOMALOUS,
                            gt_mask_path=gt_path,
                        )
                    )
        categories.append(Category(name=cat_dir.name, images=tuple(images)))
    if not categories:
        raise DatasetError(f"no categories found under {root}")
    return DatasetManifest(name=root.name, root=root, categories=tuple(categories))


def load_manifest_json(path: Path | str) -> DatasetManifest:
    """Load a hand-written dataset manifest; relative paths resolve against the file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise DatasetError(f"cannot read manifest {path}: {exc}") from exc
    base = path.parent
    root = base / raw.get("root", ".")
    categories: list[Category] = []
    for cat_entry in raw.get("categories", []):
        images: list[ImageRef] = []
        for entry in cat_entry.get("images", []):
            image_path = base / entry["path"]
            if "width" in entry and "height" in entry:
                width, height = int(entry["width"]), int(entry["height"])
            else:
                width, height = _image_size(image_path)
            split = entry["split"]
            gt_raw = entry.get("gt_mask_path")
            gt_path = base / gt_raw if gt_raw else None
            if split == SPLIT_ANOMALOUS and gt_path is not None and not gt_path.is_file():
                raise DatasetError(f"manifest image {entry['id']}: missing mask {gt_path}")
            images.append(
                ImageRef(
                    id=entry["id"],
                    path=image_path,
                    width=width,
                    height=height,
                    category=cat_entry["name"],
                    split=split,
                    gt_mask_path=gt_path,
                )
            )
        categories.append(Category(name=cat_entry["name"], images=tuple(images)))
    if not categories:
        raise DatasetError(f"no categories found in manifest {path}")
    return DatasetManifest(name=raw.get("name", path.stem), root=root, categories=tuple(categories))


def load_mask(path: Path | str) -> BinaryMask:
    """Read a PNG ground-truth mask; any nonzero channel value is foreground."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            array = np.asarray(img)
    except Exception as exc:
        raise DatasetError(f"cannot decode mask {path}: {exc}") from exc
    if array.ndim == 3:
        bits = np.any(array != 0, axis=2)
    else:
        bits = array != 0
    if bits.size == 0:
        raise DatasetError(f"mask {path} has zero dimensions")
    return BinaryMask(width=bits.shape[1], height=bits.shape[0], bits=bits)


def write_score_map(score_map: ScoreMap, path: Path | str) -> None:
    """Persist a score map in the .iaps container (bit-exact round trip)."""
    path = Path(path)
    header = _IAPS_HEADER.pack(IAPS_MAGIC, IAPS_VERSION, score_map.width, score_map.height)
    payload = np.ascontiguousarray(score_map.values, dtype="<f4").tobytes()
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(header + payload)
    os.replace(tmp, path)


def read_score_map(path: Path | str) -> ScoreMap:
    data = Path(path).read_bytes()
    if len(data) < _IAPS_HEADER.size or data[:4] != IAPS_MAGIC:
        raise CodecError(f"not an IAPS file: {path}")
    magic, version, width, height = _IAPS_HEADER.unpack_from(data)
    if version != IAPS_VERSION:
        raise CodecError(f"unsupported IAPS version {version} in {path}")
    if width == 0 or height == 0 or width * height > MAX_PIXELS:
        raise CodecError(f"dimension overflow: {width}x{height} in {path}")
    expected = _IAPS_HEADER.size + 4 * width * height
    if len(data) != expected:
        raise CodecError(
            f"truncated payload: expected {expected} bytes for {width}x{height}, "
            f"got {len(data)} in {path}"
        )
    values = np.frombuffer(data, dtype="<f4", offset=_IAPS_HEADER.size).reshape(height, width)
    return ScoreMap(width=width, height=height, values=values)


def write_score_png(score_map: ScoreMap, path: Path | str) -> None:
    """8-bit grayscale visualization of a score map."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pixels = np.round(score_map.values * 255.0).astype(np.uint8)
    tmp = path.with_suffix(path.suffix + ".tmp")
    Image.fromarray(pixels, mode="L").save(tmp, format="PNG")
    os.replace(tmp, path)


def ground_truth_for(image: ImageRef) -> BinaryMask:
    """Ground truth for an evaluation image; mask-free images yield all zeros."""
    if image.gt_mask_path is None:
        return BinaryMask(
            width=image.width,
            height=image.height,
            bits=np.zeros((image.height, image.width), dtype=bool),
        )
    mask = load_mask(image.gt_mask_path)
    if (mask.width, mask.height) != (image.width, image.height):
        raise DatasetError(
            f"mask {image.gt_mask_path} is {mask.width}x{mask.height}, "
            f"image {image.id} is {image.width}x{image.height}"
        )
    return mask


def manifest_to_json(manifest: DatasetManifest) -> dict[str, Any]:
    """JSON form of a manifest (paths relative to the dataset root, POSIX separators)."""

    def _rel(p: Path | None) -> str | None:
        if p is None:
            return None
        try:
            return p.relative_to(manifest.root).as_posix()
        except ValueError:
            return p.as_posix()

    return {
        "name": manifest.name,
        "root": ".",
        "categories": [
            {
                "name": category.name,
                "images": [
                    {
                        "id": image.id,
                        "path": _rel(image.path),
                        "width": image.width,
                        "height": image.height,
                        "split": image.split,
                        "gt_mask_path": _rel(image.gt_mask_path),
                    }
                    for image in category.images
                ],
            }
            for category in manifest.categories
        ],
    }
