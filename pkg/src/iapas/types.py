"""Shared domain model for the anomaly-segmentation pipeline.

Every type validates its invariants at construction and is immutable
afterwards, so instances can be shared freely between concurrent tasks.
Box coordinates are normalized to [0, 1] everywhere; pixel coordinates
appear only inside masks, score maps and file I/O.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .errors import ConfigError

SPLIT_NORMAL = "normal"
SPLIT_ANOMALOUS = "anomalous"

DEFAULT_FIXED_PROMPTS = ("abnormal", "defect")

DEFAULT_BLACKLIST = (
    "crack",
    "scratch",
    "defect",
    "damage",
    "flaw",
    "hole",
    "stain",
    "broken",
    "anomaly",
)

DEFAULT_IAP_TEMPLATE_TEXT = (
    "The image contains: {tags}. List short noun or adjective words "
    "describing visual defects or anomalies that could appear on these "
    "objects. Answer with a comma-separated list only."
)

# Detector thresholds resolved by validate_config() when left unset.
OBJECT_BOX_THRESHOLD = 0.2
TEXTURE_BOX_THRESHOLD = 0.1


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ValueError(message)


@dataclass(frozen=True)
class ImageRef:
    """A dataset image: identity, location, dimensions and split membership."""

    id: str
    path: Path
    width: int
    height: int
    category: str
    split: str
    gt_mask_path: Path | None = None

    def __post_init__(self) -> None:
        _require(bool(self.id), "ImageRef.id must be non-empty")
        _require(self.width > 0, f"ImageRef.width must be > 0, got {self.width}")
        _require(self.height > 0, f"ImageRef.height must be > 0, got {self.height}")
        _require(
            self.split in (SPLIT_NORMAL, SPLIT_ANOMALOUS),
            f"ImageRef.split must be '{SPLIT_NORMAL}' or '{SPLIT_ANOMALOUS}', got {self.split!r}",
        )
        object.__setattr__(self, "path", Path(self.path))
        if self.gt_mask_path is not None:
            object.__setattr__(self, "gt_mask_path", Path(self.gt_mask_path))


@dataclass(frozen=True)
class TagSet:
    """Ordered, duplicate-free set of lowercase object-tag phrases."""

    tags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        tags = tuple(self.tags)
        for tag in tags:
            _require(bool(tag), "TagSet tags must be non-empty")
            _require(tag == tag.strip(), f"TagSet tag {tag!r} is not trimmed")
            _require(tag == tag.lower(), f"TagSet tag {tag!r} is not lowercase")
        _require(len(set(tags)) == len(tags), "TagSet tags must not contain duplicates")
        object.__setattr__(self, "tags", tags)

    def __len__(self) -> int:
        return len(self.tags)

    def __iter__(self):
        return iter(self.tags)

    def is_empty(self) -> bool:
        return not self.tags


@dataclass(frozen=True)
class PromptTemplate:
    """Instruction template for the prompt-generating language model.

    ``text`` must contain the placeholder token ``{tags}`` exactly once;
    it is replaced with the harvested object tags at prompt-build time.
    """

    text: str = DEFAULT_IAP_TEMPLATE_TEXT

    def __post_init__(self) -> None:
        count = self.text.count("{tags}")
        if count != 1:
            raise ConfigError(
                f"prompt template must contain exactly one '{{tags}}' placeholder, found {count}"
            )


def dedup_keep_first(items: Iterable[str]) -> tuple[str, ...]:
    """First-occurrence deduplication preserving order."""
    seen: set[str] = set()
    out: list[str] = []
    for item in items:
        if item not in seen:
            seen.add(item)
            out.append(item)
    return tuple(out)


@dataclass(frozen=True)
class PromptBundle:
    """The assembled detector prompt list plus the parts it came from.

    ``final`` is the first-occurrence deduplication of
    adjective_tags ++ fixed_tags ++ object_tags.
    """

    object_tags: TagSet
    adjective_tags: tuple[str, ...]
    fixed_tags: tuple[str, ...] = DEFAULT_FIXED_PROMPTS
    final: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "adjective_tags", tuple(self.adjective_tags))
        object.__setattr__(self, "fixed_tags", tuple(self.fixed_tags))
        object.__setattr__(self, "final", tuple(self.final))
        _require(bool(self.fixed_tags), "PromptBundle.fixed_tags must be non-empty")
        expected = dedup_keep_first(
            (*self.adjective_tags, *self.fixed_tags, *self.object_tags.tags)
        )
        _require(
            self.final == expected,
            "PromptBundle.final must be the deduplication of adjectives ++ fixed ++ object tags",
        )

    @classmethod
    def build(
        cls,
        adjectives: Iterable[str],
        fixed: Iterable[str] = DEFAULT_FIXED_PROMPTS,
        objects: TagSet = TagSet(),
    ) -> "PromptBundle":
        adjectives = tuple(adjectives)
        fixed = tuple(fixed)
        final = dedup_keep_first((*adjectives, *fixed, *objects.tags))
        return cls(object_tags=objects, adjective_tags=adjectives, fixed_tags=fixed, final=final)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in normalized coordinates; x grows right, y grows down."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self) -> None:
        _require(
            0.0 <= self.x0 < self.x1 <= 1.0,
            f"BoundingBox requires 0 <= x0 < x1 <= 1, got x0={self.x0}, x1={self.x1}",
        )
        _require(
            0.0 <= self.y0 < self.y1 <= 1.0,
            f"BoundingBox requires 0 <= y0 < y1 <= 1, got y0={self.y0}, y1={self.y1}",
        )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x0, self.y0, self.x1, self.y1)


@dataclass(frozen=True)
class Detection:
    """One detector hit: box, confidence and the prompt term it matched."""

    box: BoundingBox
    score: float
    phrase: str = ""

    def __post_init__(self) -> None:
        _require(0.0 <= self.score <= 1.0, f"Detection.score must be in [0,1], got {self.score}")


@dataclass(frozen=True)
class DetectionSet:
    """All detections the detector returned for one image."""

    image_id: str
    detections: tuple[Detection, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "detections", tuple(self.detections))

    def __len__(self) -> int:
        return len(self.detections)


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Per-pixel foreground mask stored as a row-major (height, width) bit grid."""

    width: int
    height: int
    bits: np.ndarray

    def __post_init__(self) -> None:
        _require(self.width > 0 and self.height > 0, "BinaryMask dimensions must be positive")
        bits = np.array(self.bits, dtype=bool, copy=True)
        _require(
            bits.shape == (self.height, self.width),
            f"BinaryMask.bits shape {bits.shape} does not match (height={self.height}, width={self.width})",
        )
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_array(cls, array: np.ndarray) -> "BinaryMask":
        array = np.asarray(array)
        _require(array.ndim == 2, "mask array must be 2-D")
        return cls(width=array.shape[1], height=array.shape[0], bits=array.astype(bool))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and bool(np.array_equal(self.bits, other.bits))
        )


@dataclass(frozen=True)
class MaskSet:
    """Segmentation masks aligned index-for-index with the detections that produced them."""

    image_id: str
    masks: tuple[BinaryMask, ...] = ()
    source_detections: tuple[Detection, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "masks", tuple(self.masks))
        object.__setattr__(self, "source_detections", tuple(self.source_detections))
        _require(
            len(self.masks) == len(self.source_detections),
            f"MaskSet requires one mask per detection, got {len(self.masks)} masks "
            f"for {len(self.source_detections)} detections",
        )

    def __len__(self) -> int:
        return len(self.masks)


@dataclass(frozen=True, eq=False)
class ScoreMap:
    """Per-pixel anomaly confidence in [0, 1], stored as 32-bit floats."""

    width: int
    height: int
    values: np.ndarray

    def __post_init__(self) -> None:
        _require(self.width > 0 and self.height > 0, "ScoreMap dimensions must be positive")
        values = np.array(self.values, dtype=np.float32, copy=True)
        _require(
            values.shape == (self.height, self.width),
            f"ScoreMap.values shape {values.shape} does not match (height={self.height}, width={self.width})",
        )
        _require(
            bool(np.all((values >= 0.0) & (values <= 1.0))),
            "ScoreMap values must all be in [0, 1]",
        )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, width: int, height: int) -> "ScoreMap":
        return cls(width=width, height=height, values=np.zeros((height, width), dtype=np.float32))

    @classmethod
    def from_array(cls, array: np.ndarray) -> "ScoreMap":
        array = np.asarray(array)
        _require(array.ndim == 2, "score array must be 2-D")
        return cls(width=array.shape[1], height=array.shape[0], values=array)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ScoreMap):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and bool(np.array_equal(self.values, other.values))
        )


@dataclass(frozen=True)
class SizeThreshold:
    """Area-fraction cutoff separating defect-sized boxes from whole-object boxes."""

    value: float

    def __post_init__(self) -> None:
        _require(
            0.0 < self.value <= 1.0,
            f"SizeThreshold.value must be in (0,1], got {self.value}",
        )


def _check_unit_interval(name: str, value: float) -> None:
    if not 0.0 < value <= 1.0:
        raise ConfigError(f"{name} out of (0,1]: {value}")


@dataclass(frozen=True)
class PipelineConfig:
    """Every knob of the two-stage pipeline.

    ``box_threshold`` and ``text_threshold`` may be left as None and are
    resolved by :func:`validate_config`: 0.2 normally, 0.1 when
    ``texture_mode`` is set. The three enable_* switches select the
    ablation variants (tagging, prompt generation, size filtering).
    """

    box_threshold: float | None = None
    text_threshold: float | None = None
    texture_mode: bool = False
    iou_threshold: float = 0.5
    size_factor: float = 0.8
    normal_sample_count: int = 4
    anomalous_sample_count: int = 8
    seed: int = 111
    enable_tagging: bool = True
    enable_llm: bool = True
    enable_size_filter: bool = True
    blacklist: tuple[str, ...] = DEFAULT_BLACKLIST
    iap_template: PromptTemplate = field(default_factory=PromptTemplate)
    max_adjectives: int = 32
    per_image_size_threshold: bool = False

    def __post_init__(self) -> None:
        if self.box_threshold is not None:
            _check_unit_interval("box_threshold", self.box_threshold)
        if self.text_threshold is not None:
            _check_unit_interval("text_threshold", self.text_threshold)
        _check_unit_interval("iou_threshold", self.iou_threshold)
        _check_unit_interval("size_factor", self.size_factor)
        if self.normal_sample_count < 1:
            raise ConfigError(f"normal_sample_count must be >= 1, got {self.normal_sample_count}")
        if self.anomalous_sample_count < 1:
            raise ConfigError(
                f"anomalous_sample_count must be >= 1, got {self.anomalous_sample_count}"
            )
        if self.max_adjectives < 1:
            raise ConfigError(f"max_adjectives must be >= 1, got {self.max_adjectives}")
        object.__setattr__(
            self, "blacklist", tuple(entry.strip().lower() for entry in self.blacklist)
        )

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "PipelineConfig":
        """Build a config from a parsed JSON document; unknown keys are an error."""
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        values = dict(raw)
        if "iap_template" in values and not isinstance(values["iap_template"], PromptTemplate):
            values["iap_template"] = PromptTemplate(str(values["iap_template"]))
        if "blacklist" in values:
            values["blacklist"] = tuple(values["blacklist"])
        return cls(**values)

    @classmethod
    def from_json_file(cls, path: Path | str) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
        if not isinstance(raw, dict):
            raise ConfigError("config document must be a JSON object")
        return cls.from_dict(raw)

    def to_dict(self) -> dict[str, Any]:
        """JSON-serializable snapshot of the (possibly resolved) config."""
        return {
            "box_threshold": self.box_threshold,
            "text_threshold": self.text_threshold,
            "texture_mode": self.texture_mode,
            "iou_threshold": self.iou_threshold,
            "size_factor": self.size_factor,
            "normal_sample_count": self.normal_sample_count,
            "anomalous_sample_count": self.anomalous_sample_count,
            "seed": self.seed,
            "enable_tagging": self.enable_tagging,
            "enable_llm": self.enable_llm,
            "enable_size_filter": self.enable_size_filter,
            "blacklist": list(self.blacklist),
            "iap_template": self.iap_template.text,
            "max_adjectives": self.max_adjectives,
            "per_image_size_threshold": self.per_image_size_threshold,
        }


def validate_config(config: PipelineConfig) -> PipelineConfig:
    """Resolve unset detector thresholds and re-check every invariant.

    Idempotent: validating an already-resolved config returns an equal one.
    """
    default = TEXTURE_BOX_THRESHOLD if config.texture_mode else OBJECT_BOX_THRESHOLD
    box = config.box_threshold if config.box_threshold is not None else default
    text = config.text_threshold if config.text_threshold is not None else default
    resolved = PipelineConfig(
        box_threshold=box,
        text_threshold=text,
        texture_mode=config.texture_mode,
        iou_threshold=config.iou_threshold,
        size_factor=config.size_factor,
        normal_sample_count=config.normal_sample_count,
        anomalous_sample_count=config.anomalous_sample_count,
        seed=config.seed,
        enable_tagging=config.enable_tagging,
        enable_llm=config.enable_llm,
        enable_size_filter=config.enable_size_filter,
        blacklist=config.blacklist,
        iap_template=config.iap_template,
        max_adjectives=config.max_adjectives,
        per_image_size_threshold=config.per_image_size_threshold,
    )
    return resolved
