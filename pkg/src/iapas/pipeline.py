"""Two-stage anomaly-segmentation pipeline.

Stage 1 (per category, sequential): harvest object tags from a seeded
sample of normal images, derive the size threshold from detections on a
seeded sample of test images, and expand the tag set into anomaly
descriptors via the text generator. Stage 2 (per image, parallel):
detect candidate regions with the assembled prompt list, suppress
duplicates, drop object-sized boxes, segment the survivors, and
aggregate confidence-weighted masks into a score map.

Every artifact is deterministic given (dataset, config, backend): JSON
is written with sorted keys and no timestamps, paths are stored
relative with POSIX separators, and all randomness flows from the
config seed through the portable PRNG.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Sequence

from . import metrics as metrics_mod
from .backends.base import InferenceBackend
from .datasets import (
    Category,
    DatasetManifest,
    ground_truth_for,
    read_score_map,
    scan_mvtec_layout,
    write_score_map,
    write_score_png,
)
from .errors import DatasetError
from .geometry import aggregate_scores, box_area, filter_by_size, nms
from .prompting import (
    assemble_final_prompt,
    build_iap_prompt,
    merge_tag_sets,
    parse_llm_output,
    sanitize_tags,
)
from .rng import sample_without_replacement
from .types import (
    SPLIT_ANOMALOUS,
    SPLIT_NORMAL,
    DetectionSet,
    ImageRef,
    MaskSet,
    PipelineConfig,
    PromptBundle,
    PromptTemplate,
    ScoreMap,
    SizeThreshold,
    TagSet,
    validate_config,
)

# Recorded in results when the size filter is disabled; never applied.
DISABLED_THRESHOLD = SizeThreshold(1.0)


@dataclass(frozen=True)
class PreprocessResult:
    """Everything Stage 1 produces; sufficient to run Stage 2 on any image."""

    category: str
    prompt_bundle: PromptBundle
    size_threshold: SizeThreshold
    sampled_normal_ids: tuple[str, ...]
    sampled_anomalous_ids: tuple[str, ...]
    config_snapshot: PipelineConfig

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "category": self.category,
            "prompt_bundle": {
                "object_tags": list(self.prompt_bundle.object_tags.tags),
                "adjective_tags": list(self.prompt_bundle.adjective_tags),
                "fixed_tags": list(self.prompt_bundle.fixed_tags),
                "final": list(self.prompt_bundle.final),
            },
            "size_threshold": self.size_threshold.value,
            "sampled_normal_ids": list(self.sampled_normal_ids),
            "sampled_anomalous_ids": list(self.sampled_anomalous_ids),
            "config": self.config_snapshot.to_dict(),
        }

    @classmethod
    def from_json_dict(cls, raw: dict[str, Any]) -> "PreprocessResult":
        bundle_raw = raw["prompt_bundle"]
        bundle = PromptBundle(
            object_tags=TagSet(tags=tuple(bundle_raw["object_tags"])),
            adjective_tags=tuple(bundle_raw["adjective_tags"]),
            fixed_tags=tuple(bundle_raw["fixed_tags"]),
            final=tuple(bundle_raw["final"]),
        )
        return cls(
            category=raw["category"],
            prompt_bundle=bundle,
            size_threshold=SizeThreshold(raw["size_threshold"]),
            sampled_normal_ids=tuple(raw["sampled_normal_ids"]),
            sampled_anomalous_ids=tuple(raw["sampled_anomalous_ids"]),
            config_snapshot=PipelineConfig.from_dict(raw["config"]),
        )


@dataclass(frozen=True)
class ImageResult:
    """Stage 2 output for one image, with every intermediate stage kept."""

    image_id: str
    raw_detections: DetectionSet
    post_nms: DetectionSet
    filtered: DetectionSet
    mask_set: MaskSet
    score_map: ScoreMap

    def __post_init__(self) -> None:
        raw = len(self.raw_detections.detections)
        kept = len(self.post_nms.detections)
        final = len(self.filtered.detections)
        if not final <= kept <= raw:
            raise ValueError(
                f"stage monotonicity violated for {self.image_id}: {raw} -> {kept} -> {final}"
            )
        if len(self.mask_set.masks) != final:
            raise ValueError(
                f"mask count {len(self.mask_set.masks)} != surviving detections {final} "
                f"for {self.image_id}"
            )


def sample_images(
    images: Sequence[ImageRef], split: str, count: int, seed: int
) -> list[ImageRef]:
    """Deterministic sample without replacement from one split.

    Selection depends only on (ordering of images, split, count, seed);
    fewer than count available returns all of them.
    """
    candidates = [image for image in images if image.split == split]
    if not candidates:
        raise DatasetError(f"no images with split {split!r} to sample from")
    return sample_without_replacement(candidates, count, seed)


def compute_size_threshold(
    anomalous_sample: Sequence[ImageRef],
    object_tags: TagSet,
    config: PipelineConfig,
    backend: InferenceBackend,
) -> SizeThreshold:
    """Area cutoff = size_factor x the largest box found with the object tags.

    With no tags to prompt with, or no detections anywhere, the whole
    frame (area 1.0) stands in for the largest object; no detector call
    is made when the tag set is empty.
    """
    config = validate_config(config)
    if not object_tags.tags:
        return SizeThreshold(config.size_factor)
    max_area = 0.0
    for image in anomalous_sample:
        detections = backend.detect_regions(
            image, object_tags.tags, config.box_threshold, config.text_threshold
        )
        for detection in detections.detections:
            max_area = max(max_area, box_area(detection.box))
    if max_area == 0.0:
        return SizeThreshold(config.size_factor)
    return SizeThreshold(config.size_factor * max_area)


def preprocess_category(
    category: Category, config: PipelineConfig, backend: InferenceBackend
) -> PreprocessResult:
    """Stage 1: tags, size threshold, generated descriptors, final prompt list."""
    config = validate_config(config)

    sampled_normal_ids: tuple[str, ...] = ()
    tags = TagSet()
    if config.enable_tagging:
        normal_sample = sample_images(
            category.images, SPLIT_NORMAL, config.normal_sample_count, config.seed
        )
        sampled_normal_ids = tuple(image.id for image in normal_sample)
        per_image = [
            sanitize_tags(backend.tag_image(image), config.blacklist)
            for image in normal_sample
        ]
        tags = merge_tag_sets(per_image)

    sampled_anomalous_ids: tuple[str, ...] = ()
    if config.enable_size_filter:
        anomalous_sample = sample_images(
            category.images, SPLIT_ANOMALOUS, config.anomalous_sample_count, config.seed
        )
        sampled_anomalous_ids = tuple(image.id for image in anomalous_sample)
        threshold = compute_size_threshold(anomalous_sample, tags, config, backend)
    else:
        threshold = DISABLED_THRESHOLD

    adjectives: list[str] = []
    if config.enable_llm:
        prompt = build_iap_prompt(config.iap_template, tags)
        completion = backend.generate_text(prompt)
        adjectives = parse_llm_output(completion, config.max_adjectives)

    bundle = assemble_final_prompt(adjectives, objects=tags)
    return PreprocessResult(
        category=category.name,
        prompt_bundle=bundle,
        size_threshold=threshold,
        sampled_normal_ids=sampled_normal_ids,
        sampled_anomalous_ids=sampled_anomalous_ids,
        config_snapshot=config,
    )


def segment_image(
    image: ImageRef,
    pre: PreprocessResult,
    config: PipelineConfig,
    backend: InferenceBackend,
) -> ImageResult:
    """Stage 2 for one image: detect, suppress, size-filter, segment, aggregate."""
    config = validate_config(config)
    raw = backend.detect_regions(
        image, pre.prompt_bundle.final, config.box_threshold, config.text_threshold
    )
    post_nms = nms(raw.detections, config.iou_threshold)
    if config.enable_size_filter:
        threshold = pre.size_threshold
        if config.per_image_size_threshold and post_nms:
            local_max = max(box_area(d.box) for d in post_nms)
            if local_max > 0.0:
                threshold = SizeThreshold(config.size_factor * local_max)
        filtered = filter_by_size(post_nms, threshold)
    else:
        filtered = list(post_nms)
    mask_set = backend.segment_regions(image, filtered)
    score_map = aggregate_scores(mask_set, image.width, image.height)
    return ImageResult(
        image_id=image.id,
        raw_detections=DetectionSet(image_id=image.id, detections=tuple(raw.detections)),
        post_nms=DetectionSet(image_id=image.id, detections=tuple(post_nms)),
        filtered=DetectionSet(image_id=image.id, detections=tuple(filtered)),
        mask_set=mask_set,
        score_map=score_map,
    )


def config_digest(config: PipelineConfig) -> str:
    """SHA-256 of the resolved config's canonical JSON form."""
    canonical = json.dumps(
        validate_config(config).to_dict(), sort_keys=True, separators=(",", ":")
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_json_atomic(path: Path, document: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = json.dumps(document, sort_keys=True, indent=2) + "\n"
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(payload, encoding="utf-8")
    os.replace(tmp, path)


def _evaluation_images(category: Category) -> list[ImageRef]:
    return [image for image in category.images if image.split == SPLIT_ANOMALOUS]


def segment_category(
    manifest: DatasetManifest,
    category_name: str,
    pre: PreprocessResult,
    config: PipelineConfig,
    backend: InferenceBackend,
    output_dir: Path | str,
    jobs: int | None = None,
) -> dict[str, Any]:
    """Stage 2 over every test image of a category, plus artifacts on disk.

    Writes <out>/<category>/scores/<image_id>.{iaps,png}, a run manifest,
    and (when the pooled ground truth has positive pixels) report.json.
    Returns the run manifest document.
    """
    config = validate_config(config)
    category = manifest.category(category_name)
    images = _evaluation_images(category)
    out_root = Path(output_dir) / category.name
    workers = jobs if jobs and jobs > 0 else (os.cpu_count() or 1)

    # Independent per-image tasks; manifest order, not completion order.
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(
            pool.map(lambda image: segment_image(image, pre, config, backend), images)
        )

    index = []
    pairs = []
    for image, result in zip(images, results):
        iaps_rel = Path("scores") / f"{image.id}.iaps"
        png_rel = Path("scores") / f"{image.id}.png"
        write_score_map(result.score_map, out_root / iaps_rel)
        write_score_png(result.score_map, out_root / png_rel)
        index.append(
            {
                "id": image.id,
                "split": image.split,
                "raw_detections": len(result.raw_detections.detections),
                "post_nms": len(result.post_nms.detections),
                "filtered": len(result.filtered.detections),
                "scores_iaps": iaps_rel.as_posix(),
                "scores_png": png_rel.as_posix(),
            }
        )
        pairs.append((result.score_map, ground_truth_for(image)))

    digest = config_digest(config)
    metrics_entry: Any = "skipped"
    if pairs:
        pixel_pool = metrics_mod.pool_pixels(pairs)
        if pixel_pool.positives > 0:
            report = metrics_mod.evaluate_pool(pixel_pool)
            metrics_entry = {
                "ap": report.ap,
                "f1_max": report.f1_max,
                "pixels": report.pixels,
                "positives": report.positives,
            }
            write_json_atomic(
                out_root / "report.json",
                {
                    "dataset": manifest.name,
                    "category": category.name,
                    "ap": report.ap,
                    "f1_max": report.f1_max,
                    "pixels": report.pixels,
                    "positives": report.positives,
                    "pooling": "category",
                    "aggregation": "mean-over-categories",
                    "config_digest": digest,
                },
            )

    run_manifest = {
        "dataset": manifest.name,
        "category": category.name,
        "version": _package_version(),
        "backend_identity": backend.identity,
        "config": config.to_dict(),
        "config_digest": digest,
        "stage_order": "detect, nms, size-filter, segment, aggregate",
        "preprocess": pre.to_json_dict(),
        "images": index,
        "metrics": metrics_entry,
    }
    write_json_atomic(out_root / "manifest.json", run_manifest)
    return run_manifest


def run_category(
    dataset_root: Path | str | DatasetManifest,
    category_name: str,
    config: PipelineConfig,
    backend: InferenceBackend,
    output_dir: Path | str,
    jobs: int | None = None,
) -> dict[str, Any]:
    """Stage 1 + Stage 2 + evaluation for one category."""
    manifest = (
        dataset_root
        if isinstance(dataset_root, DatasetManifest)
        else scan_mvtec_layout(dataset_root)
    )
    config = validate_config(config)
    pre = preprocess_category(manifest.category(category_name), config, backend)
    return segment_category(manifest, category_name, pre, config, backend, output_dir, jobs)


def evaluate_predictions(
    manifest: DatasetManifest,
    category_name: str,
    predictions_dir: Path | str,
) -> metrics_mod.MetricReport:
    """Score previously written .iaps predictions against ground truth."""
    category = manifest.category(category_name)
    pairs = []
    for image in _evaluation_images(category):
        score_path = Path(predictions_dir) / category.name / "scores" / f"{image.id}.iaps"
        if not score_path.is_file():
            raise DatasetError(f"missing prediction {score_path} for image {image.id}")
        pairs.append((read_score_map(score_path), ground_truth_for(image)))
    return metrics_mod.evaluate_category(pairs)


# Table-style ablation grid: (label, tagging, llm, size filter). O = on, X = off.
ABLATION_ROWS: tuple[tuple[str, bool, bool, bool], ...] = (
    ("XXX", False, False, False),
    ("OXX", True, False, False),
    ("OOX", True, True, False),
    ("XOX", False, True, False),
    ("XOO", False, True, True),
    ("OOO", True, True, True),
)


def run_ablation(
    dataset_root: Path | str | DatasetManifest,
    category_name: str,
    config: PipelineConfig,
    backend: InferenceBackend,
    output_dir: Path | str,
    jobs: int | None = None,
) -> list[dict[str, Any]]:
    """Run all toggle combinations of the three pipeline switches.

    Each row executes the full pipeline into <out>/<label>/ and reports
    that run's metrics; rows whose pooled ground truth has no positive
    pixels carry null metrics.
    """
    manifest = (
        dataset_root
        if isinstance(dataset_root, DatasetManifest)
        else scan_mvtec_layout(dataset_root)
    )
    rows = []
    for label, tagging, llm, size_filter in ABLATION_ROWS:
        variant = validate_config(
            replace(
                config,
                enable_tagging=tagging,
                enable_llm=llm,
                enable_size_filter=size_filter,
            )
        )
        run_manifest = run_category(
            manifest, category_name, variant, backend, Path(output_dir) / label, jobs
        )
        entry: dict[str, Any] = {
            "label": label,
            "tagging": tagging,
            "llm": llm,
            "size_filter": size_filter,
            "ap": None,
            "f1_max": None,
        }
        if isinstance(run_manifest["metrics"], dict):
            entry["ap"] = run_manifest["metrics"]["ap"]
            entry["f1_max"] = run_manifest["metrics"]["f1_max"]
        rows.append(entry)
    return rows


def _package_version() -> str:
    from . import __version__

    return __version__
