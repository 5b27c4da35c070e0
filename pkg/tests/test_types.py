"""Domain type construction and validation rules."""

import json

import numpy as np
import pytest

from iapas.errors import ConfigError
from iapas.types import (
    DEFAULT_BLACKLIST,
    DEFAULT_FIXED_PROMPTS,
    BinaryMask,
    BoundingBox,
    Detection,
    DetectionSet,
    ImageRef,
    MaskSet,
    PipelineConfig,
    PromptBundle,
    PromptTemplate,
    ScoreMap,
    SizeThreshold,
    TagSet,
    dedup_keep_first,
    validate_config,
)


class TestImageRef:
    def test_valid(self, tmp_path):
        ref = ImageRef(
            id="cat/test/hole/000", path=tmp_path / "x.png", width=64, height=48,
            category="cat", split="anomalous",
        )
        assert ref.width == 64

    @pytest.mark.parametrize("width,height", [(0, 4), (4, 0), (-1, 4)])
    def test_rejects_bad_dimensions(self, tmp_path, width, height):
        with pytest.raises(ValueError):
            ImageRef(
                id="x", path=tmp_path / "x.png", width=width, height=height,
                category="c", split="normal",
            )

    def test_rejects_unknown_split(self, tmp_path):
        with pytest.raises(ValueError):
            ImageRef(
                id="x", path=tmp_path / "x.png", width=4, height=4,
                category="c", split="validation",
            )


class TestTagSet:
    def test_accepts_clean_tags(self):
        tags = TagSet(tags=("metal part", "wood"))
        assert tags.tags == ("metal part", "wood")

    @pytest.mark.parametrize("bad", [("Upper",), (" pad ",), ("",), ("a", "a")])
    def test_rejects_dirty_tags(self, bad):
        with pytest.raises(ValueError):
            TagSet(tags=bad)

    def test_phrase_tags_allowed(self):
        TagSet(tags=("cloth fabric gray material pattern texture",))


class TestPromptTemplate:
    def test_requires_exactly_one_placeholder(self):
        PromptTemplate("Items: {tags}.")
        with pytest.raises(ConfigError):
            PromptTemplate("no placeholder")
        with pytest.raises(ConfigError):
            PromptTemplate("{tags} and {tags}")


class TestPromptBundle:
    def test_build_dedups_first_occurrence(self):
        bundle = PromptBundle.build(
            adjectives=["defect", "rip"],
            fixed=["abnormal", "defect"],
            objects=TagSet(tags=("carpet",)),
        )
        assert bundle.final == ("defect", "rip", "abnormal", "carpet")

    def test_fixed_only_fallback(self):
        bundle = PromptBundle.build(adjectives=[])
        assert bundle.final == DEFAULT_FIXED_PROMPTS

    def test_rejects_inconsistent_final(self):
        with pytest.raises(ValueError):
            PromptBundle(
                object_tags=TagSet(),
                adjective_tags=("rip",),
                fixed_tags=("abnormal",),
                final=("abnormal", "rip"),
            )

    def test_rejects_empty_fixed(self):
        with pytest.raises(ValueError):
            PromptBundle.build(adjectives=["rip"], fixed=[])


class TestBoundingBox:
    def test_valid_box(self):
        box = BoundingBox(0.1, 0.2, 0.4, 0.8)
        assert box.x1 > box.x0

    @pytest.mark.parametrize(
        "coords",
        [
            (-0.1, 0, 1, 1),
            (0, 0, 1.1, 1),
            (0.5, 0, 0.5, 1),
            (0.6, 0, 0.5, 1),
            (0, 0.7, 1, 0.7),
        ],
    )
    def test_rejects_degenerate(self, coords):
        with pytest.raises(ValueError):
            BoundingBox(*coords)


class TestDetection:
    def test_score_bounds(self):
        box = BoundingBox(0, 0, 1, 1)
        Detection(box, 0.0)
        Detection(box, 1.0)
        with pytest.raises(ValueError):
            Detection(box, 1.5)
        with pytest.raises(ValueError):
            Detection(box, -0.1)

    def test_detection_set_may_be_empty(self):
        assert len(DetectionSet(image_id="x")) == 0


class TestBinaryMask:
    def test_shape_checked(self):
        with pytest.raises(ValueError):
            BinaryMask(width=4, height=3, bits=np.zeros((4, 4), dtype=bool))

    def test_bits_are_frozen(self):
        mask = BinaryMask(width=2, height=2, bits=np.zeros((2, 2), dtype=bool))
        with pytest.raises(ValueError):
            mask.bits[0, 0] = True

    def test_equality_by_content(self):
        a = BinaryMask.from_array(np.eye(3, dtype=bool))
        b = BinaryMask.from_array(np.eye(3, dtype=bool))
        assert a == b


class TestMaskSet:
    def test_alignment_enforced(self):
        mask = BinaryMask.from_array(np.zeros((2, 2), dtype=bool))
        with pytest.raises(ValueError):
            MaskSet(image_id="x", masks=(mask,), source_detections=())


class TestScoreMap:
    def test_value_range_enforced(self):
        with pytest.raises(ValueError):
            ScoreMap.from_array(np.array([[0.5, 1.5]], dtype=np.float32))

    def test_zeros(self):
        score_map = ScoreMap.zeros(3, 2)
        assert score_map.values.shape == (2, 3)
        assert score_map.values.dtype == np.float32


class TestSizeThreshold:
    def test_bounds(self):
        SizeThreshold(1.0)
        SizeThreshold(1e-9)
        for bad in (0.0, -0.1, 1.1):
            with pytest.raises(ValueError):
                SizeThreshold(bad)


class TestPipelineConfig:
    def test_defaults_resolve_to_object_thresholds(self):
        resolved = validate_config(PipelineConfig())
        assert (resolved.box_threshold, resolved.text_threshold) == (0.2, 0.2)

    def test_texture_mode_resolves_to_point_one(self):
        resolved = validate_config(PipelineConfig(texture_mode=True))
        assert (resolved.box_threshold, resolved.text_threshold) == (0.1, 0.1)

    def test_explicit_thresholds_survive_texture_mode(self):
        resolved = validate_config(PipelineConfig(texture_mode=True, box_threshold=0.3))
        assert resolved.box_threshold == 0.3
        assert resolved.text_threshold == 0.1

    def test_validate_idempotent(self):
        once = validate_config(PipelineConfig(texture_mode=True))
        assert validate_config(once) == once

    def test_size_factor_boundary_message(self):
        with pytest.raises(ConfigError, match=r"size_factor out of \(0,1\]"):
            PipelineConfig(size_factor=0)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"iou_threshold": 0.0},
            {"box_threshold": 1.2},
            {"normal_sample_count": 0},
            {"anomalous_sample_count": -3},
            {"max_adjectives": 0},
        ],
    )
    def test_rejects_out_of_range(self, kwargs):
        with pytest.raises(ConfigError):
            PipelineConfig(**kwargs)

    def test_default_sampling_and_seed(self):
        config = PipelineConfig()
        assert config.seed == 111
        assert config.normal_sample_count == 4
        assert config.anomalous_sample_count == 8
        assert config.iou_threshold == 0.5
        assert config.size_factor == 0.8

    def test_default_blacklist(self):
        assert set(DEFAULT_BLACKLIST) == {
            "crack", "scratch", "defect", "damage", "flaw",
            "hole", "stain", "broken", "anomaly",
        }

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            PipelineConfig.from_dict({"seed": 1, "boxthreshold": 0.2})

    def test_json_round_trip(self, tmp_path):
        original = validate_config(PipelineConfig(texture_mode=True, seed=7))
        path = tmp_path / "config.json"
        path.write_text(json.dumps(original.to_dict()), encoding="utf-8")
        assert PipelineConfig.from_json_file(path) == original

    def test_malformed_template_rejected(self):
        with pytest.raises(ConfigError):
            PipelineConfig.from_dict({"iap_template": "no placeholder"})

    def test_blacklist_normalized(self):
        config = PipelineConfig(blacklist=("Crack", " SCRATCH "))
        assert config.blacklist == ("crack", "scratch")


def test_dedup_keep_first():
    assert dedup_keep_first(["b", "a", "b", "c", "a"]) == ("b", "a", "c")
