"""Training-free anomaly segmentation from image-aware text prompts.

The pipeline tags normal images to learn what objects look like, asks a
text generator for likely defect descriptors, detects candidate regions
with the combined prompt list, filters object-sized boxes, and fuses
per-box segmentation masks into pixel-level anomaly score maps. All
model inference happens behind a replayable backend interface, so the
whole pipeline runs deterministically from committed fixtures.
"""

__version__ = "0.1.0"

from .errors import (
    BackendUnavailableError,
    CodecError,
    ConfigError,
    DatasetError,
    FixtureMissError,
    IapasError,
    MetricsError,
    SchemaError,
)
from .types import (
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
    validate_config,
)

__all__ = [
    "__version__",
    "BackendUnavailableError",
    "BinaryMask",
    "BoundingBox",
    "CodecError",
    "ConfigError",
    "DatasetError",
    "Detection",
    "DetectionSet",
    "FixtureMissError",
    "IapasError",
    "ImageRef",
    "MaskSet",
    "MetricsError",
    "PipelineConfig",
    "PromptBundle",
    "PromptTemplate",
    "SchemaError",
    "ScoreMap",
    "SizeThreshold",
    "TagSet",
    "validate_config",
]
