"""Model adapters behind the four inference endpoints.

An adapter is a plain object with an ``identity`` string and one
inference method; the service layer wraps each in a mutex so a model
never sees concurrent calls. The bundled "synthetic" family computes
deterministic functions of pixel statistics and prompt hashes with no
sampling anywhere, so repeated requests produce byte-identical
responses and recorded fixtures stay stable.

Real model wrappers (an image tagger, an instruction-tuned text
generator, an open-vocabulary detector, a promptable segmenter) plug in
by registering a factory under a new identifier; their weights are a
deployment concern and do not ship with this repository.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np
from PIL import Image
from scipy import ndimage

Box = tuple[float, float, float, float]

# Gray levels from the global median beyond which a pixel counts as an
# anomaly candidate; shared by the synthetic detector and segmenter so a
# detected region segments to the same pixels.
CONTRAST_LEVELS = 48.0

# The whole-object region an open-set detector reports for the dominant
# subject; deliberately near full frame so size filtering can reject it.
WHOLE_OBJECT_BOX: Box = (0.02, 0.02, 0.98, 0.98)
WHOLE_OBJECT_SCORE = 0.55


@dataclass(frozen=True)
class RawDetection:
    """One detector hit: normalized box (x0 < x1, y0 < y1), score, phrase."""

    box: Box
    score: float
    phrase: str


class Tagger(Protocol):
    identity: str

    def tag(self, image: Image.Image) -> list[str]: ...


class Generator(Protocol):
    identity: str

    def generate(self, prompt: str, max_tokens: int) -> str: ...


class Detector(Protocol):
    identity: str

    def detect(
        self,
        image: Image.Image,
        prompts: list[str],
        box_threshold: float,
        text_threshold: float,
    ) -> list[RawDetection]: ...


class Segmenter(Protocol):
    identity: str

    def segment(self, image: Image.Image, boxes: list[Box]) -> list[np.ndarray]: ...


@dataclass(frozen=True)
class ModelSet:
    tagger: Tagger
    generator: Generator
    detector: Detector
    segmenter: Segmenter

    def identities(self) -> dict[str, str]:
        return {
            "tag": self.tagger.identity,
            "generate": self.generator.identity,
            "detect": self.detector.identity,
            "segment": self.segmenter.identity,
        }


def _grayscale(image: Image.Image) -> np.ndarray:
    return np.asarray(image.convert("L"), dtype=np.float64)


def _deviation(pixels: np.ndarray) -> np.ndarray:
    return np.abs(pixels - np.median(pixels))


def _hash_unit(*parts: str) -> float:
    """Deterministic pseudo-affinity in [0, 1) from the given strings."""
    digest = hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big") / 2**32


class SyntheticTagger:
    """Names the material from brightness and texture statistics."""

    identity = "synthetic-tagger-v1"

    def tag(self, image: Image.Image) -> list[str]:
        pixels = _grayscale(image)
        mean = float(pixels.mean())
        tone = "dark" if mean < 85.0 else "bright" if mean > 170.0 else "gray"
        tags = [f"{tone} material", "surface"]
        if float(pixels.std()) > 6.0:
            tags.extend(["pattern", "texture"])
        # High-contrast regions read as damage; raw tags are pre-hygiene,
        # so defect words may appear here and get blacklisted downstream.
        if float(_deviation(pixels).max()) > CONTRAST_LEVELS:
            tags.append("damage")
        return tags


# 1-2 word noun phrases so downstream completion parsing accepts them.
_DEFECT_VOCAB = (
    "discoloration",
    "fray",
    "rip",
    "bubble",
    "stain",
    "burn",
    "smudge",
    "torn edge",
    "dent",
    "scratch mark",
    "worn patch",
    "faded area",
)


class SyntheticGenerator:
    """Greedy completion stand-in: the prompt fully determines the text."""

    identity = "synthetic-generator-v1"

    def generate(self, prompt: str, max_tokens: int) -> str:
        digest = hashlib.sha256(prompt.encode("utf-8")).digest()
        start = digest[0] % len(_DEFECT_VOCAB)
        count = 4 + digest[1] % 4
        picks = [_DEFECT_VOCAB[(start + i) % len(_DEFECT_VOCAB)] for i in range(count)]
        words = ", ".join(picks).split(" ")
        return " ".join(words[:max_tokens])


class SyntheticDetector:
    """Contrast-blob detector: regions deviating from the median are hits.

    Always reports the whole-object region first. Component scores come
    from mean contrast; each component's phrase is the prompt with the
    highest hash-derived affinity. ``box_threshold`` and
    ``text_threshold`` are inclusive floors applied server-side.
    """

    identity = "synthetic-detector-v1"

    def detect(
        self,
        image: Image.Image,
        prompts: list[str],
        box_threshold: float,
        text_threshold: float,
    ) -> list[RawDetection]:
        pixels = _grayscale(image)
        height, width = pixels.shape
        deviation = _deviation(pixels)
        labels, count = ndimage.label(deviation > CONTRAST_LEVELS)

        found = [
            RawDetection(
                box=WHOLE_OBJECT_BOX,
                score=WHOLE_OBJECT_SCORE,
                phrase=max(prompts, key=len),
            )
        ]
        for index in range(1, count + 1):
            inside = labels == index
            ys, xs = np.nonzero(inside)
            box = (
                xs.min() / width,
                ys.min() / height,
                (xs.max() + 1) / width,
                (ys.max() + 1) / height,
            )
            phrase, affinity = self._best_phrase(prompts, box)
            if affinity < text_threshold:
                continue
            score = min(1.0, float(deviation[inside].mean()) / 128.0)
            found.append(RawDetection(box=box, score=score, phrase=phrase))
        return [d for d in found if d.score >= box_threshold]

    @staticmethod
    def _best_phrase(prompts: list[str], box: Box) -> tuple[str, float]:
        anchor = ",".join(f"{coord:.6f}" for coord in box)
        best, best_affinity = prompts[0], -1.0
        for prompt in prompts:
            affinity = _hash_unit(prompt, anchor)
            if affinity > best_affinity:
                best, best_affinity = prompt, affinity
        return best, best_affinity


class SyntheticSegmenter:
    """Segments each box to its high-contrast pixels, whole box if none.

    A promptable segmenter answers every box prompt; an empty mask would
    starve downstream aggregation, so a featureless box falls back to
    the box rectangle itself.
    """

    identity = "synthetic-segmenter-v1"

    def segment(self, image: Image.Image, boxes: list[Box]) -> list[np.ndarray]:
        pixels = _grayscale(image)
        height, width = pixels.shape
        deviation = _deviation(pixels)
        masks: list[np.ndarray] = []
        for x0, y0, x1, y1 in boxes:
            px0 = min(max(int(math.floor(x0 * width)), 0), width - 1)
            py0 = min(max(int(math.floor(y0 * height)), 0), height - 1)
            px1 = max(min(int(math.ceil(x1 * width)), width), px0 + 1)
            py1 = max(min(int(math.ceil(y1 * height)), height), py0 + 1)
            bits = np.zeros((height, width), dtype=bool)
            window = deviation[py0:py1, px0:px1] > CONTRAST_LEVELS
            bits[py0:py1, px0:px1] = window if window.any() else True
            masks.append(bits)
        return masks


_FACTORIES: Mapping[str, Mapping[str, Callable[[str], object]]] = {
    "tag": {"synthetic": lambda device: SyntheticTagger()},
    "generate": {"synthetic": lambda device: SyntheticGenerator()},
    "detect": {"synthetic": lambda device: SyntheticDetector()},
    "segment": {"synthetic": lambda device: SyntheticSegmenter()},
}


def build_model(endpoint: str, identifier: str, device: str) -> object:
    try:
        factories = _FACTORIES[endpoint]
    except KeyError:
        raise ValueError(f"unknown endpoint {endpoint!r}") from None
    try:
        factory = factories[identifier]
    except KeyError:
        known = ", ".join(sorted(factories))
        raise ValueError(
            f"unknown {endpoint} model {identifier!r}; known: {known}"
        ) from None
    return factory(device)


def build_model_set(identifiers: Mapping[str, str], device: str) -> ModelSet:
    """Resolve one model identifier per endpoint into instances."""
    return ModelSet(
        tagger=build_model("tag", identifiers["tag"], device),
        generator=build_model("generate", identifiers["generate"], device),
        detector=build_model("detect", identifiers["detect"], device),
        segmenter=build_model("segment", identifiers["segment"], device),
    )
