"""HTTP client for the model-serving sidecar."""

from __future__ import annotations

import json
import threading
from typing import Any, Sequence

import requests

from ..errors import BackendUnavailableError, SchemaError
from ..types import Detection, DetectionSet, ImageRef, MaskSet
from .base import InferenceBackend, read_image_bytes
from .wire import (
    ENDPOINT_PATHS,
    detect_request,
    generate_request,
    parse_detect_response,
    parse_generate_response,
    parse_segment_response,
    parse_tag_response,
    segment_request,
    tag_request,
)

DEFAULT_TIMEOUT_SECONDS = 120.0
DEFAULT_MAX_IN_FLIGHT = 4


class RemoteBackend(InferenceBackend):
    """Speaks the JSON-over-HTTP wire protocol to a model server.

    A bounded semaphore caps the number of simultaneous requests so a
    parallel segmentation stage cannot flood the sidecar.
    """

    def __init__(
        self,
        base_url: str,
        timeout: float = DEFAULT_TIMEOUT_SECONDS,
        max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
    ) -> None:
        if max_in_flight < 1:
            raise ValueError(f"max_in_flight must be >= 1, got {max_in_flight}")
        self._base_url = base_url.rstrip("/")
        self._timeout = timeout
        self._session = requests.Session()
        self._slots = threading.BoundedSemaphore(max_in_flight)

    @property
    def identity(self) -> str:
        return self._base_url

    def _post(self, method: str, payload: dict[str, Any]) -> Any:
        url = self._base_url + ENDPOINT_PATHS[method]
        try:
            with self._slots:
                response = self._session.post(url, json=payload, timeout=self._timeout)
        except requests.RequestException as exc:
            raise BackendUnavailableError(f"backend unavailable: {url}: {exc}") from exc
        if response.status_code >= 500:
            raise BackendUnavailableError(
                f"model failure at {url}: HTTP {response.status_code}: {_error_text(response)}"
            )
        if response.status_code >= 400:
            raise SchemaError(
                f"request rejected by {url}: HTTP {response.status_code}: {_error_text(response)}"
            )
        try:
            return response.json()
        except ValueError as exc:
            raise SchemaError(f"malformed response from {url}: not JSON") from exc

    def health(self) -> Any:
        url = self._base_url + "/v1/health"
        try:
            response = self._session.get(url, timeout=self._timeout)
            response.raise_for_status()
            return response.json()
        except (requests.RequestException, ValueError) as exc:
            raise BackendUnavailableError(f"health check failed: {url}: {exc}") from exc

    def _tag_image(self, image: ImageRef) -> list[str]:
        payload = self._post("tag", tag_request(read_image_bytes(image)))
        return parse_tag_response(payload)

    def _generate_text(self, prompt: str) -> str:
        return parse_generate_response(self._post("generate", generate_request(prompt)))

    def _detect_regions(
        self,
        image: ImageRef,
        prompts: list[str],
        box_threshold: float,
        text_threshold: float,
    ) -> DetectionSet:
        payload = self._post(
            "detect",
            detect_request(read_image_bytes(image), prompts, box_threshold, text_threshold),
        )
        return parse_detect_response(payload, image.id)

    def _segment_regions(
        self, image: ImageRef, detections: Sequence[Detection]
    ) -> MaskSet:
        payload = self._post(
            "segment", segment_request(read_image_bytes(image), [d.box for d in detections])
        )
        return parse_segment_response(payload, image, detections)


def _error_text(response: requests.Response) -> str:
    try:
        body = response.json()
        if isinstance(body, dict) and isinstance(body.get("error"), str):
            return body["error"]
    except ValueError:
        pass
    return response.text[:200]
