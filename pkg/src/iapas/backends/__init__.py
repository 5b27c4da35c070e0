"""Model-inference boundary: contract, replay store, remote client, recorder."""

from .base import (
    BackendRequestKey,
    InferenceBackend,
    detect_request_key,
    generate_request_key,
    segment_request_key,
    tag_request_key,
)
from .record import RecordingBackend
from .remote import RemoteBackend
from .replay import ReplayBackend, fixture_path, store_digest, write_fixture

__all__ = [
    "BackendRequestKey",
    "InferenceBackend",
    "RecordingBackend",
    "RemoteBackend",
    "ReplayBackend",
    "detect_request_key",
    "fixture_path",
    "generate_request_key",
    "segment_request_key",
    "store_digest",
    "tag_request_key",
    "write_fixture",
]
