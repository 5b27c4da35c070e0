"""Inference sidecar serving the anomaly-segmentation wire protocol."""

__version__ = "0.1.0"

from .app import create_app
from .config import ServerConfig

__all__ = ["ServerConfig", "__version__", "create_app"]
