"""egomem-bridge: embedding extraction and model serving for egomem episodes."""

__version__ = "0.1.0"

from .encoders import (BridgeError, make_image_encoder, make_text_encoder)
from .extract import BridgeConfig, extract_episode
from .server import BridgeHandler, serve

__all__ = ["BridgeError", "BridgeConfig", "BridgeHandler", "extract_episode",
           "make_image_encoder", "make_text_encoder", "serve"]
