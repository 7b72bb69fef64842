"""Wire-protocol responder: embed_region / is_target / embed_text.

Line-delimited JSON both ways; vectors as base64 float32 little-endian.
One malformed request yields an error response and the stream stays open.
is_target without a real VLM is answered by thresholded text-to-crop
similarity on the clip channel (the classic zero-shot association), which
is deterministic and model-dependent.
"""

from __future__ import annotations

import base64
import json
import socket
import threading

import numpy as np

from .encoders import BridgeError
from .extract import BridgeConfig, Encoders, crop, load_frame_image


def vec_to_b64(vec: np.ndarray) -> str:
    return base64.b64encode(
        np.asarray(vec, dtype="<f4").tobytes()).decode("ascii")


class BridgeHandler:
    """Request handler bound to a frames directory and an encoder set."""

    def __init__(self, frames_dir: str, config: BridgeConfig, ctx_dim: int):
        self.frames_dir = frames_dir
        self.config = config
        self.encoders = Encoders.from_config(config, ctx_dim)
        self._cache = {}

    def _image(self, frame_id: int) -> np.ndarray:
        if frame_id not in self._cache:
            self._cache[frame_id] = load_frame_image(self.frames_dir, frame_id)
        return self._cache[frame_id]

    def handle(self, doc: dict) -> dict:
        kind = doc["kind"]
        if kind == "embed_region":
            patch = crop(self._image(int(doc["frame_id"])), doc["bbox2d"])
            return {"ok": True,
                    "clip": vec_to_b64(self.encoders.clip.encode(patch)),
                    "dino": vec_to_b64(self.encoders.dino.encode(patch))}
        if kind == "is_target":
            patch = crop(self._image(int(doc["frame_id"])), doc["region"])
            img_vec = self.encoders.clip.encode(patch)
            txt_vec = self.encoders.text.encode(doc["text"])
            if txt_vec.shape != img_vec.shape:
                raise BridgeError("text and clip encoder dims differ; "
                                  "is_target needs a shared space")
            score = float(img_vec @ txt_vec)
            return {"ok": True,
                    "result": score >= self.config.association_threshold}
        if kind == "embed_text":
            return {"ok": True,
                    "vector": vec_to_b64(self.encoders.text.encode(doc["text"]))}
        return {"ok": False, "error": f"unknown kind {kind!r}"}


def respond_line(handler: BridgeHandler, line: bytes) -> bytes:
    try:
        resp = handler.handle(json.loads(line.decode("utf-8")))
    except Exception as exc:
        resp = {"ok": False, "error": f"{type(exc).__name__}: {exc}"}
    return (json.dumps(resp, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


def serve_connection(handler: BridgeHandler, rfile, wfile):
    for line in rfile:
        if not line.strip():
            continue
        wfile.write(respond_line(handler, line))
        wfile.flush()


def serve(handler: BridgeHandler, host: str, port: int,
          ready: threading.Event = None, stop: threading.Event = None):
    """Accept connections until the stop event is set; requests within a
    connection are handled sequentially."""
    server = socket.create_server((host, port))
    server.settimeout(0.25)
    bound_port = server.getsockname()[1]
    if ready is not None:
        ready.port = bound_port  # type: ignore[attr-defined]
        ready.set()
    try:
        while stop is None or not stop.is_set():
            try:
                conn, _ = server.accept()
            except socket.timeout:
                continue
            with conn:
                serve_connection(handler, conn.makefile("rb"),
                                 conn.makefile("wb"))
    finally:
        server.close()
