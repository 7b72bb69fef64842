"""Line-delimited wire protocol for feature probes and association oracles.

One JSON object per line in each direction over a byte stream.  Scalars
are plain decimal JSON numbers; vectors travel as base64-encoded float32
little-endian.  Requests:

    {"kind": "embed_region", "frame_id": 5, "bbox2d": [x0, y0, x1, y1]}
    {"kind": "is_target", "frame_id": 5, "region": [x0, y0, x1, y1],
     "text": "C picks the can"}
    {"kind": "embed_text", "text": "a green cup"}

Responses:

    {"ok": true, "clip": "<b64>", "dino": "<b64>"}     (embed_region)
    {"ok": true, "result": true}                       (is_target)
    {"ok": true, "vector": "<b64>"}                    (embed_text)
    {"ok": false, "error": "why"}                      (any failure)

A malformed request yields an error response; the stream stays open.
"""

from __future__ import annotations

import json
import socket
from typing import Optional

import numpy as np

from .errors import OracleUnavailable, ProbeFailure
from .similarity import FeaturePair
from .store import b64_to_vec, vec_to_b64


def encode_request(kind: str, frame_id: Optional[int] = None,
                   bbox2d=None, text: Optional[str] = None) -> bytes:
    doc = {"kind": kind}
    if frame_id is not None:
        doc["frame_id"] = int(frame_id)
    if bbox2d is not None:
        key = "region" if kind == "is_target" else "bbox2d"
        doc[key] = [float(v) for v in bbox2d]
    if text is not None:
        doc["text"] = text
    return (json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


def handle_request_line(handler, line: bytes) -> bytes:
    """Dispatch one request line against a handler object exposing
    embed_region / is_target / embed_text; always returns a response line."""
    try:
        doc = json.loads(line.decode("utf-8"))
        kind = doc["kind"]
        if kind == "embed_region":
            pair = handler.embed_region(int(doc["frame_id"]), doc["bbox2d"])
            resp = {"ok": True,
                    "clip": vec_to_b64(pair.chan_clip, "<f4"),
                    "dino": vec_to_b64(pair.chan_dino, "<f4")}
        elif kind == "is_target":
            result = handler.is_target(int(doc["frame_id"]), doc["region"],
                                       doc["text"])
            resp = {"ok": True, "result": bool(result)}
        elif kind == "embed_text":
            vec = handler.embed_text(doc["text"])
            resp = {"ok": True, "vector": vec_to_b64(vec, "<f4")}
        else:
            resp = {"ok": False, "error": f"unknown kind {kind!r}"}
    except Exception as exc:
        resp = {"ok": False, "error": f"{type(exc).__name__}: {exc}"}
    return (json.dumps(resp, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


def serve_stream(handler, rfile, wfile):
    """Serve requests from rfile to wfile until EOF.  One bad request
    never tears down the stream."""
    for line in rfile:
        if not line.strip():
            continue
        wfile.write(handle_request_line(handler, line))
        wfile.flush()


class WireProvider:
    """Client side: a FeatureProbe + AssociationOracle speaking the wire
    protocol to a remote responder."""

    def __init__(self, host: str, port: int, timeout: float = 30.0):
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._rfile = self._sock.makefile("rb")
        self._wfile = self._sock.makefile("wb")

    def close(self):
        self._rfile.close()
        self._wfile.close()
        self._sock.close()

    def _round_trip(self, request: bytes) -> dict:
        self._wfile.write(request)
        self._wfile.flush()
        line = self._rfile.readline()
        if not line:
            raise ConnectionError("provider closed the stream")
        return json.loads(line.decode("utf-8"))

    def embed_region(self, frame_id: int, bbox2d) -> FeaturePair:
        try:
            resp = self._round_trip(encode_request(
                "embed_region", frame_id=frame_id, bbox2d=bbox2d))
        except (OSError, ValueError, ConnectionError) as exc:
            raise ProbeFailure(str(exc)) from exc
        if not resp.get("ok"):
            raise ProbeFailure(resp.get("error", "provider error"))
        return FeaturePair(b64_to_vec(resp["clip"], "<f4"),
                           b64_to_vec(resp["dino"], "<f4"))

    def is_target(self, frame_id: int, region, text: str) -> bool:
        try:
            resp = self._round_trip(encode_request(
                "is_target", frame_id=frame_id, bbox2d=region, text=text))
        except (OSError, ValueError, ConnectionError) as exc:
            raise OracleUnavailable(str(exc)) from exc
        if not resp.get("ok"):
            raise OracleUnavailable(resp.get("error", "provider error"))
        return bool(resp["result"])

    def embed_text(self, text: str) -> np.ndarray:
        try:
            resp = self._round_trip(encode_request("embed_text", text=text))
        except (OSError, ValueError, ConnectionError) as exc:
            raise ProbeFailure(str(exc)) from exc
        if not resp.get("ok"):
            raise ProbeFailure(resp.get("error", "provider error"))
        return b64_to_vec(resp["vector"], "<f4")
