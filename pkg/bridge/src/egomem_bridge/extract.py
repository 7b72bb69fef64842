"""Batch extraction: frames + detections + sensor data -> episode directory.

This is an independent implementation of the episode contract documented in
the engine README (the bridge deliberately does not import the engine):

    manifest.json, frames.jsonl, depth/NNNNNN.f32, features.bin,
    actions.jsonl

Embeddings are computed here: per-detection crops through the two appearance
channels, and the whole frame through the context channel.  Depth blobs and
poses come from the caller's sensors and are passed through unchanged.
"""

from __future__ import annotations

import json
import os
import shutil
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from PIL import Image

from .encoders import BridgeError, make_image_encoder, make_text_encoder

SCHEMA_VERSION = 1


@dataclass
class BridgeConfig:
    clip_model: str = "builtin:64"
    dino_model: str = "builtin:64"
    text_model: str = "builtin-text:64"
    device: str = "cpu"
    batch_size: int = 16
    endpoint: str = "127.0.0.1:7461"
    association_threshold: float = 0.2

    @classmethod
    def load(cls, path) -> "BridgeConfig":
        with open(path, "r", encoding="utf-8") as f:
            return cls(**json.load(f))


@dataclass
class Encoders:
    clip: object
    dino: object
    ctx: object
    text: object

    @classmethod
    def from_config(cls, config: BridgeConfig, ctx_dim: int) -> "Encoders":
        clip = make_image_encoder(config.clip_model, "clip")
        dino = make_image_encoder(config.dino_model, "dino")
        if config.clip_model.startswith("builtin:"):
            ctx = make_image_encoder(f"builtin:{ctx_dim}", "ctx")
        else:
            ctx = make_image_encoder(config.clip_model, "ctx")
        text = make_text_encoder(config.text_model)
        return cls(clip=clip, dino=dino, ctx=ctx, text=text)


def load_frame_image(frames_dir: str, frame_id: int) -> np.ndarray:
    for ext in ("png", "jpg", "jpeg"):
        path = os.path.join(frames_dir, f"{frame_id:06d}.{ext}")
        if os.path.exists(path):
            return np.asarray(Image.open(path).convert("RGB"))
    raise BridgeError(f"no frame image for id {frame_id} in {frames_dir}")


def crop(image: np.ndarray, bbox2d) -> np.ndarray:
    h, w = image.shape[:2]
    x0, y0, x1, y1 = bbox2d
    r0, c0 = max(int(np.floor(y0)), 0), max(int(np.floor(x0)), 0)
    r1, c1 = min(int(np.ceil(y1)), h), min(int(np.ceil(x1)), w)
    if r1 <= r0 or c1 <= c0:
        raise BridgeError(f"empty crop for bbox {bbox2d}")
    return image[r0:r1, c0:c1]


def _read_jsonl(path: str) -> List[dict]:
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                out.append(json.loads(line))
    return out


def extract_episode(frames_dir: str, detections_file: str, poses_file: str,
                    depth_dir: str, sensor_file: str, out_dir: str,
                    config: Optional[BridgeConfig] = None,
                    actions_file: Optional[str] = None,
                    provenance: str = "") -> dict:
    """Build a conformant episode; returns a small summary dict."""
    config = config or BridgeConfig()
    with open(sensor_file, "r", encoding="utf-8") as f:
        sensor = json.load(f)
    intr = sensor["intrinsics"]
    dims = {k: int(v) for k, v in sensor["dims"].items()}
    encoders = Encoders.from_config(config, dims["ctx"])
    for name, enc, want in (("clip", encoders.clip, dims["clip"]),
                            ("dino", encoders.dino, dims["dino"]),
                            ("ctx", encoders.ctx, dims["ctx"])):
        if enc.dim != want:
            raise BridgeError(
                f"{name} encoder emits dim {enc.dim}, manifest wants {want}")

    poses = {int(p["frame_id"]): p for p in _read_jsonl(poses_file)}
    detections: Dict[int, List[dict]] = {}
    for d in _read_jsonl(detections_file):
        detections.setdefault(int(d["frame_id"]), []).append(d)

    os.makedirs(os.path.join(out_dir, "depth"), exist_ok=True)
    feat_offset = 0
    n_detections = 0
    frame_ids = sorted(poses)
    with open(os.path.join(out_dir, "frames.jsonl"), "w", encoding="utf-8") as frames_out, \
         open(os.path.join(out_dir, "features.bin"), "wb") as feats_out:

        def write_feature(vec: np.ndarray) -> int:
            nonlocal feat_offset
            feats_out.write(np.asarray(vec, dtype="<f4").tobytes())
            offset = feat_offset
            feat_offset += vec.shape[0]
            return offset

        for fid in frame_ids:
            pose = poses[fid]
            image = load_frame_image(frames_dir, fid)
            src_depth = os.path.join(depth_dir, f"{fid:06d}.f32")
            if not os.path.exists(src_depth):
                raise BridgeError(f"missing depth blob {src_depth}")
            shutil.copyfile(src_depth,
                            os.path.join(out_dir, "depth", f"{fid:06d}.f32"))
            ctx_ref = write_feature(encoders.ctx.encode(image))
            det_records = []
            for d in detections.get(fid, []):
                patch = crop(image, d["bbox2d"])
                ref = write_feature(encoders.clip.encode(patch))
                write_feature(encoders.dino.encode(patch))
                det_records.append({
                    "category": d["category"],
                    "bbox2d": [float(v) for v in d["bbox2d"]],
                    "confidence": float(d.get("confidence", 1.0)),
                    "mask": None,
                    "feat_ref": ref,
                })
                n_detections += 1
            record = {
                "frame_id": fid,
                "timestamp_s": float(pose["timestamp_s"]),
                "pose": {"t": [float(v) for v in pose["t"]],
                         "q": [float(v) for v in pose["q"]]},
                "ctx_ref": ctx_ref,
                "detections": det_records,
            }
            frames_out.write(json.dumps(record, sort_keys=True,
                                        separators=(",", ":")) + "\n")

    with open(os.path.join(out_dir, "actions.jsonl"), "w", encoding="utf-8") as f:
        if actions_file:
            for rec in _read_jsonl(actions_file):
                f.write(json.dumps(rec, sort_keys=True,
                                   separators=(",", ":")) + "\n")

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "intrinsics": {k: intr[k] for k in
                       ("fx", "fy", "cx", "cy", "width", "height")},
        "up_axis": sensor.get("up_axis", "+z"),
        "dims": dims,
        "frame_count": len(frame_ids),
        "paths": {"frames": "frames.jsonl", "depth_dir": "depth",
                  "features": "features.bin", "actions": "actions.jsonl"},
        "provenance": provenance or (
            f"bridge clip={config.clip_model} dino={config.dino_model}"),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, sort_keys=True, indent=1)
        f.write("\n")
    return {"frames": len(frame_ids), "detections": n_detections,
            "features_floats": feat_offset}
