"""On-disk formats: replayable episodes and canonical memory snapshots.

Episode directory layout (the repo's primary public contract):

    manifest.json        episode metadata (see EpisodeManifest)
    frames.jsonl         one JSON record per frame, timestamp order
    depth/000042.f32     headerless float32 LE depth, row-major, meters
    features.bin         packed float32 LE embeddings, offsets from frames.jsonl
    actions.jsonl        one JSON record per action annotation

Frame records reference embeddings by float offset into features.bin: a
context ref spans dims.ctx floats, a detection ref spans dims.clip floats
followed by dims.dino floats.  Masks are run-length encoded over the
row-major integer pixel window of their bbox.

Snapshots are a single canonical JSON document: ascending ids, sorted
relation pairs, timestamp order, embeddings as base64 float64 LE.  Equal
memories serialize to identical bytes.
"""

from __future__ import annotations

import base64
import json
import os
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from .config import EngineConfig
from .errors import (CorruptBlob, MissingFile, SchemaMismatch, StorageFailure)
from .geometry import (Box3D, CameraIntrinsics, DepthMap, Detection2D, Pose,
                       pixel_window)
from .history import ActionRecord, VisibleRecord
from .memory import (FrameMeta, FrameObservation, IngestReport, ObjectEntry,
                     ObjectMemory, UP_AXES)
from .similarity import FeaturePair

EPISODE_SCHEMA_VERSION = 1
SNAPSHOT_SCHEMA_VERSION = 1


def vec_to_b64(vec: np.ndarray, dtype: str = "<f8") -> str:
    return base64.b64encode(np.asarray(vec).astype(dtype).tobytes()).decode("ascii")


def b64_to_vec(text: str, dtype: str = "<f8") -> np.ndarray:
    return np.frombuffer(base64.b64decode(text), dtype=dtype).astype(np.float64)


def mask_to_rle(mask: np.ndarray) -> dict:
    flat = np.asarray(mask, dtype=bool).ravel()
    runs = []
    idx = np.flatnonzero(np.diff(np.concatenate(([0], flat.view(np.int8), [0]))))
    for start, end in zip(idx[::2], idx[1::2]):
        runs.append([int(start), int(end - start)])
    return {"shape": [int(mask.shape[0]), int(mask.shape[1])], "runs": runs}


def rle_to_mask(rle: dict) -> np.ndarray:
    h, w = rle["shape"]
    flat = np.zeros(h * w, dtype=bool)
    for start, length in rle["runs"]:
        flat[start:start + length] = True
    return flat.reshape(h, w)


@dataclass
class EpisodeManifest:
    schema_version: int
    intrinsics: CameraIntrinsics
    up_axis: str
    dims: Dict[str, int]  # clip / dino / ctx
    frame_count: int
    paths: Dict[str, str]
    provenance: str

    def to_dict(self) -> dict:
        i = self.intrinsics
        return {
            "schema_version": self.schema_version,
            "intrinsics": {"fx": i.fx, "fy": i.fy, "cx": i.cx, "cy": i.cy,
                           "width": i.width, "height": i.height},
            "up_axis": self.up_axis,
            "dims": dict(self.dims),
            "frame_count": self.frame_count,
            "paths": dict(self.paths),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeManifest":
        if d.get("schema_version") != EPISODE_SCHEMA_VERSION:
            raise SchemaMismatch(
                f"episode schema_version {d.get('schema_version')!r} unsupported")
        i = d["intrinsics"]
        if d["up_axis"] not in UP_AXES:
            raise SchemaMismatch(f"unknown up_axis {d['up_axis']!r}")
        for key in ("clip", "dino", "ctx"):
            if int(d["dims"].get(key, 0)) <= 0:
                raise SchemaMismatch(f"dims.{key} must be positive")
        return cls(
            schema_version=d["schema_version"],
            intrinsics=CameraIntrinsics(fx=i["fx"], fy=i["fy"], cx=i["cx"],
                                        cy=i["cy"], width=i["width"],
                                        height=i["height"]),
            up_axis=d["up_axis"],
            dims={k: int(v) for k, v in d["dims"].items()},
            frame_count=int(d["frame_count"]),
            paths=dict(d["paths"]),
            provenance=str(d.get("provenance", "")),
        )


DEFAULT_PATHS = {"frames": "frames.jsonl", "depth_dir": "depth",
                 "features": "features.bin", "actions": "actions.jsonl"}


class EpisodeWriter:
    """Streams an episode to disk; finalize() writes the manifest."""

    def __init__(self, root: str, intrinsics: CameraIntrinsics, up_axis: str,
                 dims: Dict[str, int], provenance: str = ""):
        self.root = root
        self.intrinsics = intrinsics
        self.up_axis = up_axis
        self.dims = dict(dims)
        self.provenance = provenance
        os.makedirs(os.path.join(root, DEFAULT_PATHS["depth_dir"]), exist_ok=True)
        self._frames = open(os.path.join(root, DEFAULT_PATHS["frames"]),
                            "w", encoding="utf-8")
        self._features = open(os.path.join(root, DEFAULT_PATHS["features"]), "wb")
        self._actions: List[dict] = []
        self._feat_offset = 0
        self._frame_count = 0

    def _write_feature(self, vec: np.ndarray, dim: int) -> int:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (dim,):
            raise ValueError(f"feature dim {vec.shape} != manifest dim {dim}")
        self._features.write(vec.astype("<f4").tobytes())
        offset = self._feat_offset
        self._feat_offset += dim
        return offset

    def add_frame(self, frame_id: int, timestamp_s: float, pose: Pose,
                  depth: np.ndarray, ctx_feat: np.ndarray,
                  detections: List[Tuple[Detection2D, FeaturePair]]):
        depth = np.asarray(depth, dtype=np.float32)
        with open(os.path.join(self.root, DEFAULT_PATHS["depth_dir"],
                               f"{frame_id:06d}.f32"), "wb") as f:
            f.write(depth.astype("<f4").tobytes())
        ctx_ref = self._write_feature(ctx_feat, self.dims["ctx"])
        det_records = []
        for det, feat in detections:
            feat_ref = self._write_feature(feat.chan_clip, self.dims["clip"])
            self._write_feature(feat.chan_dino, self.dims["dino"])
            det_records.append({
                "category": det.category,
                "bbox2d": [float(v) for v in det.bbox2d],
                "confidence": float(det.confidence),
                "mask": mask_to_rle(det.mask) if det.mask is not None else None,
                "feat_ref": feat_ref,
            })
        record = {
            "frame_id": int(frame_id),
            "timestamp_s": float(timestamp_s),
            "pose": {"t": [float(v) for v in pose.translation],
                     "q": [float(v) for v in pose.rotation]},
            "ctx_ref": ctx_ref,
            "detections": det_records,
        }
        self._frames.write(json.dumps(record, sort_keys=True,
                                      separators=(",", ":")) + "\n")
        self._frame_count += 1

    def add_action(self, timestamp_s: float, text: str, nouns=None, verb=None,
                   target_ids=None, state=None):
        self._actions.append({
            "timestamp_s": float(timestamp_s), "text": text,
            "nouns": nouns, "verb": verb,
            "target_ids": target_ids, "state": state,
        })

    def finalize(self) -> EpisodeManifest:
        self._frames.close()
        self._features.close()
        with open(os.path.join(self.root, DEFAULT_PATHS["actions"]),
                  "w", encoding="utf-8") as f:
            for rec in self._actions:
                f.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")
        manifest = EpisodeManifest(
            schema_version=EPISODE_SCHEMA_VERSION, intrinsics=self.intrinsics,
            up_axis=self.up_axis, dims=self.dims,
            frame_count=self._frame_count, paths=dict(DEFAULT_PATHS),
            provenance=self.provenance)
        with open(os.path.join(self.root, "manifest.json"), "w",
                  encoding="utf-8") as f:
            json.dump(manifest.to_dict(), f, sort_keys=True, indent=1)
            f.write("\n")
        return manifest


class Episode:
    """Lazy reader over an episode directory."""

    def __init__(self, root: str):
        self.root = root
        manifest_path = os.path.join(root, "manifest.json")
        if not os.path.exists(manifest_path):
            raise MissingFile(f"no manifest at {manifest_path}")
        with open(manifest_path, "r", encoding="utf-8") as f:
            self.manifest = EpisodeManifest.from_dict(json.load(f))
        for key in ("frames", "features", "actions"):
            p = os.path.join(root, self.manifest.paths[key])
            if not os.path.exists(p):
                raise MissingFile(f"missing episode file {p}")
        self._features = np.memmap(
            os.path.join(root, self.manifest.paths["features"]),
            dtype="<f4", mode="r")

    def _feature(self, offset: int, dim: int, frame_id: int) -> np.ndarray:
        if offset + dim > self._features.shape[0]:
            raise CorruptBlob(
                f"feature ref {offset}+{dim} beyond features.bin",
                frame_id=frame_id)
        return np.asarray(self._features[offset:offset + dim], dtype=np.float64)

    def _depth(self, frame_id: int) -> DepthMap:
        intr = self.manifest.intrinsics
        path = os.path.join(self.root, self.manifest.paths["depth_dir"],
                            f"{frame_id:06d}.f32")
        if not os.path.exists(path):
            raise MissingFile(f"missing depth blob {path}")
        raw = np.fromfile(path, dtype="<f4")
        if raw.shape[0] != intr.width * intr.height:
            raise CorruptBlob(
                f"depth blob {path} has {raw.shape[0]} values, "
                f"expected {intr.width * intr.height}", frame_id=frame_id)
        return DepthMap(raw.reshape(intr.height, intr.width))

    def frames(self) -> Iterator[FrameObservation]:
        """Yield frames in file order; depth decoded lazily per frame."""
        dims = self.manifest.dims
        path = os.path.join(self.root, self.manifest.paths["frames"])
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                if not line.strip():
                    continue
                rec = json.loads(line)
                fid = int(rec["frame_id"])
                pose = Pose(rotation=tuple(rec["pose"]["q"]),
                            translation=tuple(rec["pose"]["t"]))
                detections = []
                for d in rec["detections"]:
                    mask = rle_to_mask(d["mask"]) if d.get("mask") else None
                    det = Detection2D(category=d["category"],
                                      bbox2d=tuple(d["bbox2d"]),
                                      confidence=d.get("confidence", 1.0),
                                      mask=mask)
                    feat = FeaturePair(
                        self._feature(d["feat_ref"], dims["clip"], fid),
                        self._feature(d["feat_ref"] + dims["clip"],
                                      dims["dino"], fid))
                    detections.append((det, feat))
                yield FrameObservation(
                    frame_id=fid, timestamp_s=float(rec["timestamp_s"]),
                    pose=pose, depth=self._depth(fid),
                    ctx_feat=self._feature(rec["ctx_ref"], dims["ctx"], fid),
                    detections=detections)

    def actions(self) -> List[dict]:
        path = os.path.join(self.root, self.manifest.paths["actions"])
        out = []
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    out.append(json.loads(line))
        return out


def load_episode(path: str) -> Episode:
    return Episode(path)


# -- validation --------------------------------------------------------------

@dataclass
class Violation:
    kind: str
    message: str
    frame_id: Optional[int] = None
    detection: Optional[int] = None

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "message": self.message}
        if self.frame_id is not None:
            d["frame_id"] = self.frame_id
        if self.detection is not None:
            d["detection"] = self.detection
        return d


def _validate_frame_record(ep: Episode, rec: dict, fid: int,
                           intr: CameraIntrinsics, dims: Dict[str, int],
                           last_t, violations: List[Violation]):
    t = float(rec["timestamp_s"])
    if last_t is not None and t <= last_t:
        violations.append(Violation(
            kind="TimeOrder", frame_id=fid,
            message=f"timestamp {t} not after previous {last_t}"))
    qn = float(np.linalg.norm(rec["pose"]["q"]))
    if abs(qn - 1.0) > 1e-6:
        violations.append(Violation(kind="PoseNorm", frame_id=fid,
                                    message=f"quaternion norm {qn}"))
    try:
        ctx = ep._feature(rec["ctx_ref"], dims["ctx"], fid)
        n = float(np.linalg.norm(ctx))
        if abs(n - 1.0) > 1e-4:
            violations.append(Violation(kind="FeatureNorm", frame_id=fid,
                                        message=f"frame ctx norm {n}"))
    except CorruptBlob as exc:
        violations.append(Violation(kind="BlobLength", frame_id=fid,
                                    message=str(exc)))
    try:
        depth = ep._depth(fid)
        if np.any(depth.values < 0) or not np.all(np.isfinite(depth.values)):
            violations.append(Violation(
                kind="DepthRange", frame_id=fid,
                message="depth values must be finite and >= 0"))
    except (CorruptBlob, MissingFile) as exc:
        violations.append(Violation(kind="BlobLength", frame_id=fid,
                                    message=str(exc)))
    for di, d in enumerate(rec["detections"]):
        x0, y0, x1, y1 = d["bbox2d"]
        if not (0 <= x0 < x1 <= intr.width and 0 <= y0 < y1 <= intr.height):
            violations.append(Violation(
                kind="BboxBounds", frame_id=fid, detection=di,
                message=f"bbox2d {d['bbox2d']} outside image"))
        if d.get("mask"):
            r0, c0, r1, c1 = pixel_window(d["bbox2d"])
            if d["mask"]["shape"] != [r1 - r0, c1 - c0]:
                violations.append(Violation(
                    kind="MaskBounds", frame_id=fid, detection=di,
                    message="mask shape mismatches bbox window"))
        for name, off, dim in (
                ("clip", d["feat_ref"], dims["clip"]),
                ("dino", d["feat_ref"] + dims["clip"], dims["dino"])):
            try:
                v = ep._feature(off, dim, fid)
                n = float(np.linalg.norm(v))
                if abs(n - 1.0) > 1e-4:
                    violations.append(Violation(
                        kind="FeatureNorm", frame_id=fid, detection=di,
                        message=f"{name} feature norm {n}"))
            except CorruptBlob as exc:
                violations.append(Violation(
                    kind="BlobLength", frame_id=fid, detection=di,
                    message=str(exc)))


def validate_episode(path: str) -> List[Violation]:
    """Check every episode invariant; violations come back as a report
    rather than exceptions.  Structurally malformed records are reported
    as RecordShape violations, never raised."""
    violations: List[Violation] = []
    try:
        ep = Episode(path)
    except (SchemaMismatch, MissingFile) as exc:
        return [Violation(kind=type(exc).__name__, message=str(exc))]
    intr = ep.manifest.intrinsics
    dims = ep.manifest.dims
    last_t = None
    count = 0
    frames_path = os.path.join(path, ep.manifest.paths["frames"])
    with open(frames_path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                fid = int(rec["frame_id"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                violations.append(Violation(
                    kind="RecordShape",
                    message=f"frames.jsonl line {lineno}: {exc}"))
                count += 1
                continue
            count += 1
            try:
                _validate_frame_record(ep, rec, fid, intr, dims, last_t,
                                       violations)
            except (KeyError, TypeError, ValueError) as exc:
                violations.append(Violation(
                    kind="RecordShape", frame_id=fid,
                    message=f"malformed frame record: {exc}"))
                continue
            last_t = float(rec["timestamp_s"])
    if count != ep.manifest.frame_count:
        violations.append(Violation(
            kind="FrameCount",
            message=f"manifest says {ep.manifest.frame_count} frames, "
                    f"found {count}"))
    try:
        for rec in ep.actions():
            if not rec.get("text"):
                violations.append(Violation(kind="ActionText",
                                            message="empty action text"))
    except MissingFile as exc:
        violations.append(Violation(kind="MissingFile", message=str(exc)))
    return violations


# -- snapshots ---------------------------------------------------------------

def memory_to_dict(memory: ObjectMemory) -> dict:
    entries = []
    for oid in memory.sorted_ids():
        e = memory.entries[oid]
        entries.append({
            "id": e.id,
            "category": e.category,
            "state": e.state,
            "mobility": e.mobility,
            "obs_count": e.obs_count,
            "last_seen": e.last_seen,
            "box": [[float(v) for v in e.box.min], [float(v) for v in e.box.max]],
            "related": sorted([rel, oid2] for rel, oid2 in e.related),
            "obj_clip": vec_to_b64(e.obj_feat.chan_clip),
            "obj_dino": vec_to_b64(e.obj_feat.chan_dino),
            "ctx": vec_to_b64(e.ctx_feat),
        })
    return {
        "kind": "egomem-snapshot",
        "schema_version": SNAPSHOT_SCHEMA_VERSION,
        "config": memory.config.to_dict(),
        "config_hash": memory.config.config_hash(),
        "intrinsics": {"fx": memory.intrinsics.fx, "fy": memory.intrinsics.fy,
                       "cx": memory.intrinsics.cx, "cy": memory.intrinsics.cy,
                       "width": memory.intrinsics.width,
                       "height": memory.intrinsics.height},
        "up_axis": memory.up_axis,
        "source": memory.source,
        "next_id": memory._next_id,
        "ingested": sorted(memory._ingested),
        "entries": entries,
        "frames": [{"frame_id": fm.frame_id,
                    "timestamp_s": float(fm.timestamp_s),
                    "ctx": vec_to_b64(fm.ctx_feat)} for fm in memory.frames],
        "actions": [{"timestamp_s": float(r.timestamp_s), "verb": r.verb,
                     "raw_text": r.raw_text, "target_ids": list(r.target_ids),
                     "frame_feat": vec_to_b64(r.frame_feat)
                     if r.frame_feat is not None else None,
                     "scripted": r.scripted}
                    for r in memory.action_buffer],
        "visible": [{"timestamp_s": float(r.timestamp_s),
                     "object_id": r.object_id,
                     "box": [[float(v) for v in r.box.min],
                             [float(v) for v in r.box.max]]}
                    for r in memory.visible_buffer],
        "report": memory.report.to_dict(),
    }


def canonical_snapshot_bytes(memory: ObjectMemory) -> bytes:
    doc = memory_to_dict(memory)
    return (json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


def save_snapshot(memory: ObjectMemory, path: str):
    data = canonical_snapshot_bytes(memory)
    try:
        with open(path, "wb") as f:
            f.write(data)
    except OSError as exc:
        raise StorageFailure(f"cannot write snapshot {path}: {exc}") from exc


def memory_from_dict(doc: dict) -> ObjectMemory:
    if doc.get("schema_version") != SNAPSHOT_SCHEMA_VERSION:
        raise SchemaMismatch(
            f"snapshot schema_version {doc.get('schema_version')!r} unsupported")
    config = EngineConfig.from_dict(doc["config"])
    i = doc["intrinsics"]
    memory = ObjectMemory(
        config,
        CameraIntrinsics(fx=i["fx"], fy=i["fy"], cx=i["cx"], cy=i["cy"],
                         width=i["width"], height=i["height"]),
        up_axis=doc["up_axis"])
    memory.source = dict(doc.get("source", {}))
    memory._next_id = int(doc["next_id"])
    memory._ingested = set(doc["ingested"])
    for e in doc["entries"]:
        memory.entries[e["id"]] = ObjectEntry(
            id=e["id"], category=e["category"], state=e["state"],
            related={(rel, oid) for rel, oid in e["related"]},
            box=Box3D(e["box"][0], e["box"][1]),
            obj_feat=FeaturePair(b64_to_vec(e["obj_clip"]),
                                 b64_to_vec(e["obj_dino"])),
            ctx_feat=b64_to_vec(e["ctx"]),
            mobility=e["mobility"], obs_count=e["obs_count"],
            last_seen=e["last_seen"])
    for fm in doc["frames"]:
        memory.frames.append(FrameMeta(fm["frame_id"], fm["timestamp_s"],
                                       b64_to_vec(fm["ctx"])))
    for r in doc["actions"]:
        memory.action_buffer.append(ActionRecord(
            timestamp_s=r["timestamp_s"], verb=r["verb"],
            raw_text=r["raw_text"], target_ids=list(r["target_ids"]),
            frame_feat=b64_to_vec(r["frame_feat"])
            if r["frame_feat"] is not None else None,
            scripted=r.get("scripted", False)))
    for r in doc["visible"]:
        memory.visible_buffer.append(VisibleRecord(
            timestamp_s=r["timestamp_s"], object_id=r["object_id"],
            box=Box3D(r["box"][0], r["box"][1])))
    memory.report = IngestReport(**doc["report"])
    return memory


def load_snapshot(path: str) -> ObjectMemory:
    if not os.path.exists(path):
        raise MissingFile(f"no snapshot at {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise CorruptBlob(f"snapshot {path} is not valid JSON: {exc}") from exc
    return memory_from_dict(doc)
