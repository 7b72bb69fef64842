"""Persistent object memory: one entry per perceived object in the scene.

Each frame the memory is split into static and dynamic entries by probing
the appearance of "where the object should be"; new detections are then
re-identified against statics first (spatial rules), dynamics second
(volume + appearance rule), merged on a match and inserted otherwise.
Relations among the objects seen this frame are recomputed from their
boxes afterwards.

Single-writer contract: update() calls must be serialized per memory
instance.  Readers operate on snapshots taken between updates.
"""

from __future__ import annotations

import logging
from bisect import insort
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Protocol, Set, Tuple

import numpy as np

from .config import EngineConfig
from .errors import InsufficientDepth, ProbeFailure, UnknownId
from .geometry import (Box3D, CameraIntrinsics, DepthMap, Detection2D, Pose,
                       Visibility, check_visibility, lift_detection)
from .history import ActionBuffer, VisibleBuffer, VisibleRecord
from .similarity import (FeaturePair, spatial_iou, spatial_maxios,
                         spatial_vol_sim, visual_similarity)

logger = logging.getLogger(__name__)

UP_AXES = {"+x": (0, 1.0), "-x": (0, -1.0), "+y": (1, 1.0),
           "-y": (1, -1.0), "+z": (2, 1.0), "-z": (2, -1.0)}


class ObjectState:
    OPEN = "Open"
    CLOSE = "Close"
    IN_HAND = "InHand"
    NORMAL = "Normal"
    ALL = (OPEN, CLOSE, IN_HAND, NORMAL)


class Relation:
    ON = "On"
    UPHOLDS = "Upholds"
    IN = "In"
    CONTAINS = "Contains"
    INVERSE = {ON: UPHOLDS, UPHOLDS: ON, IN: CONTAINS, CONTAINS: IN}


class Mobility:
    STATIC = "Static"
    DYNAMIC = "Dynamic"


@dataclass
class ObjectEntry:
    id: int
    category: str
    state: str
    related: Set[Tuple[str, int]]
    box: Box3D
    obj_feat: FeaturePair
    ctx_feat: np.ndarray
    mobility: str = Mobility.STATIC
    obs_count: int = 1
    last_seen: int = 0


@dataclass
class FrameObservation:
    frame_id: int
    timestamp_s: float
    pose: Pose
    depth: DepthMap
    ctx_feat: np.ndarray
    detections: List[Tuple[Detection2D, FeaturePair]]


@dataclass
class FrameMeta:
    frame_id: int
    timestamp_s: float
    ctx_feat: np.ndarray


class FeatureProbe(Protocol):
    def embed_region(self, frame_id: int, bbox2d) -> FeaturePair:
        """Appearance of the given screen region in the given frame."""
        ...


@dataclass
class IngestReport:
    frames_processed: int = 0
    detections_total: int = 0
    detections_skipped: int = 0
    probe_failures: int = 0
    new_entries: int = 0
    static_merges: int = 0
    dynamic_merges: int = 0
    dynamic_marks: int = 0
    actions_logged: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _renormalize(vec: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(vec)
    if n == 0.0:
        return vec
    return vec / n


def merge_entry(existing: ObjectEntry, obs: ObjectEntry, window: int,
                frame_id: int) -> ObjectEntry:
    """Moving-average merge of an observation into a matched entry.

    Every averaged field follows v <- ((N-1)*v + x) / N; feature vectors are
    re-normalized to unit norm afterwards.  Category stays with the existing
    entry (detector noise is transient).
    """
    n = float(window)
    blend = lambda old, new: ((n - 1.0) * old + new) / n
    existing.box = Box3D(blend(existing.box.min, obs.box.min),
                         blend(existing.box.max, obs.box.max))
    existing.obj_feat = FeaturePair(
        _renormalize(blend(existing.obj_feat.chan_clip, obs.obj_feat.chan_clip)),
        _renormalize(blend(existing.obj_feat.chan_dino, obs.obj_feat.chan_dino)))
    existing.ctx_feat = _renormalize(blend(existing.ctx_feat, obs.ctx_feat))
    existing.obs_count += 1
    existing.last_seen = frame_id
    return existing


def detect_relations(entries: List[ObjectEntry], up_axis: str,
                     contact_eps: float,
                     containment_thresh: float) -> Set[Tuple[int, str, int]]:
    """Relations among the given entries from their boxes.

    (B On A, A Upholds B) when B's bottom face is within contact_eps of A's
    top face and B's horizontal footprint lies inside A's footprint expanded
    by contact_eps.  (B In A, A Contains B) when the contained fraction of
    B's volume reaches containment_thresh and B is smaller than A.
    """
    axis, sign = UP_AXES[up_axis]
    horiz = [k for k in range(3) if k != axis]

    def alt_bottom(box: Box3D) -> float:
        return sign * (box.min[axis] if sign > 0 else box.max[axis])

    def alt_top(box: Box3D) -> float:
        return sign * (box.max[axis] if sign > 0 else box.min[axis])

    out: Set[Tuple[int, str, int]] = set()
    for b in entries:
        for a in entries:
            if a.id == b.id:
                continue
            if abs(alt_bottom(b.box) - alt_top(a.box)) <= contact_eps:
                inside = all(
                    b.box.min[k] >= a.box.min[k] - contact_eps
                    and b.box.max[k] <= a.box.max[k] + contact_eps
                    for k in horiz)
                if inside:
                    out.add((b.id, Relation.ON, a.id))
                    out.add((a.id, Relation.UPHOLDS, b.id))
            v_b, v_a = b.box.volume(), a.box.volume()
            overlap = np.minimum(a.box.max, b.box.max) - np.maximum(a.box.min, b.box.min)
            v_inter = float(np.prod(np.maximum(overlap, 0.0)))
            if v_b > 0.0:
                contained = v_inter / v_b
            else:
                contained = 1.0 if (np.all(b.box.min >= a.box.min)
                                    and np.all(b.box.max <= a.box.max)) else 0.0
            if contained >= containment_thresh and v_b < v_a:
                out.add((b.id, Relation.IN, a.id))
                out.add((a.id, Relation.CONTAINS, b.id))
    return out


class ObjectMemory:
    """The persistent object memory plus frame table and history buffers."""

    def __init__(self, config: EngineConfig, intrinsics: CameraIntrinsics,
                 up_axis: str = "+z"):
        if up_axis not in UP_AXES:
            raise ValueError(f"unknown up_axis {up_axis!r}")
        self.config = config
        self.intrinsics = intrinsics
        self.up_axis = up_axis
        self.entries: Dict[int, ObjectEntry] = {}
        self.frames: List[FrameMeta] = []
        self.action_buffer = ActionBuffer()
        self.visible_buffer = VisibleBuffer()
        self.report = IngestReport()
        self.source: Dict[str, object] = {}  # episode provenance, set on ingest
        self._next_id = 1
        self._ingested: Set[int] = set()

    # -- access helpers -------------------------------------------------

    def entry(self, object_id: int) -> ObjectEntry:
        try:
            return self.entries[object_id]
        except KeyError:
            raise UnknownId(f"object id {object_id} not in memory") from None

    def sorted_ids(self) -> List[int]:
        return sorted(self.entries)

    def categories(self) -> List[str]:
        return sorted({e.category for e in self.entries.values()})

    # -- relation bookkeeping (mirror-consistent) ------------------------

    def add_relation(self, subject_id: int, relation: str, object_id: int):
        self.entry(subject_id).related.add((relation, object_id))
        self.entry(object_id).related.add((Relation.INVERSE[relation], subject_id))

    def remove_relation(self, subject_id: int, relation: str, object_id: int):
        self.entry(subject_id).related.discard((relation, object_id))
        self.entry(object_id).related.discard((Relation.INVERSE[relation], subject_id))

    def clear_carry_relations(self, object_id: int):
        """Drop the On/In pairs of an object that left its receptacle."""
        entry = self.entry(object_id)
        for rel, other in list(entry.related):
            if rel in (Relation.ON, Relation.IN):
                self.remove_relation(object_id, rel, other)

    # -- the split / re-ID / merge pipeline ------------------------------

    def split_static_dynamic(self, frame: FrameObservation, probe: FeatureProbe,
                             thresh: Optional[float] = None):
        """Partition the whole memory into static and dynamic entries.

        Entries whose stored box is seen with no occlusion in this frame are
        probed at their projected region; a probe whose appearance falls
        below the threshold means the object is no longer where it should be
        and is marked Dynamic.  Everything else (out of view, or blocked by
        anything nearer) keeps its current mobility: partially hidden
        objects are the static MaxIoS rule's job, not the split's.
        """
        if thresh is None:
            thresh = self.config.split_visual_thresh
        cfg = self.config
        for oid in self.sorted_ids():
            entry = self.entries[oid]
            status = check_visibility(
                entry.box, frame.depth, frame.pose, self.intrinsics,
                margin=cfg.occlusion_margin,
                occluded_frac=cfg.split_max_blocked,
                min_samples=cfg.min_visibility_samples)
            if status.kind is not Visibility.VISIBLE:
                continue
            try:
                probed = probe.embed_region(frame.frame_id, status.region)
            except ProbeFailure:
                self.report.probe_failures += 1
                continue
            sim = visual_similarity(entry.obj_feat, probed,
                                    cfg.clip_weight, cfg.dino_weight)
            if sim < thresh:
                if entry.mobility != Mobility.DYNAMIC:
                    self.report.dynamic_marks += 1
                    logger.debug("entry %d (%s) marked dynamic at frame %d "
                                 "(probe similarity %.3f)", oid,
                                 entry.category, frame.frame_id, sim)
                entry.mobility = Mobility.DYNAMIC
        statics = [i for i in self.sorted_ids()
                   if self.entries[i].mobility == Mobility.STATIC]
        dynamics = [i for i in self.sorted_ids()
                    if self.entries[i].mobility == Mobility.DYNAMIC]
        return statics, dynamics

    def static_reid(self, cand: ObjectEntry, statics: List[int]) -> Optional[int]:
        """First static entry with spatial IoU above threshold, or spatial
        MaxIoS above threshold with an identical category."""
        cfg = self.config
        for oid in statics:
            s = self.entries[oid]
            if spatial_iou(cand.box, s.box) > cfg.static_iou_thresh:
                return oid
            if (spatial_maxios(cand.box, s.box) > cfg.static_maxios_thresh
                    and cand.category == s.category):
                return oid
        return None

    def dynamic_reid(self, cand: ObjectEntry, dynamics: List[int]) -> Optional[int]:
        """First dynamic entry with volume similarity and visual similarity
        both above threshold (strict >)."""
        cfg = self.config
        for oid in dynamics:
            d = self.entries[oid]
            if (spatial_vol_sim(cand.box, d.box) > cfg.dynamic_volsim_thresh
                    and visual_similarity(cand.obj_feat, d.obj_feat,
                                          cfg.clip_weight, cfg.dino_weight)
                    > cfg.dynamic_visual_thresh):
                return oid
        return None

    def update(self, frame: FrameObservation, probe: FeatureProbe) -> "ObjectMemory":
        """One full memory-update step for an incoming frame."""
        if frame.frame_id in self._ingested:
            raise ValueError(f"frame {frame.frame_id} already ingested")
        self._ingested.add(frame.frame_id)
        cfg = self.config

        statics, dynamics = self.split_static_dynamic(frame, probe)
        current_ids: List[int] = []

        for det, feat in frame.detections:
            self.report.detections_total += 1
            try:
                box = lift_detection(det, frame.depth, frame.pose,
                                     self.intrinsics, trim=cfg.trim_fraction,
                                     min_pixels=cfg.min_depth_pixels)
            except InsufficientDepth:
                self.report.detections_skipped += 1
                continue
            cand = ObjectEntry(id=-1, category=det.category,
                               state=ObjectState.NORMAL, related=set(),
                               box=box, obj_feat=feat,
                               ctx_feat=np.asarray(frame.ctx_feat, dtype=np.float64),
                               mobility=Mobility.STATIC,
                               obs_count=1, last_seen=frame.frame_id)
            matched = self.static_reid(cand, statics)
            if matched is not None:
                merge_entry(self.entries[matched], cand,
                            cfg.static_window, frame.frame_id)
                self.report.static_merges += 1
            else:
                matched = self.dynamic_reid(cand, dynamics)
                if matched is not None:
                    merge_entry(self.entries[matched], cand,
                                cfg.dynamic_window, frame.frame_id)
                    self.entries[matched].mobility = Mobility.STATIC
                    dynamics.remove(matched)
                    insort(statics, matched)
                    self.report.dynamic_merges += 1
                else:
                    cand.id = self._next_id
                    self._next_id += 1
                    self.entries[cand.id] = cand
                    insort(statics, cand.id)
                    matched = cand.id
                    self.report.new_entries += 1
            if matched not in current_ids:
                current_ids.append(matched)

        self._recompute_relations(current_ids)

        for oid in current_ids:
            e = self.entries[oid]
            self.visible_buffer.append(VisibleRecord(
                timestamp_s=frame.timestamp_s, object_id=oid,
                box=Box3D(e.box.min.copy(), e.box.max.copy())))

        self.frames.append(FrameMeta(frame.frame_id, frame.timestamp_s,
                                     np.asarray(frame.ctx_feat, dtype=np.float64)))
        self.report.frames_processed += 1
        return self

    def _recompute_relations(self, current_ids: List[int]):
        """Replace relation pairs whose both endpoints were seen this frame;
        pairs reaching outside the frame were not re-examined and stay."""
        current = set(current_ids)
        for oid in current_ids:
            entry = self.entries[oid]
            for rel, other in list(entry.related):
                if other in current:
                    entry.related.discard((rel, other))
        fresh = detect_relations([self.entries[i] for i in sorted(current)],
                                 self.up_axis, self.config.contact_eps,
                                 self.config.containment_thresh)
        for subj, rel, obj in fresh:
            self.entries[subj].related.add((rel, obj))

    def snapshot(self) -> "ObjectMemory":
        """Detached copy for readers; the writer never blocks on it.
        Serialization round trip guarantees full isolation from later
        updates."""
        from .store import memory_from_dict, memory_to_dict
        return memory_from_dict(memory_to_dict(self))

    # -- invariant check (used by tests and the snapshot writer) ---------

    def check_mirror_consistency(self) -> bool:
        for e in self.entries.values():
            for rel, other in e.related:
                mirror = (Relation.INVERSE[rel], e.id)
                if other not in self.entries or mirror not in self.entries[other].related:
                    return False
        return True
