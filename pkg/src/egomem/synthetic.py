"""Procedural box-world scenes with exact ground truth.

Scenes are collections of axis-aligned boxes: scenery (depth-only),
receptacles and objects (rendered AND detected).  Depth is rendered by an
exact ray/box z-buffer, so every depth value equals the analytic ray
entry distance; detections are the per-object instance masks with tight
bounding boxes.  Appearance features are fixed random unit vectors per
object identity, optionally perturbed per observation, which makes re-ID
behaviour decidable against the script.

A scripted event list (move / pick / place / open / close) drives object
locations over time and is emitted as action annotations; the answer key
records the location schedule, the event order, and each object's final
receptacle for evaluation.
"""

from __future__ import annotations

import json
import math
import os
import zlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import InvalidSpec, UnknownObject
from .geometry import (Box3D, CameraIntrinsics, Detection2D, Pose,
                       Visibility, project_box)
from .memory import UP_AXES
from .similarity import FeaturePair
from .store import EpisodeWriter, vec_to_b64


def _stream(*parts) -> List[int]:
    """Stable integer seed stream from string/int parts."""
    out = []
    for p in parts:
        if isinstance(p, int):
            out.append(p & 0xFFFFFFFF)
        else:
            out.append(zlib.crc32(str(p).encode("utf-8")))
    return out


def unit_vector(dim: int, *key) -> np.ndarray:
    rng = np.random.default_rng(_stream(*key))
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def perturb_unit(vec: np.ndarray, eta: float, *key) -> np.ndarray:
    """v -> normalize(v + eta*g) with g a random unit vector; keeps
    cos(v, v') >= 1 - 2*eta for eta <= 1."""
    if eta <= 0.0:
        return vec.copy()
    g = unit_vector(vec.shape[0], *key)
    out = vec + eta * g
    return out / np.linalg.norm(out)


@dataclass
class BodySpec:
    name: str
    category: str
    box: Box3D
    detectable: bool = True
    is_receptacle: bool = False
    receptacle: Optional[str] = None  # starting receptacle, for validation


@dataclass
class RoomSpec:
    name: str
    region: Box3D


@dataclass
class EventSpec:
    t: float
    verb: str  # move | pick | place | open | close
    obj: str
    dest: Optional[str] = None


@dataclass
class NoiseSpec:
    pos_sigma_m: float = 0.0
    rot_sigma_deg: float = 0.0
    depth_sigma_m: float = 0.0
    feature_eta: float = 0.0


@dataclass
class CameraKey:
    t: float
    pos: Tuple[float, float, float]
    look_at: Tuple[float, float, float]


@dataclass
class WorldSpec:
    seed: int
    intrinsics: CameraIntrinsics
    bodies: List[BodySpec]
    trajectory: List[CameraKey]
    events: List[EventSpec] = field(default_factory=list)
    rooms: List[RoomSpec] = field(default_factory=list)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    up_axis: str = "+z"
    dims: Dict[str, int] = field(
        default_factory=lambda: {"clip": 64, "dino": 64, "ctx": 32})

    def validate(self) -> "WorldSpec":
        if self.up_axis not in UP_AXES:
            raise InvalidSpec(f"unknown up_axis {self.up_axis!r}")
        names = [b.name for b in self.bodies]
        if len(set(names)) != len(names):
            raise InvalidSpec("body names must be unique")
        by_name = {b.name: b for b in self.bodies}
        ts = [e.t for e in self.events]
        if ts != sorted(ts):
            raise InvalidSpec("events must be temporally ordered")
        for e in self.events:
            if e.verb not in ("move", "pick", "place", "open", "close"):
                raise InvalidSpec(f"unknown event verb {e.verb!r}")
            if e.obj not in by_name:
                raise InvalidSpec(f"event references unknown object {e.obj!r}")
            if e.verb in ("move", "place"):
                if e.dest not in by_name or not by_name[e.dest].is_receptacle:
                    raise InvalidSpec(
                        f"event destination {e.dest!r} is not a receptacle")
        if not self.trajectory:
            raise InvalidSpec("trajectory must have at least one frame")
        axis, sign = UP_AXES[self.up_axis]
        for b in self.bodies:
            if b.receptacle is None:
                continue
            recep = by_name.get(b.receptacle)
            if recep is None or not recep.is_receptacle:
                raise InvalidSpec(
                    f"{b.name} starts on unknown receptacle {b.receptacle!r}")
            bottom = b.box.min[axis] if sign > 0 else -b.box.max[axis]
            top = recep.box.max[axis] if sign > 0 else -recep.box.min[axis]
            if abs(bottom - top) > 0.05 + 1e-9:
                raise InvalidSpec(
                    f"{b.name} does not rest on {b.receptacle} "
                    f"(gap {abs(bottom - top)})")
        return self


def look_at_pose(pos, target, world_up=(0.0, 0.0, 1.0)) -> Pose:
    """World-from-camera pose looking from pos toward target (camera
    convention: x right, y down, z forward)."""
    pos = np.asarray(pos, dtype=np.float64)
    f = np.asarray(target, dtype=np.float64) - pos
    f = f / np.linalg.norm(f)
    up = np.asarray(world_up, dtype=np.float64)
    r = np.cross(f, up)
    n = np.linalg.norm(r)
    if n < 1e-9:
        raise InvalidSpec("camera forward is parallel to world up")
    r = r / n
    d = np.cross(f, r)
    rot = np.stack([r, d, f], axis=1)
    return Pose.from_matrix(rot, pos)


def orbit_trajectory(center, radius: float, height: float, frames: int,
                     dt: float = 1.0, start_deg: float = 0.0,
                     sweep_deg: float = 300.0, t0: float = 0.0) -> List[CameraKey]:
    center = np.asarray(center, dtype=np.float64)
    keys = []
    for i in range(frames):
        ang = math.radians(start_deg + sweep_deg * i / max(frames - 1, 1))
        pos = (center[0] + radius * math.cos(ang),
               center[1] + radius * math.sin(ang),
               height)
        keys.append(CameraKey(t=t0 + i * dt, pos=pos,
                              look_at=tuple(center)))
    return keys


# -- rendering ----------------------------------------------------------------

def render_scene(intr: CameraIntrinsics, pose: Pose,
                 boxes: List[Box3D]) -> Tuple[np.ndarray, np.ndarray]:
    """Exact ray/box z-buffer.  Returns (depth HxW float32 camera-Z meters,
    instance HxW int32, -1 where no box is hit).  Depth 0 marks no hit."""
    h, w = intr.height, intr.width
    vv, uu = np.mgrid[0:h, 0:w].astype(np.float64)
    d_cam = np.stack([(uu - intr.cx) / intr.fx,
                      (vv - intr.cy) / intr.fy,
                      np.ones_like(uu)], axis=-1)
    d_world = d_cam @ pose.rotation_matrix().T
    origin = pose.camera_center()
    best_t = np.full((h, w), np.inf)
    best_i = np.full((h, w), -1, dtype=np.int32)
    eps = 1e-9
    for i, box in enumerate(boxes):
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (box.min - origin) / d_world
            t2 = (box.max - origin) / d_world
        lo = np.minimum(t1, t2)
        hi = np.maximum(t1, t2)
        par = d_world == 0.0
        if np.any(par):
            inside = (origin >= box.min) & (origin <= box.max)
            lo = np.where(par, np.where(inside, -np.inf, np.inf), lo)
            hi = np.where(par, np.where(inside, np.inf, -np.inf), hi)
        t_near = lo.max(axis=-1)
        t_far = hi.min(axis=-1)
        hit = (t_far >= t_near) & (t_near > eps)
        t_near = np.where(hit, t_near, np.inf)
        closer = t_near < best_t
        best_t = np.where(closer, t_near, best_t)
        best_i = np.where(closer, i, best_i)
    depth = np.where(np.isfinite(best_t), best_t, 0.0).astype(np.float32)
    return depth, best_i


# -- scripted object locations --------------------------------------------

def _place_on(obj_box: Box3D, dest_box: Box3D, up_axis: str) -> Box3D:
    """Rest obj on dest's top face, horizontally centered."""
    axis, sign = UP_AXES[up_axis]
    extent = obj_box.max - obj_box.min
    center = (dest_box.min + dest_box.max) / 2.0
    mn = np.empty(3)
    for k in range(3):
        if k == axis:
            mn[k] = dest_box.max[k] if sign > 0 else dest_box.min[k] - extent[k]
        else:
            mn[k] = center[k] - extent[k] / 2.0
    return Box3D(mn, mn + extent)


def build_schedules(spec: WorldSpec) -> Dict[str, List[Tuple[float, Optional[Box3D]]]]:
    """Per-object piecewise-constant location schedule (None = in hand)."""
    by_name = {b.name: b for b in spec.bodies}
    schedules: Dict[str, List[Tuple[float, Optional[Box3D]]]] = {
        b.name: [(-math.inf, b.box)] for b in spec.bodies}
    for e in spec.events:
        sched = schedules[e.obj]
        if e.verb == "pick":
            sched.append((e.t, None))
        elif e.verb in ("move", "place"):
            base = by_name[e.obj].box
            sched.append((e.t, _place_on(base, by_name[e.dest].box,
                                         spec.up_axis)))
    return schedules


def box_at(schedule: List[Tuple[float, Optional[Box3D]]],
           t: float) -> Optional[Box3D]:
    box = schedule[0][1]
    for t_from, b in schedule:
        if t >= t_from:
            box = b
        else:
            break
    return box


def last_resting_box(schedule, t: float) -> Optional[Box3D]:
    """Most recent non-None location at or before t (where the object was
    last seen resting, even if currently in hand)."""
    box = None
    for t_from, b in schedule:
        if t_from > t:
            break
        if b is not None:
            box = b
    return box


# -- feature model ----------------------------------------------------------

class FeatureModel:
    """Identity-seeded unit vectors for objects, rooms, and background."""

    def __init__(self, spec: WorldSpec):
        self.spec = spec
        self.dims = spec.dims

    def object_pair(self, name: str) -> FeaturePair:
        return FeaturePair(
            unit_vector(self.dims["clip"], self.spec.seed, "obj-clip", name),
            unit_vector(self.dims["dino"], self.spec.seed, "obj-dino", name))

    def observed_pair(self, name: str, frame_id: int, eta: float) -> FeaturePair:
        base = self.object_pair(name)
        return FeaturePair(
            perturb_unit(base.chan_clip, eta, self.spec.seed, "noise-clip",
                         name, frame_id),
            perturb_unit(base.chan_dino, eta, self.spec.seed, "noise-dino",
                         name, frame_id))

    def background_pair(self) -> FeaturePair:
        return FeaturePair(
            unit_vector(self.dims["clip"], self.spec.seed, "bg-clip"),
            unit_vector(self.dims["dino"], self.spec.seed, "bg-dino"))

    def room_ctx(self, room: str) -> np.ndarray:
        return unit_vector(self.dims["ctx"], self.spec.seed, "room-ctx", room)

    def room_of(self, point: np.ndarray) -> str:
        for room in self.spec.rooms:
            if np.all(point >= room.region.min) and np.all(point <= room.region.max):
                return room.name
        return "__default__"

    def frame_ctx(self, cam_pos: np.ndarray, frame_id: int, eta: float) -> np.ndarray:
        base = self.room_ctx(self.room_of(cam_pos))
        return perturb_unit(base, eta, self.spec.seed, "noise-ctx", frame_id)


# -- answer key ---------------------------------------------------------------

@dataclass
class AnswerKey:
    provenance: str
    objects: List[Dict[str, str]]
    schedules: Dict[str, List[Tuple[float, Optional[Box3D]]]]
    events: List[Dict]
    final_receptacle: Dict[str, str]
    locate_queries: List[Dict]

    def to_dict(self) -> dict:
        sched = {
            name: [[t if math.isfinite(t) else None,
                    [[float(v) for v in b.min], [float(v) for v in b.max]]
                    if b is not None else None]
                   for t, b in items]
            for name, items in self.schedules.items()}
        return {
            "provenance": self.provenance,
            "objects": self.objects,
            "schedules": sched,
            "events": self.events,
            "final_receptacle": self.final_receptacle,
            "locate_queries": self.locate_queries,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnswerKey":
        sched = {}
        for name, items in d["schedules"].items():
            out = []
            for t, b in items:
                out.append((-math.inf if t is None else float(t),
                            Box3D(b[0], b[1]) if b is not None else None))
            sched[name] = out
        return cls(provenance=d["provenance"], objects=d["objects"],
                   schedules=sched, events=d["events"],
                   final_receptacle=d["final_receptacle"],
                   locate_queries=d["locate_queries"])

    def save(self, path: str):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, sort_keys=True, indent=1)
            f.write("\n")

    @classmethod
    def load(cls, path: str) -> "AnswerKey":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def gt_locate(key: AnswerKey, object_name: str, t: float) -> Box3D:
    """Ground-truth box of an object at time t (last resting box while the
    object is in hand)."""
    if object_name not in key.schedules:
        raise UnknownObject(f"{object_name!r} not in answer key")
    box = box_at(key.schedules[object_name], t)
    if box is None:
        box = last_resting_box(key.schedules[object_name], t)
    if box is None:
        raise UnknownObject(f"{object_name!r} has no location at t={t}")
    return box


# -- event annotations ------------------------------------------------------

_EVENT_TEXT = {
    "move": "C moves the {obj} to the {dest}",
    "pick": "C picks the {obj}",
    "place": "C places the {obj} on the {dest}",
    "open": "C opens the {obj}",
    "close": "C closes the {obj}",
}

_EVENT_VERB = {"move": "moves", "pick": "picks", "place": "places",
               "open": "opens", "close": "closes"}


def event_text(e: EventSpec, by_name: Dict[str, BodySpec]) -> str:
    dest_cat = by_name[e.dest].category if e.dest else ""
    return _EVENT_TEXT[e.verb].format(obj=by_name[e.obj].category,
                                      dest=dest_cat)


# -- generation ---------------------------------------------------------------

@dataclass
class RenderedFrame:
    frame_id: int
    timestamp_s: float
    true_pose: Pose
    recorded_pose: Pose  # noisy when the world spec says so
    depth: np.ndarray
    ctx_feat: np.ndarray
    detections: List[Tuple[Detection2D, FeaturePair]]


def render_frames(spec: WorldSpec):
    """Yield each frame of the scripted world (shared by generate() and by
    in-memory test harnesses).  Deterministic in the seed."""
    model = FeatureModel(spec)
    schedules = build_schedules(spec)
    by_name = {b.name: b for b in spec.bodies}
    eta = spec.noise.feature_eta

    for frame_id, key in enumerate(spec.trajectory):
        true_pose = look_at_pose(key.pos, key.look_at)
        boxes, live_names = [], []
        for b in spec.bodies:
            box = box_at(schedules[b.name], key.t)
            if box is not None:
                boxes.append(box)
                live_names.append(b.name)
        depth, inst = render_scene(spec.intrinsics, true_pose, boxes)
        if spec.noise.depth_sigma_m > 0:
            rng = np.random.default_rng(_stream(spec.seed, "depth-noise", frame_id))
            noise = rng.normal(0.0, spec.noise.depth_sigma_m, depth.shape)
            depth = np.where(depth > 0, np.maximum(depth + noise, 1e-4),
                             0.0).astype(np.float32)

        detections = []
        for i, name in enumerate(live_names):
            if not by_name[name].detectable:
                continue
            rows, cols = np.nonzero(inst == i)
            if rows.size == 0:
                continue
            r0, c0 = int(rows.min()), int(cols.min())
            r1, c1 = int(rows.max()) + 1, int(cols.max()) + 1
            mask = np.zeros((r1 - r0, c1 - c0), dtype=bool)
            mask[rows - r0, cols - c0] = True
            det = Detection2D(category=by_name[name].category,
                              bbox2d=(float(c0), float(r0), float(c1), float(r1)),
                              confidence=1.0, mask=mask)
            detections.append((det, model.observed_pair(name, frame_id, eta)))

        recorded_pose = true_pose
        if spec.noise.pos_sigma_m > 0 or spec.noise.rot_sigma_deg > 0:
            rng = np.random.default_rng(_stream(spec.seed, "pose-noise", frame_id))
            dt_vec = rng.normal(0.0, spec.noise.pos_sigma_m, 3)
            axis = rng.standard_normal(3)
            axis /= np.linalg.norm(axis)
            ang = rng.normal(0.0, math.radians(spec.noise.rot_sigma_deg))
            k = np.array([[0, -axis[2], axis[1]],
                          [axis[2], 0, -axis[0]],
                          [-axis[1], axis[0], 0]])
            d_rot = np.eye(3) + math.sin(ang) * k + (1 - math.cos(ang)) * (k @ k)
            recorded_pose = Pose.from_matrix(
                true_pose.rotation_matrix() @ d_rot,
                true_pose.camera_center() + dt_vec)

        yield RenderedFrame(frame_id=frame_id, timestamp_s=key.t,
                            true_pose=true_pose, recorded_pose=recorded_pose,
                            depth=depth,
                            ctx_feat=model.frame_ctx(np.asarray(key.pos),
                                                     frame_id, eta),
                            detections=detections)


def iter_observations(spec: WorldSpec):
    """FrameObservations as the engine would read them from disk (recorded
    pose, not the true one)."""
    from .geometry import DepthMap
    from .memory import FrameObservation
    for rf in render_frames(spec):
        yield FrameObservation(frame_id=rf.frame_id,
                               timestamp_s=rf.timestamp_s,
                               pose=rf.recorded_pose,
                               depth=DepthMap(rf.depth),
                               ctx_feat=rf.ctx_feat,
                               detections=rf.detections)


def generate(spec: WorldSpec, out_dir: str) -> AnswerKey:
    """Render the scripted world into a conformant episode directory plus
    answer key and world ground-truth sidecars.  Deterministic in the seed."""
    spec.validate()
    os.makedirs(out_dir, exist_ok=True)
    model = FeatureModel(spec)
    schedules = build_schedules(spec)
    by_name = {b.name: b for b in spec.bodies}
    provenance = f"synthetic seed={spec.seed} bodies={len(spec.bodies)}"
    writer = EpisodeWriter(out_dir, spec.intrinsics, spec.up_axis, spec.dims,
                           provenance=provenance)
    for rf in render_frames(spec):
        writer.add_frame(rf.frame_id, rf.timestamp_s, rf.recorded_pose,
                         rf.depth, rf.ctx_feat, rf.detections)
    for e in spec.events:
        writer.add_action(e.t, event_text(e, by_name),
                          verb=_EVENT_VERB[e.verb])
    writer.finalize()

    with open(os.path.join(out_dir, "world.json"), "w", encoding="utf-8") as f:
        json.dump(world_spec_to_dict(spec), f, sort_keys=True, indent=1)
        f.write("\n")

    key = _build_answer_key(spec, schedules, model, provenance)
    key.save(os.path.join(out_dir, "answer_key.json"))
    return key


def _build_answer_key(spec: WorldSpec, schedules, model: FeatureModel,
                      provenance: str) -> AnswerKey:
    by_name = {b.name: b for b in spec.bodies}
    final_recep: Dict[str, str] = {}
    for b in spec.bodies:
        if b.receptacle is not None:
            final_recep[b.name] = b.receptacle
    for e in spec.events:
        if e.verb in ("move", "place"):
            final_recep[e.obj] = e.dest
        elif e.verb == "pick":
            final_recep.pop(e.obj, None)
    t_end = spec.trajectory[-1].t
    queries = []
    for b in spec.bodies:
        if not b.detectable:
            continue
        pair = model.object_pair(b.name)
        queries.append({
            "object": b.name, "t": t_end,
            "clip": vec_to_b64(pair.chan_clip, "<f4"),
            "dino": vec_to_b64(pair.chan_dino, "<f4"),
        })
    events = [{"t": e.t, "verb": _EVENT_VERB[e.verb],
               "object": e.obj, "object_category": by_name[e.obj].category,
               "dest": e.dest,
               "dest_category": by_name[e.dest].category if e.dest else None}
              for e in spec.events]
    return AnswerKey(
        provenance=provenance,
        objects=[{"name": b.name, "category": b.category,
                  "receptacle": bool(b.is_receptacle)}
                 for b in spec.bodies if b.detectable],
        schedules=schedules, events=events,
        final_receptacle=final_recep, locate_queries=queries)


# -- spec (de)serialization ---------------------------------------------------

def _box_to_list(b: Box3D):
    return [[float(v) for v in b.min], [float(v) for v in b.max]]


def world_spec_to_dict(spec: WorldSpec) -> dict:
    i = spec.intrinsics
    return {
        "seed": spec.seed,
        "intrinsics": {"fx": i.fx, "fy": i.fy, "cx": i.cx, "cy": i.cy,
                       "width": i.width, "height": i.height},
        "up_axis": spec.up_axis,
        "dims": dict(spec.dims),
        "noise": {"pos_sigma_m": spec.noise.pos_sigma_m,
                  "rot_sigma_deg": spec.noise.rot_sigma_deg,
                  "depth_sigma_m": spec.noise.depth_sigma_m,
                  "feature_eta": spec.noise.feature_eta},
        "rooms": [{"name": r.name, "region": _box_to_list(r.region)}
                  for r in spec.rooms],
        "bodies": [{"name": b.name, "category": b.category,
                    "box": _box_to_list(b.box), "detectable": b.detectable,
                    "is_receptacle": b.is_receptacle,
                    "receptacle": b.receptacle}
                   for b in spec.bodies],
        "trajectory": [{"t": k.t, "pos": list(k.pos),
                        "look_at": list(k.look_at)} for k in spec.trajectory],
        "events": [{"t": e.t, "verb": e.verb, "object": e.obj, "dest": e.dest}
                   for e in spec.events],
    }


def world_spec_from_dict(d: dict) -> WorldSpec:
    i = d["intrinsics"]
    traj = d["trajectory"]
    if isinstance(traj, dict):
        if traj.get("kind") != "orbit":
            raise InvalidSpec(f"unknown trajectory kind {traj.get('kind')!r}")
        keys = orbit_trajectory(
            traj["center"], traj["radius"], traj["height"], traj["frames"],
            dt=traj.get("dt", 1.0), start_deg=traj.get("start_deg", 0.0),
            sweep_deg=traj.get("sweep_deg", 300.0), t0=traj.get("t0", 0.0))
    else:
        keys = [CameraKey(t=k["t"], pos=tuple(k["pos"]),
                          look_at=tuple(k["look_at"])) for k in traj]
    noise = d.get("noise", {})
    return WorldSpec(
        seed=int(d["seed"]),
        intrinsics=CameraIntrinsics(fx=i["fx"], fy=i["fy"], cx=i["cx"],
                                    cy=i["cy"], width=i["width"],
                                    height=i["height"]),
        up_axis=d.get("up_axis", "+z"),
        dims={k: int(v) for k, v in d.get(
            "dims", {"clip": 64, "dino": 64, "ctx": 32}).items()},
        noise=NoiseSpec(
            pos_sigma_m=noise.get("pos_sigma_m", 0.0),
            rot_sigma_deg=noise.get("rot_sigma_deg", 0.0),
            depth_sigma_m=noise.get("depth_sigma_m", 0.0),
            feature_eta=noise.get("feature_eta", 0.0)),
        rooms=[RoomSpec(r["name"], Box3D(*r["region"]))
               for r in d.get("rooms", [])],
        bodies=[BodySpec(name=b["name"], category=b["category"],
                         box=Box3D(*b["box"]),
                         detectable=b.get("detectable", True),
                         is_receptacle=b.get("is_receptacle", False),
                         receptacle=b.get("receptacle"))
                for b in d["bodies"]],
        trajectory=keys,
        events=[EventSpec(t=e["t"], verb=e["verb"], obj=e["object"],
                          dest=e.get("dest")) for e in d.get("events", [])],
    ).validate()


def load_world_spec(path: str) -> WorldSpec:
    with open(path, "r", encoding="utf-8") as f:
        return world_spec_from_dict(json.load(f))


# -- the built-in provider (probe + association oracle) -----------------------

def _iou2d(a, b) -> float:
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union


class SyntheticProvider:
    """Feature probe and association oracle backed by world ground truth.

    Deterministic: all randomness is keyed by (seed, frame, object).  The
    probe answers with the identity features of whichever ground-truth
    object dominates the requested region, or a background feature when
    nothing does; the oracle compares the candidate region against the
    projected ground-truth box of the action's scripted target.
    """

    def __init__(self, spec: WorldSpec, region_iou: float = 0.5,
                 min_coverage: float = 0.25):
        self.spec = spec
        self.model = FeatureModel(self.spec)
        self.schedules = build_schedules(self.spec)
        self.by_name = {b.name: b for b in self.spec.bodies}
        self.region_iou = region_iou
        self.min_coverage = min_coverage
        self._frame_cache: Dict[int, Tuple[np.ndarray, List[str], Pose]] = {}

    @classmethod
    def from_episode(cls, episode_root: str, **kwargs) -> "SyntheticProvider":
        return cls(load_world_spec(os.path.join(episode_root, "world.json")),
                   **kwargs)

    def _frame_time(self, frame_id: int) -> float:
        return self.spec.trajectory[frame_id].t

    def _frame_state(self, frame_id: int):
        if frame_id not in self._frame_cache:
            key = self.spec.trajectory[frame_id]
            pose = look_at_pose(key.pos, key.look_at)
            boxes, names = [], []
            for b in self.spec.bodies:
                box = box_at(self.schedules[b.name], key.t)
                if box is not None:
                    boxes.append(box)
                    names.append(b.name)
            _, inst = render_scene(self.spec.intrinsics, pose, boxes)
            self._frame_cache[frame_id] = (inst, names, pose)
        return self._frame_cache[frame_id]

    def _visible_bbox(self, inst: np.ndarray, index: int):
        rows, cols = np.nonzero(inst == index)
        if rows.size == 0:
            return None
        return (float(cols.min()), float(rows.min()),
                float(cols.max()) + 1.0, float(rows.max()) + 1.0)

    def embed_region(self, frame_id: int, bbox2d) -> FeaturePair:
        """What a crop of the region would embed: the identity features of
        the object dominating the crop (more pixels than background and than
        any other object, with a minimum coverage floor), else background.
        Scenery pixels count as background."""
        inst, names, _ = self._frame_state(frame_id)
        x0, y0, x1, y1 = bbox2d
        h, w = inst.shape
        r0, c0 = max(int(math.floor(y0)), 0), max(int(math.floor(x0)), 0)
        r1, c1 = min(int(math.ceil(y1)), h), min(int(math.ceil(x1)), w)
        if r1 <= r0 or c1 <= c0:
            return self.model.background_pair()
        window = inst[r0:r1, c0:c1]
        area = window.size
        counts = np.bincount(window[window >= 0].ravel(), minlength=len(names))
        bg = area - int(counts.sum())
        for i, name in enumerate(names):
            if not self.by_name[name].detectable:
                bg += int(counts[i])
                counts[i] = 0
        best = int(np.argmax(counts)) if counts.size else -1
        if (best >= 0 and counts[best] > bg
                and counts[best] / area >= self.min_coverage):
            return self.model.observed_pair(names[best], frame_id,
                                            self.spec.noise.feature_eta)
        return self.model.background_pair()

    def is_target(self, frame_id: int, region, text: str) -> bool:
        t = self._frame_time(frame_id)
        target = None
        for e in self.spec.events:
            if abs(e.t - t) < 1e-9 and event_text(e, self.by_name) == text:
                target = e.obj
                break
        if target is None:
            candidates = [e for e in self.spec.events
                          if event_text(e, self.by_name) == text]
            if not candidates:
                return False
            target = min(candidates, key=lambda e: abs(e.t - t)).obj
        box = box_at(self.schedules[target], t)
        if box is None:
            box = last_resting_box(self.schedules[target], t)
        if box is None:
            return False
        _, _, pose = self._frame_state(frame_id)
        status = project_box(box, pose, self.spec.intrinsics)
        if status.kind is Visibility.OUT_OF_VIEW:
            return False
        return _iou2d(region, status.region) >= self.region_iou
