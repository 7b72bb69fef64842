"""Episode replay through the memory, and the three evaluation tasks.

The ingest driver replays an episode frame by frame through the memory
update, feeding action annotations to the association pathway as their
timestamps are reached.  Evaluation compares a finished snapshot against
a synthetic answer key:

    locate  - per-query success rate / mean L2 / answered fraction
    orders  - the action buffer must reproduce the scripted event order
    states  - each moved object's RO field must name its final receptacle
"""

from __future__ import annotations

from typing import List, Optional

import numpy as np

from .actions import ActionAnnotation, extract_nouns, process_action
from .config import EngineConfig
from .errors import MismatchedEpisode
from .memory import ObjectMemory, Relation
from .similarity import FeaturePair, visual_similarity
from .store import b64_to_vec, load_episode
from .synthetic import AnswerKey, SyntheticProvider, gt_locate


def _parse_actions(raw: List[dict]) -> List[ActionAnnotation]:
    out = []
    for rec in raw:
        out.append(ActionAnnotation(
            timestamp_s=float(rec["timestamp_s"]), text=rec["text"],
            nouns=rec.get("nouns"), verb=rec.get("verb"),
            target_ids=rec.get("target_ids"), state=rec.get("state")))
    out.sort(key=lambda a: a.timestamp_s)
    return out


def ingest_episode(episode_path: str, config: EngineConfig,
                   provider=None) -> ObjectMemory:
    """Replay a whole episode; returns the final memory.

    provider must offer embed_region() and is_target(); when omitted the
    builtin synthetic provider is constructed from the episode's world
    ground-truth sidecar.
    """
    episode = load_episode(episode_path)
    if provider is None:
        provider = SyntheticProvider.from_episode(episode_path)
    memory = ObjectMemory(config, episode.manifest.intrinsics,
                          episode.manifest.up_axis)
    memory.source = {"provenance": episode.manifest.provenance,
                     "frame_count": episode.manifest.frame_count}
    pending = _parse_actions(episode.actions())
    next_action = 0
    frame = None
    for frame in episode.frames():
        memory.update(frame, provider)
        while (next_action < len(pending)
               and pending[next_action].timestamp_s <= frame.timestamp_s + 1e-9):
            process_action(memory, pending[next_action], provider, frame)
            next_action += 1
    if frame is not None:
        while next_action < len(pending):
            process_action(memory, pending[next_action], provider, frame)
            next_action += 1
    return memory


def _check_same_episode(memory: ObjectMemory, key: AnswerKey):
    prov = memory.source.get("provenance")
    if prov != key.provenance:
        raise MismatchedEpisode(
            f"snapshot is from {prov!r} but answer key is from "
            f"{key.provenance!r}")


def evaluate_locate(memory: ObjectMemory, key: AnswerKey,
                    radius: Optional[float] = None) -> dict:
    """Visual-query localization against the final memory.

    A query is answered when its best visual score clears the answer
    threshold; it succeeds when additionally the predicted box center
    falls within the success radius of the ground-truth center.
    """
    _check_same_episode(memory, key)
    cfg = memory.config
    if radius is None:
        radius = cfg.locate_success_radius
    n = len(key.locate_queries)
    answered = success = 0
    l2_sum = 0.0
    ids = memory.sorted_ids()
    for q in key.locate_queries:
        pair = FeaturePair(b64_to_vec(q["clip"], "<f4"),
                           b64_to_vec(q["dino"], "<f4"))
        best_id, best_score = None, -np.inf
        for oid in ids:
            s = visual_similarity(pair, memory.entries[oid].obj_feat,
                                  cfg.clip_weight, cfg.dino_weight)
            if s > best_score:
                best_id, best_score = oid, s
        if best_id is None or best_score <= cfg.locate_answer_thresh:
            continue
        answered += 1
        gt_center = gt_locate(key, q["object"], q["t"]).center()
        err = float(np.linalg.norm(
            memory.entries[best_id].box.center() - gt_center))
        l2_sum += err
        if err < radius:
            success += 1
    return {
        "task": "locate",
        "queries": n,
        "answered": answered,
        "successes": success,
        "succ_pct": 100.0 * success / n if n else 0.0,
        "succ_star_pct": 100.0 * success / answered if answered else 0.0,
        "l2_mean": l2_sum / answered if answered else None,
        "qwp_pct": 100.0 * answered / n if n else 0.0,
        "success_radius": radius,
    }


def _lcs_len(a: List, b: List) -> int:
    m, n = len(a), len(b)
    dp = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(m):
        for j in range(n):
            dp[i + 1][j + 1] = (dp[i][j] + 1 if a[i] == b[j]
                                else max(dp[i][j + 1], dp[i + 1][j]))
    return dp[m][n]


def evaluate_orders(memory: ObjectMemory, key: AnswerKey) -> dict:
    """Scripted event order vs. the action buffer.  Exact sequence match
    scores 1.0; anything else scores LCS length over the longer sequence."""
    _check_same_episode(memory, key)
    categories = [o["category"] for o in key.objects]
    expected = [(e["verb"], e["object_category"]) for e in key.events]
    got = []
    for rec in memory.action_buffer:
        nouns = extract_nouns(
            ActionAnnotation(timestamp_s=rec.timestamp_s, text=rec.raw_text),
            categories)
        got.append((rec.verb, nouns[0] if nouns else ""))
    if expected == got:
        accuracy = 1.0
    elif not expected and not got:
        accuracy = 1.0
    else:
        accuracy = _lcs_len(expected, got) / max(len(expected), len(got))
    return {"task": "orders", "events": len(expected),
            "recorded": len(got), "accuracy": accuracy}


def _match_entry(memory: ObjectMemory, category: str,
                 gt_center: np.ndarray, radius: float) -> Optional[int]:
    best, best_d = None, radius
    for oid in memory.sorted_ids():
        e = memory.entries[oid]
        if e.category != category:
            continue
        d = float(np.linalg.norm(e.box.center() - gt_center))
        if d < best_d:
            best, best_d = oid, d
    return best


def evaluate_states(memory: ObjectMemory, key: AnswerKey,
                    radius: Optional[float] = None) -> dict:
    """Final-receptacle accuracy: the moved object's RO field must hold an
    On/In pair naming its scripted final receptacle."""
    _check_same_episode(memory, key)
    if radius is None:
        radius = memory.config.locate_success_radius
    if not memory.frames:
        return {"task": "states", "objects": len(key.final_receptacle),
                "correct": 0, "accuracy": 0.0}
    t_end = memory.frames[-1].timestamp_s
    categories = {o["name"]: o["category"] for o in key.objects}
    moved = [e["object"] for e in key.events if e["verb"] in ("moves", "places")]
    names = [n for n in key.final_receptacle if n in moved] or \
            sorted(key.final_receptacle)
    correct = 0
    for name in names:
        recep_name = key.final_receptacle[name]
        obj_id = _match_entry(memory, categories[name],
                              gt_locate(key, name, t_end).center(), radius)
        recep_id = _match_entry(memory, categories[recep_name],
                                gt_locate(key, recep_name, t_end).center(),
                                max(radius, 1.0))
        if obj_id is None or recep_id is None:
            continue
        related = memory.entries[obj_id].related
        if (Relation.ON, recep_id) in related or (Relation.IN, recep_id) in related:
            correct += 1
    n = len(names)
    return {"task": "states", "objects": n, "correct": correct,
            "accuracy": correct / n if n else 1.0}
