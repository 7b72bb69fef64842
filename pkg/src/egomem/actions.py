"""Action-driven memory updates: noun extraction, candidate gathering,
target association through an oracle, and programmatic state transitions.

The engine stays model-free: noun extraction is lexicon matching against
known category strings (episodes may also ship pre-extracted nouns), and
the visual association step is abstracted behind an oracle interface.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import List, Optional, Protocol

import numpy as np

from .errors import OracleUnavailable
from .geometry import Visibility, check_visibility
from .history import ActionRecord
from .memory import FrameObservation, ObjectMemory, ObjectState


@dataclass
class ActionAnnotation:
    timestamp_s: float
    text: str
    nouns: Optional[List[str]] = None
    verb: Optional[str] = None             # explicit verb token, optional
    target_ids: Optional[List[int]] = None  # actor mode: oracle bypassed
    state: Optional[str] = None            # oracle-supplied state override

    def __post_init__(self):
        if not self.text:
            raise ValueError("action annotation text must be non-empty")


class AssociationOracle(Protocol):
    def is_target(self, frame_id: int, region, text: str) -> bool:
        """Whether the object shown in the rendered box region is the
        target of the described action."""
        ...


class VerbClass:
    GRASP = "Grasp"
    RELEASE = "Release"
    OPEN = "Open"
    CLOSE = "Close"
    NEUTRAL = "Neutral"


DEFAULT_VERB_LEXICON = {
    # Grasp: the object ends up in hand.
    "pick": VerbClass.GRASP, "picks": VerbClass.GRASP,
    "grab": VerbClass.GRASP, "grabs": VerbClass.GRASP,
    "take": VerbClass.GRASP, "takes": VerbClass.GRASP,
    "catch": VerbClass.GRASP, "catches": VerbClass.GRASP,
    "lift": VerbClass.GRASP, "lifts": VerbClass.GRASP,
    "hold": VerbClass.GRASP, "holds": VerbClass.GRASP,
    "remove": VerbClass.GRASP, "removes": VerbClass.GRASP,
    # Release: the object is set down somewhere.
    "place": VerbClass.RELEASE, "places": VerbClass.RELEASE,
    "put": VerbClass.RELEASE, "puts": VerbClass.RELEASE,
    "drop": VerbClass.RELEASE, "drops": VerbClass.RELEASE,
    "set": VerbClass.RELEASE, "sets": VerbClass.RELEASE,
    "release": VerbClass.RELEASE, "releases": VerbClass.RELEASE,
    "move": VerbClass.RELEASE, "moves": VerbClass.RELEASE,
    "return": VerbClass.RELEASE, "returns": VerbClass.RELEASE,
    # Articulated receptacles.
    "open": VerbClass.OPEN, "opens": VerbClass.OPEN,
    "close": VerbClass.CLOSE, "closes": VerbClass.CLOSE,
    "shut": VerbClass.CLOSE, "shuts": VerbClass.CLOSE,
}

STATE_EFFECT = {
    VerbClass.GRASP: ObjectState.IN_HAND,
    VerbClass.RELEASE: ObjectState.NORMAL,
    VerbClass.OPEN: ObjectState.OPEN,
    VerbClass.CLOSE: ObjectState.CLOSE,
    VerbClass.NEUTRAL: None,
}


def classify_verb(text: str, lexicon=None):
    """First lexicon verb appearing in the text -> (token, class).
    Unknown verbs are Neutral."""
    lex = DEFAULT_VERB_LEXICON if lexicon is None else lexicon
    for token in re.findall(r"[a-z']+", text.lower()):
        if token in lex:
            return token, lex[token]
    return "", VerbClass.NEUTRAL


def extract_nouns(ann: ActionAnnotation, categories: List[str]) -> List[str]:
    """Pre-extracted nouns pass through; otherwise longest-match,
    case-insensitive lexical search of known category strings in the text."""
    if ann.nouns is not None:
        return list(ann.nouns)
    text = ann.text.lower()
    found = []
    taken = [False] * len(text)
    for cat in sorted(set(categories), key=len, reverse=True):
        needle = cat.lower()
        start = 0
        while True:
            idx = text.find(needle, start)
            if idx < 0:
                break
            if not any(taken[idx:idx + len(needle)]):
                for i in range(idx, idx + len(needle)):
                    taken[i] = True
                found.append((idx, cat))
            start = idx + 1
    return [cat for _, cat in sorted(found)]


def gather_candidates(memory: ObjectMemory, categories: List[str],
                      frame: FrameObservation):
    """Entries of the given categories that are fully visible in the frame."""
    cfg = memory.config
    wanted = set(categories)
    out = []
    for oid in memory.sorted_ids():
        entry = memory.entries[oid]
        if entry.category not in wanted:
            continue
        status = check_visibility(
            entry.box, frame.depth, frame.pose, memory.intrinsics,
            margin=cfg.occlusion_margin, occluded_frac=cfg.occluded_frac,
            min_samples=cfg.min_visibility_samples)
        if status.kind is Visibility.VISIBLE:
            out.append((entry, status.region))
    return out


def associate(memory: ObjectMemory, ann: ActionAnnotation, candidates,
              oracle: AssociationOracle, frame: FrameObservation,
              lexicon=None) -> List[int]:
    """Ask the oracle which candidates the action targets; always logs
    exactly one ActionRecord, even when the oracle fails or rejects all."""
    verb_token, _ = classify_verb(ann.verb or ann.text, lexicon)
    targets: List[int] = []
    scripted = ann.target_ids is not None
    if scripted:
        targets = list(ann.target_ids)
    else:
        for entry, region in candidates:
            try:
                if oracle.is_target(frame.frame_id, region, ann.text):
                    targets.append(entry.id)
            except OracleUnavailable:
                targets = []
                break
    memory.action_buffer.append(ActionRecord(
        timestamp_s=ann.timestamp_s, verb=verb_token, raw_text=ann.text,
        target_ids=targets,
        frame_feat=np.asarray(frame.ctx_feat, dtype=np.float64),
        scripted=scripted))
    memory.report.actions_logged += 1
    return targets


def apply_state(memory: ObjectMemory, target_ids: List[int], verb_class: str,
                state_override: Optional[str] = None):
    """Programmatic state transition on the matched entries.

    Grasp puts the object in hand and clears its On/In pairs (it left its
    receptacle; mirrors are cleared too).  Release resets to Normal and
    leaves relation rebuilding to the next frame's geometry.  An explicit
    state override (supplied by the oracle pathway) wins over the lexicon.
    """
    new_state = state_override if state_override is not None \
        else STATE_EFFECT[verb_class]
    for oid in target_ids:
        entry = memory.entry(oid)
        if verb_class == VerbClass.GRASP:
            memory.clear_carry_relations(oid)
        if new_state is not None:
            entry.state = new_state


def resolve_lexicon(config) -> dict:
    """The seeded lexicon plus any config-supplied overrides/extensions."""
    if getattr(config, "verb_lexicon", None):
        merged = dict(DEFAULT_VERB_LEXICON)
        merged.update(config.verb_lexicon)
        return merged
    return DEFAULT_VERB_LEXICON


def process_action(memory: ObjectMemory, ann: ActionAnnotation,
                   oracle: AssociationOracle, frame: FrameObservation) -> List[int]:
    """Full action pathway for one annotation against the current frame."""
    lexicon = resolve_lexicon(memory.config)
    _, verb_class = classify_verb(ann.verb or ann.text, lexicon)
    nouns = extract_nouns(ann, memory.categories())
    candidates = gather_candidates(memory, nouns, frame)
    targets = associate(memory, ann, candidates, oracle, frame,
                        lexicon=lexicon)
    apply_state(memory, [t for t in targets if t in memory.entries],
                verb_class, state_override=ann.state)
    return targets
