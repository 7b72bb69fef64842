"""Engine configuration: every threshold, window, and k value in one record.

Defaults are the published algorithm constants where those exist (re-ID
thresholds 0.2/0.2/0.7/0.45, split threshold 0.45, merge windows 10/2,
trim fraction 0.10, top-k sizes 10/5/3).  Geometry tolerances and the
clustering cutoff have no published values; the defaults here are desk
scale and can be overridden from a JSON config file.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from typing import Dict, Optional


@dataclass
class EngineConfig:
    # Re-identification thresholds (strict > comparisons).
    static_iou_thresh: float = 0.2
    static_maxios_thresh: float = 0.2
    dynamic_volsim_thresh: float = 0.7
    dynamic_visual_thresh: float = 0.45
    # Static/dynamic split: stored feature vs. probe at the stored location.
    split_visual_thresh: float = 0.45

    # Moving-average merge windows.
    static_window: int = 10
    dynamic_window: int = 2

    # Visual similarity channel weights.
    clip_weight: float = 0.15
    dino_weight: float = 0.85

    # Lifting.
    trim_fraction: float = 0.10
    min_depth_pixels: int = 10

    # Visibility / occlusion testing.
    occlusion_margin: float = 0.10
    occluded_frac: float = 0.5
    min_visibility_samples: int = 64
    # The static/dynamic split probes only entries seen with no occlusion;
    # this is its (much stricter) tolerated blocked fraction.
    split_max_blocked: float = 0.05

    # Relations.
    contact_eps: float = 0.05
    containment_thresh: float = 0.8

    # Retrieval.
    k_appearance: int = 10
    k_temporal: int = 5
    k_spatial: int = 3
    cluster_cutoff: float = 1.5
    appearance_channel: str = "clip"

    # Locate evaluation.
    locate_answer_thresh: float = 0.45
    locate_success_radius: float = 0.25

    # Feature provider: "builtin-synthetic" or "endpoint".
    provider: str = "builtin-synthetic"
    endpoint: str = ""

    # Optional verb -> state-effect class overrides/extensions; None keeps
    # the seeded lexicon.  Classes: Grasp, Release, Open, Close, Neutral.
    verb_lexicon: Optional[Dict[str, str]] = None

    def validate(self):
        for name in (
            "static_iou_thresh",
            "static_maxios_thresh",
            "dynamic_volsim_thresh",
            "dynamic_visual_thresh",
            "split_visual_thresh",
            "occluded_frac",
            "containment_thresh",
        ):
            v = getattr(self, name)
            if not (math.isfinite(v) and 0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if not (0.0 <= self.trim_fraction < 0.5):
            raise ValueError(f"trim_fraction must be in [0, 0.5), got {self.trim_fraction}")
        for name in ("static_window", "dynamic_window", "min_depth_pixels",
                     "min_visibility_samples", "k_appearance", "k_temporal", "k_spatial"):
            v = getattr(self, name)
            if v < 1:
                raise ValueError(f"{name} must be >= 1, got {v}")
        for name in ("occlusion_margin", "contact_eps", "cluster_cutoff",
                     "locate_success_radius", "clip_weight", "dino_weight"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if self.appearance_channel not in ("clip", "dino"):
            raise ValueError(f"appearance_channel must be clip or dino, got {self.appearance_channel}")
        if self.provider not in ("builtin-synthetic", "endpoint"):
            raise ValueError(f"provider must be builtin-synthetic or endpoint, got {self.provider}")
        if self.verb_lexicon is not None:
            valid = {"Grasp", "Release", "Open", "Close", "Neutral"}
            for verb, cls in self.verb_lexicon.items():
                if cls not in valid:
                    raise ValueError(
                        f"verb_lexicon[{verb!r}] = {cls!r} not in {sorted(valid)}")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EngineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d).validate()

    @classmethod
    def load(cls, path) -> "EngineConfig":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()
