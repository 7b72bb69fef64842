"""egomem: persistent 3D object memory from egocentric RGB-D streams."""

__version__ = "0.1.0"

from .config import EngineConfig
from .geometry import (Box3D, CameraIntrinsics, DepthMap, Detection2D, Pose,
                       Visibility, VisibilityStatus, check_visibility,
                       lift_detection, project_box)
from .history import ActionRecord, VisibleRecord, query_history
from .memory import (FrameObservation, Mobility, ObjectEntry, ObjectMemory,
                     ObjectState, Relation, detect_relations, merge_entry)
from .pipeline import (evaluate_locate, evaluate_orders, evaluate_states,
                       ingest_episode)
from .retrieval import (query_structured, retrieve_by_appearance,
                        retrieve_by_environment, spatial_loc, temporal_loc)
from .similarity import (FeaturePair, spatial_iou, spatial_maxios,
                         spatial_vol_sim, visual_similarity)
from .store import (EpisodeWriter, load_episode, load_snapshot, save_snapshot,
                    validate_episode)
from .synthetic import (AnswerKey, SyntheticProvider, WorldSpec, generate,
                        gt_locate)

__all__ = [
    "EngineConfig",
    "Box3D", "CameraIntrinsics", "DepthMap", "Detection2D", "Pose",
    "Visibility", "VisibilityStatus", "check_visibility", "lift_detection",
    "project_box",
    "ActionRecord", "VisibleRecord", "query_history",
    "FrameObservation", "Mobility", "ObjectEntry", "ObjectMemory",
    "ObjectState", "Relation", "detect_relations", "merge_entry",
    "evaluate_locate", "evaluate_orders", "evaluate_states", "ingest_episode",
    "query_structured", "retrieve_by_appearance", "retrieve_by_environment",
    "spatial_loc", "temporal_loc",
    "FeaturePair", "spatial_iou", "spatial_maxios", "spatial_vol_sim",
    "visual_similarity",
    "EpisodeWriter", "load_episode", "load_snapshot", "save_snapshot",
    "validate_episode",
    "AnswerKey", "SyntheticProvider", "WorldSpec", "generate", "gt_locate",
]
