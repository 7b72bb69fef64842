import json
import os

import numpy as np
import pytest
from PIL import Image

WIDTH, HEIGHT = 96, 72
N_FRAMES = 5
DETS_PER_FRAME = [
    {"frame_id": f, "category": cat, "bbox2d": box, "confidence": 0.9}
    for f in range(N_FRAMES)
    for cat, box in (("cup", [12.0, 10.0, 40.0, 38.0]),
                     ("book", [50.0, 30.0, 90.0, 66.0]))
]


def frame_pixels(frame_id: int) -> np.ndarray:
    """Deterministic synthetic frame: gradient plus two seeded rectangles."""
    rng = np.random.default_rng([1234, frame_id])
    yy, xx = np.mgrid[0:HEIGHT, 0:WIDTH]
    img = np.stack([
        (xx * 255 / WIDTH),
        (yy * 255 / HEIGHT),
        ((xx + yy + frame_id * 17) % 256),
    ], axis=-1).astype(np.uint8)
    for x0, y0, x1, y1 in ((12, 10, 40, 38), (50, 30, 90, 66)):
        color = rng.integers(0, 256, 3)
        img[y0:y1, x0:x1] = color
    return img


def build_fixture(root: str) -> dict:
    """Write a 5-frame input set: images, depth, poses, detections, sensor."""
    frames = os.path.join(root, "frames")
    depth = os.path.join(root, "depth")
    os.makedirs(frames, exist_ok=True)
    os.makedirs(depth, exist_ok=True)
    for f in range(N_FRAMES):
        Image.fromarray(frame_pixels(f)).save(
            os.path.join(frames, f"{f:06d}.png"))
        np.full(HEIGHT * WIDTH, 2.0, dtype="<f4").tofile(
            os.path.join(depth, f"{f:06d}.f32"))
    with open(os.path.join(root, "poses.jsonl"), "w") as fh:
        for f in range(N_FRAMES):
            fh.write(json.dumps({
                "frame_id": f, "timestamp_s": float(f),
                "t": [0.0, 0.0, 0.1 * f], "q": [1.0, 0.0, 0.0, 0.0]}) + "\n")
    with open(os.path.join(root, "detections.jsonl"), "w") as fh:
        for d in DETS_PER_FRAME:
            fh.write(json.dumps(d) + "\n")
    with open(os.path.join(root, "sensor.json"), "w") as fh:
        json.dump({
            "intrinsics": {"fx": 80.0, "fy": 80.0, "cx": 48.0, "cy": 36.0,
                           "width": WIDTH, "height": HEIGHT},
            "up_axis": "+z",
            "dims": {"clip": 64, "dino": 64, "ctx": 32},
        }, fh)
    return {"frames": frames, "depth": depth,
            "poses": os.path.join(root, "poses.jsonl"),
            "detections": os.path.join(root, "detections.jsonl"),
            "sensor": os.path.join(root, "sensor.json")}


@pytest.fixture
def fixture_inputs(tmp_path):
    return build_fixture(str(tmp_path / "inputs"))
