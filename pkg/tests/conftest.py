import numpy as np
import pytest

from egomem.geometry import CameraIntrinsics, Pose


@pytest.fixture
def intr():
    return CameraIntrinsics(fx=240.0, fy=240.0, cx=160.0, cy=120.0,
                            width=320, height=240)


@pytest.fixture
def identity_pose():
    return Pose(rotation=(1.0, 0.0, 0.0, 0.0), translation=(0.0, 0.0, 0.0))


def unit(vec) -> np.ndarray:
    v = np.asarray(vec, dtype=np.float64)
    return v / np.linalg.norm(v)
