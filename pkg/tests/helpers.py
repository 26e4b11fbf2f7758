"""Independent oracles shared by the test modules."""
import math

import numpy as np

from estpred.geom import Pose3


def random_pose(rng: np.random.Generator, scale: float = 10.0) -> Pose3:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return Pose3.from_quaternion(rng.uniform(-scale, scale, size=3), q)


def homogeneous(pose: Pose3) -> np.ndarray:
    """Independent 4x4 matrix built element by element."""
    m = np.zeros((4, 4))
    for i in range(3):
        for j in range(3):
            m[i, j] = pose.rotation[i, j]
        m[i, 3] = pose.translation[i]
    m[3, 3] = 1.0
    return m


def yaw_matrix(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0, 0], [s, c, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1.0]])
