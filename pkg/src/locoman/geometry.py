"""3D math primitives: quaternions, rotations, poses, spherical targets.

Conventions (fixed project-wide):
  - quaternions are (w, x, y, z), unit norm
  - Euler angles are extrinsic X-Y-Z (roll, pitch, yaw): R = Rz @ Ry @ Rx
  - world frame is z-up, base frame is x-forward
  - angles normalize to (-pi, pi], ties at pi resolve to +pi
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_UNIT_TOL = 1e-9


def wrap_angle(a):
    """Normalize angle(s) to (-pi, pi]; -pi maps to +pi."""
    return np.mod(np.asarray(a, dtype=float) - np.pi, -2.0 * np.pi) + np.pi


def vec3(x, y, z) -> np.ndarray:
    return np.array([x, y, z], dtype=float)


def unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("cannot normalize zero vector")
    return v / n


# ---------------------------------------------------------------------------
# quaternions (w, x, y, z)
# ---------------------------------------------------------------------------

QUAT_IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q)


def quat_is_unit(q: np.ndarray, tol: float = _UNIT_TOL) -> bool:
    return abs(np.linalg.norm(q) - 1.0) <= tol


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector v by unit quaternion q."""
    qv = np.array([0.0, v[0], v[1], v[2]])
    return quat_mul(quat_mul(q, qv), quat_conjugate(q))[1:]


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = unit(np.asarray(axis, dtype=float))
    half = 0.5 * angle
    return np.concatenate(([np.cos(half)], np.sin(half) * axis))


def quat_geodesic_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Geodesic angle between two unit quaternions: 2*arccos(|a . b|).

    Symmetric, in [0, pi], invariant under sign flip of either argument.
    """
    d = abs(float(np.dot(a, b)))
    return 2.0 * np.arccos(min(d, 1.0))


def quat_from_euler(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Extrinsic X-Y-Z Euler angles to quaternion (q = qz * qy * qx)."""
    qx = quat_from_axis_angle(np.array([1.0, 0, 0]), roll)
    qy = quat_from_axis_angle(np.array([0, 1.0, 0]), pitch)
    qz = quat_from_axis_angle(np.array([0, 0, 1.0]), yaw)
    return quat_mul(qz, quat_mul(qy, qx))


def euler_from_quat(q: np.ndarray) -> tuple[float, float, float]:
    """Inverse of quat_from_euler away from gimbal lock (|pitch| = pi/2)."""
    R = quat_to_matrix(q)
    sp = -R[2, 0]
    sp = float(np.clip(sp, -1.0, 1.0))
    pitch = np.arcsin(sp)
    if abs(sp) < 1.0 - 1e-9:
        roll = np.arctan2(R[2, 1], R[2, 2])
        yaw = np.arctan2(R[1, 0], R[0, 0])
    else:
        # gimbal lock: only roll +/- yaw observable, pin roll = 0
        roll = 0.0
        yaw = np.arctan2(-R[0, 1], R[1, 1])
    return float(roll), float(pitch), float(yaw)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """Rotation matrix to unit quaternion, w >= 0."""
    t = np.trace(R)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s,
                      (R[1, 0] - R[0, 1]) / s])
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(R[i, i] - R[j, j] - R[k, k] + 1.0) * 2.0
        q = np.empty(4)
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    if q[0] < 0:
        q = -q
    return quat_normalize(q)


def quat_slerp(a: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
    d = float(np.dot(a, b))
    if d < 0.0:
        b = -b
        d = -d
    if d > 1.0 - 1e-12:
        return quat_normalize(a + t * (b - a))
    theta = np.arccos(min(d, 1.0))
    s = np.sin(theta)
    return (np.sin((1.0 - t) * theta) * a + np.sin(t * theta) * b) / s


def is_rotation_matrix(R: np.ndarray, tol: float = _UNIT_TOL) -> bool:
    return (np.allclose(R.T @ R, np.eye(3), atol=tol)
            and abs(np.linalg.det(R) - 1.0) <= tol)


# ---------------------------------------------------------------------------
# spherical targets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SphericalTarget:
    """End-effector position target: radius, pitch, yaw (radians)."""

    radius: float
    pitch: float
    yaw: float

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("radius must be >= 0")


def spherical_to_cartesian(s: SphericalTarget) -> np.ndarray:
    """Radius/pitch/yaw to xyz: pitch positive raises +z, yaw rotates about z."""
    cp = np.cos(s.pitch)
    return s.radius * np.array([cp * np.cos(s.yaw), cp * np.sin(s.yaw), np.sin(s.pitch)])


def cartesian_to_spherical(v: np.ndarray) -> SphericalTarget:
    r = float(np.linalg.norm(v))
    if r == 0.0:
        return SphericalTarget(0.0, 0.0, 0.0)
    pitch = float(np.arcsin(np.clip(v[2] / r, -1.0, 1.0)))
    yaw = float(np.arctan2(v[1], v[0]))
    return SphericalTarget(r, pitch, yaw)


@dataclass(frozen=True)
class EulerAngles:
    """Extrinsic X-Y-Z orientation target (radians)."""

    roll: float
    pitch: float
    yaw: float

    def as_array(self) -> np.ndarray:
        return np.array([self.roll, self.pitch, self.yaw])


# ---------------------------------------------------------------------------
# poses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Pose:
    """Rigid transform: orientation then translation (frame-to-world map)."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: QUAT_IDENTITY.copy())

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "orientation", np.asarray(self.orientation, dtype=float))

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    @staticmethod
    def from_xy_yaw(x: float, y: float, yaw: float, z: float = 0.0) -> "Pose":
        return Pose(vec3(x, y, z), quat_from_axis_angle(np.array([0, 0, 1.0]), yaw))

    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    def transform(self, p: np.ndarray) -> np.ndarray:
        """Map a point from this pose's frame to the parent (world) frame."""
        return self.position + quat_rotate(self.orientation, np.asarray(p, dtype=float))

    def inverse_transform(self, p: np.ndarray) -> np.ndarray:
        """Map a parent-frame point into this pose's frame."""
        return quat_rotate(quat_conjugate(self.orientation),
                           np.asarray(p, dtype=float) - self.position)

    def compose(self, other: "Pose") -> "Pose":
        """self * other: apply other first, then self."""
        return Pose(self.transform(other.position),
                    quat_normalize(quat_mul(self.orientation, other.orientation)))

    def inverse(self) -> "Pose":
        qi = quat_conjugate(self.orientation)
        return Pose(quat_rotate(qi, -self.position), qi)

    def yaw(self) -> float:
        return euler_from_quat(self.orientation)[2]


def transform_point(p: np.ndarray, from_frame: Pose, to_frame: Pose) -> np.ndarray:
    """Re-express a point given in from_frame coordinates in to_frame coordinates."""
    return to_frame.inverse_transform(from_frame.transform(p))
