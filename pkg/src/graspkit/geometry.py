"""Rigid-body math, pinhole camera model and pose-error metrics.

Camera convention used throughout the package: +z points forward along the
optical axis, +x to the right and +y down, so that a camera-frame point maps to
pixel (u, v) with u growing rightwards and v growing downwards. Pixel centres
sit at integer coordinates.

Rotations are stored as unit quaternions (w, x, y, z); matrices are derived on
demand and never used as the source of truth.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import NonPositiveDepth

MIN_DEPTH = 1e-6


def _normalize_quat(q) -> tuple[float, float, float, float]:
    q = np.asarray(q, dtype=float)
    n = float(np.linalg.norm(q))
    if not np.isfinite(n) or n == 0.0:
        raise ValueError(f"cannot normalize quaternion {q!r}")
    if abs(n - 1.0) > 4e-16:
        q = q / n  # skipping unit input keeps JSON round trips bit-exact
    # canonical hemisphere keeps JSON output stable for q and -q
    lead = q[np.flatnonzero(q)[0]]
    if lead < 0:
        q = -q
    return tuple(float(x) for x in q)


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(R) -> np.ndarray:
    """Shepperd's method; R must be (close to) a proper rotation."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    diag = (R[0, 0], R[1, 1], R[2, 2])
    if tr >= max(diag):
        s = math.sqrt(max(tr + 1.0, 0.0)) * 2
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif diag[0] >= diag[1] and diag[0] >= diag[2]:
        s = math.sqrt(max(1.0 + R[0, 0] - R[1, 1] - R[2, 2], 0.0)) * 2
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif diag[1] >= diag[2]:
        s = math.sqrt(max(1.0 + R[1, 1] - R[0, 0] - R[2, 2], 0.0)) * 2
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = math.sqrt(max(1.0 + R[2, 2] - R[0, 0] - R[1, 1], 0.0)) * 2
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    return np.array(q)


def _quat_mul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


@dataclass(frozen=True)
class Rotation:
    q: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "q", _normalize_quat(self.q))

    @classmethod
    def identity(cls) -> "Rotation":
        return cls()

    @classmethod
    def from_matrix(cls, R) -> "Rotation":
        return cls(matrix_to_quat(R))

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> "Rotation":
        axis = np.asarray(axis, dtype=float)
        axis = axis / np.linalg.norm(axis)
        s = math.sin(angle / 2)
        return cls((math.cos(angle / 2), *(axis * s)))

    @classmethod
    def from_rotvec(cls, rotvec) -> "Rotation":
        rotvec = np.asarray(rotvec, dtype=float)
        angle = float(np.linalg.norm(rotvec))
        if angle < 1e-12:
            return cls((1.0, *(0.5 * rotvec)))
        return cls.from_axis_angle(rotvec / angle, angle)

    @classmethod
    def random(cls, rng: np.random.Generator) -> "Rotation":
        return cls(rng.normal(size=4))

    @cached_property
    def matrix(self) -> np.ndarray:
        m = quat_to_matrix(self.q)
        m.flags.writeable = False
        return m

    def as_matrix(self) -> np.ndarray:
        return self.matrix.copy()

    def inverse(self) -> "Rotation":
        w, x, y, z = self.q
        return Rotation((w, -x, -y, -z))

    def __mul__(self, other: "Rotation") -> "Rotation":
        return Rotation(_quat_mul(self.q, other.q))

    def apply(self, v) -> np.ndarray:
        return np.asarray(v, dtype=float) @ self.matrix.T


@dataclass(frozen=True)
class Pose:
    """Rigid transform x -> R x + t (translation in metres)."""

    rotation: Rotation = field(default_factory=Rotation)
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        t = tuple(float(x) for x in np.asarray(self.translation, dtype=float).reshape(3))
        object.__setattr__(self, "translation", t)

    @property
    def R(self) -> np.ndarray:
        return self.rotation.matrix

    @property
    def t(self) -> np.ndarray:
        return np.array(self.translation)

    @classmethod
    def from_Rt(cls, R, t) -> "Pose":
        return cls(Rotation.from_matrix(R), t)

    @classmethod
    def from_matrix(cls, T) -> "Pose":
        T = np.asarray(T, dtype=float)
        return cls.from_Rt(T[:3, :3], T[:3, 3])

    def as_matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.translation
        return T

    def __matmul__(self, other: "Pose") -> "Pose":
        return Pose(self.rotation * other.rotation, self.R @ other.t + self.t)

    def inverse(self) -> "Pose":
        inv = self.rotation.inverse()
        return Pose(inv, -(inv.matrix @ self.t))

    def apply(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.R.T + self.t

    def to_json(self) -> dict:
        return {"q": list(self.rotation.q), "t": list(self.translation)}

    @classmethod
    def from_json(cls, d: dict) -> "Pose":
        return cls(Rotation(d["q"]), d["t"])


@dataclass(frozen=True)
class Grasp:
    """Parallel-jaw grasp: gripper-frame pose plus opening width (m).

    Gripper frame: origin at the midpoint between the fingertips, +x along the
    closing line, +z pointing from the tips back towards the palm (the gripper
    moves along -z when approaching).
    """

    pose: Pose
    width: float
    object_id: int = -1

    def to_json(self) -> dict:
        return {"pose": self.pose.to_json(), "width": self.width, "object_id": self.object_id}

    @classmethod
    def from_json(cls, d: dict) -> "Grasp":
        return cls(Pose.from_json(d["pose"]), float(d["width"]), int(d.get("object_id", -1)))

    def transformed(self, T: Pose) -> "Grasp":
        return Grasp(T @ self.pose, self.width, self.object_id)


@dataclass(frozen=True)
class PixelPoint:
    u: float
    v: float

    def __post_init__(self):
        if not (math.isfinite(self.u) and math.isfinite(self.v)):
            raise ValueError("pixel coordinates must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v])


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def K_inv(self) -> np.ndarray:
        return np.array(
            [[1 / self.fx, 0.0, -self.cx / self.fx], [0.0, 1 / self.fy, -self.cy / self.fy], [0.0, 0.0, 1.0]]
        )

    def to_json(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}

    @classmethod
    def from_json(cls, d: dict) -> "CameraIntrinsics":
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                   int(d["width"]), int(d["height"]))

    def contains(self, uv) -> np.ndarray:
        uv = np.asarray(uv, dtype=float)
        return (uv[..., 0] >= 0) & (uv[..., 0] < self.width) & (uv[..., 1] >= 0) & (uv[..., 1] < self.height)


def project_points(points, K: CameraIntrinsics) -> np.ndarray:
    """Project (..., 3) camera-frame points to (..., 2) pixels."""
    P = np.asarray(points, dtype=float)
    z = P[..., 2]
    if np.any(z <= MIN_DEPTH):
        raise NonPositiveDepth(f"point depth {float(np.min(z))} <= {MIN_DEPTH}")
    return np.stack([K.fx * P[..., 0] / z + K.cx, K.fy * P[..., 1] / z + K.cy], axis=-1)


def project(point, K: CameraIntrinsics) -> PixelPoint:
    u, v = project_points(np.asarray(point, dtype=float).reshape(3), K)
    return PixelPoint(float(u), float(v))


def backproject(uv, depth, K: CameraIntrinsics) -> np.ndarray:
    """Inverse of `project_points` at known z-depth."""
    uv = np.asarray(uv, dtype=float)
    depth = np.asarray(depth, dtype=float)
    x = (uv[..., 0] - K.cx) / K.fx * depth
    y = (uv[..., 1] - K.cy) / K.fy * depth
    return np.stack([x, y, depth * np.ones_like(x)], axis=-1)


def pixel_rays(uv, K: CameraIntrinsics) -> np.ndarray:
    """Camera-frame ray directions with unit z component (so ray parameter = z-depth)."""
    uv = np.asarray(uv, dtype=float)
    return np.stack([(uv[..., 0] - K.cx) / K.fx, (uv[..., 1] - K.cy) / K.fy, np.ones(uv.shape[:-1])], axis=-1)


_FLIP_XY = np.diag([-1.0, -1.0, 1.0])


def rotation_angle_between(A, B) -> np.ndarray:
    """Geodesic angle between rotation matrices, broadcasting over leading dims.

    Evaluated as atan2(sin, cos) of the relative rotation, which equals
    arccos(clamp((tr(A^T B) - 1) / 2)) but stays accurate near 0 and pi.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    M = np.swapaxes(A, -1, -2) @ B
    cos = np.clip((np.trace(M, axis1=-2, axis2=-1) - 1.0) / 2.0, -1.0, 1.0)
    vx = M[..., 2, 1] - M[..., 1, 2]
    vy = M[..., 0, 2] - M[..., 2, 0]
    vz = M[..., 1, 0] - M[..., 0, 1]
    sin = 0.5 * np.sqrt(vx * vx + vy * vy + vz * vz)
    return np.arctan2(sin, cos)


def rotation_errors(A, B, symmetric: bool = False) -> np.ndarray:
    """Element-wise (broadcast) rotation error between matrix stacks.

    With ``symmetric`` the gripper's 180 degree symmetry about its approach
    (z) axis is factored out.
    """
    err = rotation_angle_between(A, B)
    if symmetric:
        err = np.minimum(err, rotation_angle_between(A, np.asarray(B) @ _FLIP_XY))
    return err


def pairwise_rotation_errors(A, B, symmetric: bool = False) -> np.ndarray:
    """(N,3,3) x (M,3,3) -> (N,M) rotation errors in radians."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    return rotation_errors(A[:, None], B[None, :], symmetric)


def rotation_error(a: Rotation, b: Rotation, symmetric: bool = False) -> float:
    return float(rotation_errors(a.matrix, b.matrix, symmetric))


def translation_error(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> Pose:
    """World->camera extrinsic for a camera at `eye` looking at `target`."""
    eye = np.asarray(eye, dtype=float)
    z = np.asarray(target, dtype=float) - eye
    z /= np.linalg.norm(z)
    x = np.cross(z, up)
    if np.linalg.norm(x) < 1e-9:
        x = np.cross(z, (0.0, 1.0, 0.0))
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    R_wc = np.stack([x, y, z], axis=1)  # camera axes in world coordinates
    R = R_wc.T
    return Pose.from_Rt(R, -R @ eye)


def random_rotation_matrices(rng: np.random.Generator, n: int) -> np.ndarray:
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q.T
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
        ],
        axis=1,
    )


def so3_exp(omega) -> np.ndarray:
    """Rodrigues formula, batched over leading dims of (..., 3)."""
    omega = np.asarray(omega, dtype=float)
    th = np.linalg.norm(omega, axis=-1)[..., None, None]
    W = np.zeros(omega.shape[:-1] + (3, 3))
    W[..., 0, 1], W[..., 0, 2] = -omega[..., 2], omega[..., 1]
    W[..., 1, 0], W[..., 1, 2] = omega[..., 2], -omega[..., 0]
    W[..., 2, 0], W[..., 2, 1] = -omega[..., 1], omega[..., 0]
    small = th < 1e-8
    safe = np.where(small, 1.0, th)
    A = np.where(small, 1.0 - th**2 / 6, np.sin(safe) / safe)
    B = np.where(small, 0.5 - th**2 / 24, (1 - np.cos(safe)) / safe**2)
    return np.eye(3) + A * W + B * (W @ W)


@dataclass
class GraspSet:
    """Column-wise grasps: rotations (N,3,3), translations (N,3), widths, object ids."""

    R: np.ndarray
    t: np.ndarray
    widths: np.ndarray
    object_ids: np.ndarray

    def __len__(self):
        return len(self.t)

    @classmethod
    def empty(cls) -> "GraspSet":
        return cls(np.zeros((0, 3, 3)), np.zeros((0, 3)), np.zeros(0), np.zeros(0, dtype=int))

    @classmethod
    def from_grasps(cls, grasps) -> "GraspSet":
        grasps = list(grasps)
        if not grasps:
            return cls.empty()
        return cls(
            np.array([g.pose.R for g in grasps]),
            np.array([g.pose.t for g in grasps]),
            np.array([g.width for g in grasps], dtype=float),
            np.array([g.object_id for g in grasps], dtype=int),
        )

    def to_grasps(self) -> list[Grasp]:
        return [Grasp(Pose.from_Rt(self.R[i], self.t[i]), float(self.widths[i]), int(self.object_ids[i]))
                for i in range(len(self))]

    def subset(self, idx) -> "GraspSet":
        return GraspSet(self.R[idx], self.t[idx], self.widths[idx], self.object_ids[idx])

    def transformed(self, T: Pose) -> "GraspSet":
        return GraspSet(T.R @ self.R, self.t @ T.R.T + T.t, self.widths.copy(), self.object_ids.copy())

    @staticmethod
    def concat(sets) -> "GraspSet":
        sets = [s for s in sets if len(s)]
        if not sets:
            return GraspSet.empty()
        return GraspSet(*(np.concatenate([getattr(s, f) for s in sets]) for f in ("R", "t", "widths", "object_ids")))
