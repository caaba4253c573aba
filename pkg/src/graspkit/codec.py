"""Grasp <-> image keypoint encoding.

A grasp is described in the image by four keypoints (projections of a fixed
square attached to the gripper), grouped around the projected grasp centre.
Offsets from the centre are stored divided by the grasp scale (distance of the
grasp from the camera centre), and the scale and opening width are carried as
separate quantities.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCamera, DegenerateTranslation, OutOfFrame
from .geometry import MIN_DEPTH, CameraIntrinsics, Grasp, PixelPoint, Pose

UNIT_SQUARE = np.array(
    [
        [-0.5, 0.0, 0.0],  # tip-left
        [0.5, 0.0, 0.0],  # tip-right
        [-0.5, 0.0, 1.0],  # back-left
        [0.5, 0.0, 1.0],  # back-right
    ]
)

# physical edge length of the keypoint square (m); equal to the max gripper opening
DEFAULT_TEMPLATE_SIZE = 0.10


@dataclass(frozen=True)
class KeypointTemplate:
    """Canonical gripper keypoints (unit square in the gripper x-z plane).

    ``size`` converts canonical units to metres. It only matters where absolute
    scale is read off the keypoints (e.g. the keypoint-proximity baseline);
    poses refined with a separately known scale are independent of it.
    """

    points: tuple = tuple(map(tuple, UNIT_SQUARE))
    size: float = DEFAULT_TEMPLATE_SIZE

    @property
    def canonical(self) -> np.ndarray:
        return np.array(self.points, dtype=float)

    @property
    def metric(self) -> np.ndarray:
        return self.canonical * self.size


DEFAULT_TEMPLATE = KeypointTemplate()


class KeypointSet:
    """Four image keypoints in template order."""

    def __init__(self, points):
        pts = np.array(points, dtype=float).reshape(4, 2)
        if not np.all(np.isfinite(pts)):
            raise ValueError("keypoints must be finite")
        d = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
        if np.any(d[np.triu_indices(4, 1)] < 1e-6):
            raise ValueError("coincident keypoints")
        pts.flags.writeable = False
        self.points = pts

    def __getitem__(self, k) -> PixelPoint:
        return PixelPoint(*self.points[k])

    def __repr__(self):
        return f"KeypointSet({self.points.tolist()})"


@dataclass(frozen=True)
class BinSpec:
    M: int = 9

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("need at least one orientation bin")

    @property
    def width(self) -> float:
        return math.pi / self.M

    def assign(self, theta) -> np.ndarray:
        theta = np.mod(np.asarray(theta, dtype=float), math.pi)
        return np.minimum((theta / self.width).astype(int), self.M - 1)


@dataclass(frozen=True)
class GraspEncoding:
    center: PixelPoint
    bin: int
    offsets: tuple  # 4 x (du, dv) in px per metre of scale
    scale: float
    width: float
    confidence: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if not self.width > 0:
            raise ValueError("width must be positive")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")
        object.__setattr__(self, "offsets", tuple(tuple(float(c) for c in o) for o in np.reshape(self.offsets, (4, 2))))

    @property
    def offset_array(self) -> np.ndarray:
        return np.array(self.offsets)

    @property
    def raw_offsets(self) -> np.ndarray:
        return self.offset_array * self.scale

    def to_json(self) -> dict:
        return {
            "center": [self.center.u, self.center.v],
            "bin": self.bin,
            "offsets": [list(o) for o in self.offsets],
            "scale": self.scale,
            "width": self.width,
            "confidence": self.confidence,
        }

    @classmethod
    def from_json(cls, d: dict) -> "GraspEncoding":
        return cls(PixelPoint(*d["center"]), int(d["bin"]), d["offsets"], float(d["scale"]),
                   float(d["width"]), float(d.get("confidence", 1.0)))


@dataclass
class EncodingArrays:
    """Column-wise storage of many encodings, used by the batched pipelines."""

    centers: np.ndarray  # (N, 2)
    bins: np.ndarray  # (N,)
    offsets: np.ndarray  # (N, 4, 2), normalized
    scales: np.ndarray  # (N,)
    widths: np.ndarray  # (N,)
    confidences: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.confidences is None:
            self.confidences = np.ones(len(self.scales))

    def __len__(self):
        return len(self.scales)

    def __getitem__(self, i) -> GraspEncoding:
        return GraspEncoding(PixelPoint(*self.centers[i]), int(self.bins[i]), self.offsets[i],
                             float(self.scales[i]), float(self.widths[i]), float(self.confidences[i]))

    def subset(self, idx) -> "EncodingArrays":
        return EncodingArrays(self.centers[idx], self.bins[idx], self.offsets[idx], self.scales[idx],
                              self.widths[idx], self.confidences[idx])

    @classmethod
    def empty(cls) -> "EncodingArrays":
        return cls(np.zeros((0, 2)), np.zeros(0, int), np.zeros((0, 4, 2)), np.zeros(0), np.zeros(0), np.zeros(0))

    @classmethod
    def from_list(cls, encs) -> "EncodingArrays":
        encs = list(encs)
        if not encs:
            return cls.empty()
        return cls(
            np.array([[e.center.u, e.center.v] for e in encs]),
            np.array([e.bin for e in encs], dtype=int),
            np.array([e.offsets for e in encs], dtype=float),
            np.array([e.scale for e in encs]),
            np.array([e.width for e in encs]),
            np.array([e.confidence for e in encs]),
        )

    def to_list(self) -> list[GraspEncoding]:
        return [self[i] for i in range(len(self))]


def grasp_keypoints_3d(R, t, template: KeypointTemplate = DEFAULT_TEMPLATE) -> np.ndarray:
    """Camera-frame keypoints for (N,3,3) rotations and (N,3) translations -> (N,4,3)."""
    return np.einsum("nij,kj->nki", R, template.metric) + np.asarray(t)[:, None, :]


def encode_arrays(R, t, widths, K: CameraIntrinsics, bins: BinSpec = BinSpec(),
                  template: KeypointTemplate = DEFAULT_TEMPLATE):
    """Batched encode. Returns (EncodingArrays, valid mask, keypoints (N,4,2)).

    Invalid rows (behind the camera or out of frame) are kept with NaNs so that
    indices stay aligned with the input; callers subset with the mask.
    """
    R = np.asarray(R, dtype=float).reshape(-1, 3, 3)
    t = np.asarray(t, dtype=float).reshape(-1, 3)
    n = len(t)
    P = grasp_keypoints_3d(R, t, template)
    depth_ok = (t[:, 2] > MIN_DEPTH) & np.all(P[..., 2] > MIN_DEPTH, axis=1)
    z_c = np.where(depth_ok, t[:, 2], 1.0)
    z_k = np.where(depth_ok[:, None], P[..., 2], 1.0)
    centers = np.stack([K.fx * t[:, 0] / z_c + K.cx, K.fy * t[:, 1] / z_c + K.cy], -1)
    kps = np.stack([K.fx * P[..., 0] / z_k + K.cx, K.fy * P[..., 1] / z_k + K.cy], -1)
    in_frame = np.all(K.contains(kps), axis=1) & K.contains(centers)
    valid = depth_ok & in_frame
    scales = np.linalg.norm(t, axis=1)
    raw = kps - centers[:, None, :]
    offsets = raw / np.where(scales > 0, scales, 1.0)[:, None, None]
    d = kps[:, 1] - kps[:, 0]
    bin_ids = bins.assign(np.arctan2(d[:, 1], d[:, 0]))
    enc = EncodingArrays(centers, bin_ids, offsets, scales, np.asarray(widths, dtype=float).reshape(n).copy(),
                         np.ones(n))
    bad = ~valid
    if np.any(bad):
        enc.centers[bad] = np.nan
        enc.offsets[bad] = np.nan
        kps[bad] = np.nan
    return enc, valid, kps


def encode(grasp: Grasp, K: CameraIntrinsics, bins: BinSpec = BinSpec(),
           template: KeypointTemplate = DEFAULT_TEMPLATE) -> GraspEncoding:
    """Encode a camera-frame grasp."""
    R = grasp.pose.R[None]
    t = grasp.pose.t[None]
    P = grasp_keypoints_3d(R, t, template)
    if t[0, 2] <= MIN_DEPTH or np.any(P[..., 2] <= MIN_DEPTH):
        raise BehindCamera("grasp or one of its keypoints is behind the camera")
    enc, valid, _ = encode_arrays(R, t, [grasp.width], K, bins, template)
    if not valid[0]:
        raise OutOfFrame("a keypoint projects outside the image")
    return enc[0]


def decode_keypoints_arrays(centers, offsets, scales) -> np.ndarray:
    return np.asarray(centers)[:, None, :] + np.asarray(offsets) * np.asarray(scales)[:, None, None]


def decode_keypoints(enc: GraspEncoding) -> KeypointSet:
    return KeypointSet(enc.center.as_array()[None] + enc.offset_array * enc.scale)


def refine_scale_arrays(t, scales) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    n = np.linalg.norm(t, axis=-1, keepdims=True)
    if np.any(n <= 1e-9):
        raise DegenerateTranslation("PnP translation has (near) zero norm")
    return t * (np.asarray(scales, dtype=float)[..., None] / n)


def refine_scale(pnp_pose: Pose, scale: float) -> Pose:
    """Keep the rotation; rescale the translation to magnitude `scale` along its direction."""
    return Pose(pnp_pose.rotation, refine_scale_arrays(pnp_pose.t, scale))


def encodings_to_json(encs) -> list[dict]:
    return [e.to_json() for e in encs]
