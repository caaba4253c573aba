"""Depth and instance-mask rendering by analytic ray casting."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import CameraIntrinsics, Pose


@dataclass
class DepthMap:
    """z-depth (m, 0 = no return) and per-pixel mask (0 = table/background, k+1 = object k)."""

    depth: np.ndarray  # (H, W) float
    mask: np.ndarray  # (H, W) uint16

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    def bilinear(self, u: float, v: float) -> float:
        """Bilinear depth at a continuous pixel; 0 if any contributing pixel has no return."""
        H, W = self.depth.shape
        u = min(max(u, 0.0), W - 1.0)
        v = min(max(v, 0.0), H - 1.0)
        u0, v0 = int(np.floor(u)), int(np.floor(v))
        u1, v1 = min(u0 + 1, W - 1), min(v0 + 1, H - 1)
        a, b = u - u0, v - v0
        patch = self.depth[[v0, v0, v1, v1], [u0, u1, u0, u1]]
        w = np.array([(1 - a) * (1 - b), a * (1 - b), (1 - a) * b, a * b])
        if np.any(patch[w > 0] <= 0):
            return 0.0
        return float(patch @ w)


def camera_rays(K: CameraIntrinsics, extrinsic: Pose):
    """World-frame origin and per-pixel directions (scaled so the parameter is z-depth)."""
    v, u = np.mgrid[0 : K.height, 0 : K.width]
    d_cam = np.stack([(u - K.cx) / K.fx, (v - K.cy) / K.fy, np.ones(u.shape)], -1).reshape(-1, 3)
    R = extrinsic.R
    eye = -R.T @ extrinsic.t
    return eye, d_cam @ R  # row-wise R^T d


def render(objects, K: CameraIntrinsics, extrinsic: Pose, table: bool = True) -> DepthMap:
    eye, d = camera_rays(K, extrinsic)
    n = len(d)
    best = np.full(n, np.inf)
    mask = np.zeros(n, dtype=np.uint16)
    if table and eye[2] > 0:
        with np.errstate(divide="ignore", invalid="ignore"):
            s = -eye[2] / d[:, 2]
        best = np.where((d[:, 2] < 0) & (s > 0), s, np.inf)
    for k, obj in enumerate(objects):
        # bounding-sphere prefilter
        c = obj.world_center
        oc = eye - c
        dn = np.linalg.norm(d, axis=1)
        proj = (d @ -oc) / dn
        dist2 = oc @ oc - proj**2
        cand = np.flatnonzero((dist2 <= obj.bounding_radius**2 * (1 + 1e-9)) & (proj > -obj.bounding_radius))
        if len(cand) == 0:
            continue
        Ro = obj.pose.R
        o_l = np.broadcast_to(Ro.T @ (eye - obj.pose.t), (len(cand), 3))
        d_l = d[cand] @ Ro
        s = obj.intersect_local(o_l, d_l)
        closer = s < best[cand]
        best[cand[closer]] = s[closer]
        mask[cand[closer]] = k + 1
    depth = np.where(np.isfinite(best), best, 0.0)
    return DepthMap(depth.reshape(K.height, K.width), mask.reshape(K.height, K.width))
