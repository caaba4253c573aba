"""Closed-form grasp families for the primitive shapes.

Each family maps an evenly spaced parameter grid to grasps in the object's
local frame. Widths are the object span across the closing line plus 1 cm of
clearance, capped at the gripper's maximum opening.
"""
from __future__ import annotations

import math

import numpy as np

from ..geometry import GraspSet, Pose
from .collision import table_collision
from .primitives import Kind, Primitive

MAX_WIDTH = 0.10
CLEARANCE = 0.01
SPHERE_MAX_POLAR = math.radians(60)
SEMISPHERE_MAX_POLAR = math.radians(45)
SEMISPHERE_LIFT = 0.005  # keeps finger corners off the table when tilted
TOP_PINCH_DEPTH = 0.02
CUBOID_STATION_SPAN = 0.3  # stations at +-30% of the free extent


def _width(span: float) -> float:
    return min(span + CLEARANCE, MAX_WIDTH)


def _frames(x, z) -> np.ndarray:
    """Rotation matrices with columns (x, z cross x, z)."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    return np.stack([x, np.cross(z, x), z], axis=-1)


def _ring(n: int, full: float = 2 * math.pi) -> np.ndarray:
    return full * np.arange(n) / n


def _span(lo: float, hi: float, n: int) -> np.ndarray:
    return np.array([(lo + hi) / 2]) if n == 1 else np.linspace(lo, hi, n)


def cylinder_side(r, h, d):
    phi, height = np.meshgrid(_ring(d), _span(0.2 * h, 0.8 * h, d), indexing="ij")
    phi, height = phi.ravel(), height.ravel()
    z = np.stack([np.cos(phi), np.sin(phi), np.zeros_like(phi)], -1)
    x = np.stack([-np.sin(phi), np.cos(phi), np.zeros_like(phi)], -1)
    t = np.stack([np.zeros_like(phi), np.zeros_like(phi), height], -1)
    return _frames(x, z), t, np.full(len(t), _width(2 * r))


def cylinder_top(r, h, d):
    phi = _ring(d, math.pi)
    x = np.stack([np.cos(phi), np.sin(phi), np.zeros_like(phi)], -1)
    z = np.tile([0.0, 0.0, 1.0], (d, 1))
    t = np.tile([0.0, 0.0, h - TOP_PINCH_DEPTH], (d, 1))
    return _frames(x, z), t, np.full(d, _width(2 * r))


def sphere_cap(r, center, max_polar, d):
    az, pol = np.meshgrid(_ring(d), np.linspace(0.0, max_polar, d) if d > 1 else np.zeros(1), indexing="ij")
    az, pol = az.ravel(), pol.ravel()
    z = np.stack([np.sin(pol) * np.cos(az), np.sin(pol) * np.sin(az), np.cos(pol)], -1)
    x = np.stack([-np.sin(az), np.cos(az), np.zeros_like(az)], -1)
    t = np.tile(center, (len(az), 1))
    return _frames(x, z), t, np.full(len(t), _width(2 * r))


def ring_straddle(R, r, d):
    phi = _ring(d)
    x = np.stack([np.cos(phi), np.sin(phi), np.zeros_like(phi)], -1)
    z = np.tile([0.0, 0.0, 1.0], (d, 1))
    t = np.stack([R * np.cos(phi), R * np.sin(phi), np.full(d, r)], -1)
    return _frames(x, z), t, np.full(d, _width(2 * r))


def cuboid_faces(a, b, c, d):
    """Grasps for each closing axis and each face normal of the other two axes, except the bottom face.

    Returns rotations, translations, widths and the closing-axis index of each grasp.
    """
    ext = np.array([a, b, c])
    center = np.array([0.0, 0.0, c / 2])
    eye = np.eye(3)
    Rs, ts, ws, axes = [], [], [], []
    stations = _span(-CUBOID_STATION_SPAN, CUBOID_STATION_SPAN, d)
    for i in range(3):
        if ext[i] > MAX_WIDTH:
            continue
        for j in range(3):
            if j == i:
                continue
            k = 3 - i - j
            for sign in (1.0, -1.0):
                if j == 2 and sign < 0:
                    continue  # resting face
                for s in stations:
                    Rs.append(_frames(eye[i], sign * eye[j]))
                    ts.append(center + s * ext[k] * eye[k])
                    ws.append(_width(ext[i]))
                    axes.append(i)
    return np.array(Rs), np.array(ts), np.array(ws), np.array(axes, dtype=int)


def local_family(obj: Primitive, density: int):
    """Raw family in the object frame (no table pruning): R, t, widths."""
    s = obj.sizes
    d = int(density)
    k = obj.kind
    if k is Kind.CYLINDER:
        parts = [cylinder_side(s["r"], s["h"], d)]
        if 2 * s["r"] <= MAX_WIDTH:
            parts.append(cylinder_top(s["r"], s["h"], d))
        return tuple(np.concatenate(p) for p in zip(*parts))
    if k is Kind.STICK:
        return cylinder_side(s["r"], s["h"], d)
    if k is Kind.SPHERE:
        return sphere_cap(s["r"], np.array([0.0, 0.0, s["r"]]), SPHERE_MAX_POLAR, d)
    if k is Kind.SEMISPHERE:
        return sphere_cap(s["r"], np.array([0.0, 0.0, SEMISPHERE_LIFT]), SEMISPHERE_MAX_POLAR, d)
    if k is Kind.RING:
        return ring_straddle(s["R"], s["r"], d)
    return cuboid_faces(s["a"], s["b"], s["c"], d)[:3]


def object_grasps(obj: Primitive, object_id: int, density: int) -> GraspSet:
    """World-frame family of one object, with grasps touching the table removed."""
    if density < 1:
        raise ValueError("density must be >= 1")
    R, t, w = local_family(obj, density)
    gs = GraspSet(R, t, w, np.full(len(t), object_id)).transformed(obj.pose)
    return gs.subset(~table_collision(gs.R, gs.t, gs.widths))


def world_pose(obj: Primitive, R, t) -> Pose:
    return obj.pose @ Pose.from_Rt(R, t)
