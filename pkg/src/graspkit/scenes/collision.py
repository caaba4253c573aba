"""Box model of a parallel-jaw gripper and point-based collision tests.

All boxes are expressed in the gripper frame (x = closing line, z = from the
fingertips back to the palm). Fingers run from the tips (z = 0) 4 cm back,
the palm sits behind them, and the closing region is the volume swept
between the fingers.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

FINGER = (0.01, 0.01, 0.04)  # x, y, z extents (m)
PALM_DEPTH = 0.02
PALM_THICK = 0.02


def gripper_boxes(width: float) -> dict:
    """name -> (center, half_extents) in the gripper frame."""
    fx, fy, fz = FINGER
    xoff = width / 2 + fx / 2
    return {
        "finger_left": (np.array([-xoff, 0.0, fz / 2]), np.array([fx, fy, fz]) / 2),
        "finger_right": (np.array([xoff, 0.0, fz / 2]), np.array([fx, fy, fz]) / 2),
        "palm": (np.array([0.0, 0.0, fz + PALM_DEPTH / 2]), np.array([width + 2 * fx, PALM_THICK, PALM_DEPTH]) / 2),
    }


def closing_box(width: float):
    fz = FINGER[2]
    return np.array([0.0, 0.0, fz / 2]), np.array([width, FINGER[1], fz]) / 2


def _inside(p, center, half):
    return np.all(np.abs(p - center) < half, axis=-1)


def box_corners(center, half) -> np.ndarray:
    signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float)
    return center + signs * half


def reach_radius(width: float) -> float:
    """Radius around the grasp centre enclosing every gripper box."""
    return float(np.linalg.norm([width / 2 + FINGER[0], PALM_THICK / 2, FINGER[2] + PALM_DEPTH]))


def table_collision(R, t, widths) -> np.ndarray:
    """True where any gripper box corner dips below the table plane z = 0 (world frame)."""
    R = np.asarray(R, dtype=float).reshape(-1, 3, 3)
    t = np.asarray(t, dtype=float).reshape(-1, 3)
    out = np.zeros(len(t), dtype=bool)
    for i, w in enumerate(np.asarray(widths, dtype=float).reshape(-1)):
        corners = np.concatenate([box_corners(c, h) for c, h in gripper_boxes(w).values()])
        z = corners @ R[i, 2] + t[i, 2]
        out[i] = np.any(z < 0)
    return out


class PointCloudIndex:
    """Point set with object ids and a KD-tree for local gripper queries."""

    def __init__(self, points, ids=None):
        self.points = np.asarray(points, dtype=float).reshape(-1, 3)
        self.ids = np.full(len(self.points), -1) if ids is None else np.asarray(ids).reshape(-1)
        self.tree = cKDTree(self.points) if len(self.points) else None

    def local(self, R, t, radius):
        """Points near t, expressed in the frame (R, t), with their ids."""
        if self.tree is None:
            return np.zeros((0, 3)), np.zeros(0, dtype=int)
        idx = np.asarray(self.tree.query_ball_point(t, radius), dtype=int)
        return (self.points[idx] - t) @ R, self.ids[idx]


def point_collisions(R, t, widths, cloud: PointCloudIndex, target_ids=None) -> np.ndarray:
    """Collision of each grasp against cloud points.

    Without target ids every point in any box counts. With target ids, points
    of the target object only count inside the finger boxes.
    """
    R = np.asarray(R, dtype=float).reshape(-1, 3, 3)
    t = np.asarray(t, dtype=float).reshape(-1, 3)
    widths = np.asarray(widths, dtype=float).reshape(-1)
    out = np.zeros(len(t), dtype=bool)
    for i in range(len(t)):
        p, ids = cloud.local(R[i], t[i], reach_radius(widths[i]))
        if len(p) == 0:
            continue
        boxes = gripper_boxes(widths[i])
        if target_ids is None:
            hit = np.zeros(len(p), dtype=bool)
            for c, h in boxes.values():
                hit |= _inside(p, c, h)
        else:
            is_target = ids == target_ids[i]
            fingers = _inside(p, *boxes["finger_left"]) | _inside(p, *boxes["finger_right"])
            hit = fingers | (~is_target & _inside(p, *boxes["palm"]))
        out[i] = bool(np.any(hit))
    return out


def enclosed_counts(R, t, widths, cloud: PointCloudIndex, object_ids=None) -> np.ndarray:
    """Number of cloud points inside each grasp's closing region (optionally only its own object)."""
    R = np.asarray(R, dtype=float).reshape(-1, 3, 3)
    t = np.asarray(t, dtype=float).reshape(-1, 3)
    widths = np.asarray(widths, dtype=float).reshape(-1)
    out = np.zeros(len(t), dtype=int)
    for i in range(len(t)):
        p, ids = cloud.local(R[i], t[i], reach_radius(widths[i]))
        inside = _inside(p, *closing_box(widths[i]))
        if object_ids is not None:
            inside &= ids == object_ids[i]
        out[i] = int(np.count_nonzero(inside))
    return out


def grasp_collisions(R, t, widths, target_ids, cloud: PointCloudIndex) -> np.ndarray:
    """Full collision test: table contact, foreign points in any box, target points in the fingers."""
    return table_collision(R, t, widths) | point_collisions(R, t, widths, cloud, target_ids)
