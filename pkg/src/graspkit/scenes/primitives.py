"""Parametric primitive shapes.

Every primitive lives in a local frame whose origin is the centre of its
table contact and whose +z axis points up; its world pose is a yaw plus a
translation on the table plane (z = 0), so objects rest analytically.

    cylinder/stick  axis along z, z in [0, h], radius r
    sphere          centre (0, 0, r)
    semisphere      flat face on z = 0, dome up, radius r
    ring            torus around z, major radius R, tube radius r, centre height r
    cuboid          extents (a, b, c) along x, y, z, centre (0, 0, c/2)
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..geometry import Pose

RING_SPHERES = 64


class Kind(str, Enum):
    CYLINDER = "cylinder"
    RING = "ring"
    STICK = "stick"
    SPHERE = "sphere"
    SEMISPHERE = "semisphere"
    CUBOID = "cuboid"


ALL_KINDS = tuple(Kind)

SIZE_KEYS = {
    Kind.CYLINDER: ("r", "h"),
    Kind.STICK: ("r", "h"),
    Kind.RING: ("R", "r"),
    Kind.SPHERE: ("r",),
    Kind.SEMISPHERE: ("r",),
    Kind.CUBOID: ("a", "b", "c"),
}

# uniform sampling ranges (m); radii capped so that 2r + clearance stays under 0.10 m
SIZE_RANGES = {
    Kind.CYLINDER: {"r": (0.02, 0.045), "h": (0.06, 0.15)},
    Kind.STICK: {"r": (0.004, 0.01), "h": (0.08, 0.15)},
    Kind.RING: {"R": (0.04, 0.06), "r": (0.008, 0.015)},
    Kind.SPHERE: {"r": (0.02, 0.045)},
    Kind.SEMISPHERE: {"r": (0.02, 0.045)},
    Kind.CUBOID: {"a": (0.03, 0.08), "b": (0.03, 0.08), "c": (0.03, 0.08)},
}


@dataclass(frozen=True)
class Primitive:
    kind: Kind
    sizes: dict
    pose: Pose = field(default_factory=Pose)
    color: int = 0

    def __post_init__(self):
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        sizes = {k: float(self.sizes[k]) for k in SIZE_KEYS[kind]}
        object.__setattr__(self, "sizes", sizes)
        if any(v <= 0 for v in sizes.values()):
            raise ValueError(f"{kind.value}: sizes must be positive")
        if kind is Kind.STICK and not (sizes["r"] <= 0.01 and sizes["h"] >= 5 * sizes["r"]):
            raise ValueError("stick needs r <= 0.01 and h >= 5r")
        if kind is Kind.RING and not sizes["r"] < sizes["R"]:
            raise ValueError("ring tube radius must be below the major radius")

    def __getitem__(self, key) -> float:
        return self.sizes[key]

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "sizes": dict(self.sizes), "pose": self.pose.to_json(), "color": self.color}

    @classmethod
    def from_json(cls, d: dict) -> "Primitive":
        return cls(Kind(d["kind"]), d["sizes"], Pose.from_json(d["pose"]), int(d.get("color", 0)))

    # -- local geometry -------------------------------------------------

    @property
    def local_center(self) -> np.ndarray:
        s = self.sizes
        k = self.kind
        if k in (Kind.CYLINDER, Kind.STICK):
            return np.array([0.0, 0.0, s["h"] / 2])
        if k in (Kind.SPHERE, Kind.RING):
            return np.array([0.0, 0.0, s["r"]])
        if k is Kind.SEMISPHERE:
            return np.array([0.0, 0.0, s["r"] / 2])
        return np.array([0.0, 0.0, s["c"] / 2])

    @property
    def bounding_radius(self) -> float:
        """Radius of a sphere around `local_center` containing the shape."""
        s = self.sizes
        k = self.kind
        if k in (Kind.CYLINDER, Kind.STICK):
            return math.hypot(s["r"], s["h"] / 2)
        if k is Kind.SPHERE:
            return s["r"]
        if k is Kind.SEMISPHERE:
            return math.hypot(s["r"], s["r"] / 2)
        if k is Kind.RING:
            return s["R"] + s["r"]
        return 0.5 * math.sqrt(s["a"] ** 2 + s["b"] ** 2 + s["c"] ** 2)

    @property
    def footprint_radius(self) -> float:
        s = self.sizes
        if self.kind is Kind.RING:
            return s["R"] + s["r"]
        if self.kind is Kind.CUBOID:
            return 0.5 * math.hypot(s["a"], s["b"])
        return s["r"]

    @property
    def world_center(self) -> np.ndarray:
        return self.pose.apply(self.local_center)

    def contains_local(self, p, margin: float = 0.0) -> np.ndarray:
        """Strict interior test; `margin` > 0 shrinks the shape."""
        p = np.asarray(p, dtype=float)
        x, y, z = p[..., 0], p[..., 1], p[..., 2]
        s = self.sizes
        k = self.kind
        if k in (Kind.CYLINDER, Kind.STICK):
            return (np.hypot(x, y) < s["r"] - margin) & (z > margin) & (z < s["h"] - margin)
        if k is Kind.SPHERE:
            return np.linalg.norm(p - self.local_center, axis=-1) < s["r"] - margin
        if k is Kind.SEMISPHERE:
            return (np.linalg.norm(p, axis=-1) < s["r"] - margin) & (z > margin)
        if k is Kind.RING:
            return (np.hypot(x, y) - s["R"]) ** 2 + (z - s["r"]) ** 2 < (s["r"] - margin) ** 2
        return (
            (np.abs(x) < s["a"] / 2 - margin)
            & (np.abs(y) < s["b"] / 2 - margin)
            & (np.abs(z - s["c"] / 2) < s["c"] / 2 - margin)
        )

    def contains(self, p, margin: float = 0.0) -> np.ndarray:
        return self.contains_local(self.pose.inverse().apply(p), margin)

    # -- surface sampling -------------------------------------------------

    def face_areas(self) -> dict:
        s = self.sizes
        k = self.kind
        if k in (Kind.CYLINDER, Kind.STICK):
            cap = math.pi * s["r"] ** 2
            return {"side": 2 * math.pi * s["r"] * s["h"], "bottom": cap, "top": cap}
        if k is Kind.SPHERE:
            return {"sphere": 4 * math.pi * s["r"] ** 2}
        if k is Kind.SEMISPHERE:
            return {"dome": 2 * math.pi * s["r"] ** 2, "flat": math.pi * s["r"] ** 2}
        if k is Kind.RING:
            return {"torus": 4 * math.pi**2 * s["R"] * s["r"]}
        a, b, c = s["a"], s["b"], s["c"]
        return {"+x": b * c, "-x": b * c, "+y": a * c, "-y": a * c, "+z": a * b, "-z": a * b}

    def sample_surface_local(self, n: int, rng: np.random.Generator, return_faces: bool = False):
        areas = self.face_areas()
        names = list(areas)
        w = np.array([areas[k] for k in names])
        counts = rng.multinomial(n, w / w.sum())
        chunks, labels = [], []
        for name, m in zip(names, counts):
            chunks.append(self._sample_face(name, int(m), rng))
            labels += [name] * int(m)
        pts = np.concatenate(chunks, axis=0) if chunks else np.zeros((0, 3))
        return (pts, labels) if return_faces else pts

    def _sample_face(self, name: str, m: int, rng: np.random.Generator) -> np.ndarray:
        s = self.sizes
        if m == 0:
            return np.zeros((0, 3))
        if name == "side":
            phi = rng.uniform(0, 2 * math.pi, m)
            return np.stack([s["r"] * np.cos(phi), s["r"] * np.sin(phi), rng.uniform(0, s["h"], m)], -1)
        if name in ("top", "bottom", "flat"):
            rho = s["r"] * np.sqrt(rng.uniform(0, 1, m))
            phi = rng.uniform(0, 2 * math.pi, m)
            z = s["h"] if name == "top" else 0.0
            return np.stack([rho * np.cos(phi), rho * np.sin(phi), np.full(m, z)], -1)
        if name == "sphere":
            v = rng.normal(size=(m, 3))
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            return v * s["r"] + self.local_center
        if name == "dome":
            # Archimedes: height is uniform on a spherical zone
            z = rng.uniform(0, s["r"], m)
            phi = rng.uniform(0, 2 * math.pi, m)
            rho = np.sqrt(np.clip(s["r"] ** 2 - z**2, 0, None))
            return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], -1)
        if name == "torus":
            R, r = s["R"], s["r"]
            out = np.zeros((0, 3))
            while len(out) < m:
                k = 2 * (m - len(out)) + 8
                th = rng.uniform(0, 2 * math.pi, k)
                keep = rng.uniform(0, 1, k) < (R + r * np.cos(th)) / (R + r)
                th = th[keep]
                phi = rng.uniform(0, 2 * math.pi, len(th))
                rad = R + r * np.cos(th)
                pts = np.stack([rad * np.cos(phi), rad * np.sin(phi), r + r * np.sin(th)], -1)
                out = np.concatenate([out, pts])
            return out[:m]
        # cuboid faces
        a, b, c = s["a"], s["b"], s["c"]
        u = rng.uniform(-0.5, 0.5, (m, 3)) * np.array([a, b, c]) + np.array([0, 0, c / 2])
        axis = "xyz".index(name[1])
        half = (a, b, c)[axis] / 2
        u[:, axis] = (half if name[0] == "+" else -half) + (c / 2 if axis == 2 else 0.0)
        return u

    def sample_surface(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.pose.apply(self.sample_surface_local(n, rng))

    # -- ray casting --------------------------------------------------------

    def intersect_local(self, o, d) -> np.ndarray:
        """Nearest positive ray parameter per ray (inf if missed). o, d: (n, 3)."""
        k = self.kind
        s = self.sizes
        if k is Kind.SPHERE:
            return _ray_sphere(o, d, self.local_center, s["r"])
        if k is Kind.SEMISPHERE:
            return np.minimum(
                _ray_sphere(o, d, np.zeros(3), s["r"], keep=lambda p: p[..., 2] >= 0),
                _ray_disk(o, d, 0.0, s["r"]),
            )
        if k in (Kind.CYLINDER, Kind.STICK):
            return _ray_cylinder(o, d, s["r"], s["h"])
        if k is Kind.RING:
            phi = 2 * math.pi * np.arange(RING_SPHERES) / RING_SPHERES
            best = np.full(len(o), np.inf)
            for p in phi:
                c = np.array([s["R"] * math.cos(p), s["R"] * math.sin(p), s["r"]])
                best = np.minimum(best, _ray_sphere(o, d, c, s["r"]))
            return best
        half = np.array([s["a"], s["b"], s["c"]]) / 2
        return _ray_box(o, d, np.array([0.0, 0.0, s["c"] / 2]), half)


def _nearest_positive(*cands):
    best = None
    for c in cands:
        c = np.where(np.isfinite(c) & (c > 1e-9), c, np.inf)
        best = c if best is None else np.minimum(best, c)
    return best


def _ray_sphere(o, d, c, r, keep=None):
    oc = o - c
    a = np.einsum("ij,ij->i", d, d)
    b = np.einsum("ij,ij->i", d, oc)
    cc = np.einsum("ij,ij->i", oc, oc) - r * r
    disc = b * b - a * cc
    hit = disc >= 0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    s1 = np.where(hit, (-b - sq) / a, np.inf)
    s2 = np.where(hit, (-b + sq) / a, np.inf)
    if keep is not None:
        s1 = np.where(keep(o + np.where(hit, s1, 0.0)[:, None] * d), s1, np.inf)
        s2 = np.where(keep(o + np.where(hit, s2, 0.0)[:, None] * d), s2, np.inf)
    return _nearest_positive(s1, s2)


def _ray_disk(o, d, z0, r):
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (z0 - o[:, 2]) / d[:, 2]
    p = o + np.where(np.isfinite(s), s, 0)[:, None] * d
    inside = np.hypot(p[:, 0], p[:, 1]) <= r
    return _nearest_positive(np.where(inside, s, np.inf))


def _ray_cylinder(o, d, r, h):
    a = d[:, 0] ** 2 + d[:, 1] ** 2
    b = o[:, 0] * d[:, 0] + o[:, 1] * d[:, 1]
    c = o[:, 0] ** 2 + o[:, 1] ** 2 - r * r
    disc = b * b - a * c
    hit = (disc >= 0) & (a > 1e-15)
    sq = np.sqrt(np.where(hit, disc, 0.0))
    safe_a = np.where(a > 1e-15, a, 1.0)
    sides = []
    for s in ((-b - sq) / safe_a, (-b + sq) / safe_a):
        z = o[:, 2] + s * d[:, 2]
        sides.append(np.where(hit & (z >= 0) & (z <= h), s, np.inf))
    return _nearest_positive(*sides, _ray_disk(o, d, 0.0, r), _ray_disk(o, d, h, r))


def _ray_box(o, d, center, half):
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (center - half - o) * inv
        t2 = (center + half - o) * inv
    tmin = np.nanmax(np.minimum(t1, t2), axis=1)
    tmax = np.nanmin(np.maximum(t1, t2), axis=1)
    hit = (tmax >= tmin) & (tmax > 1e-9)
    s = np.where(tmin > 1e-9, tmin, tmax)
    return np.where(hit, s, np.inf)
