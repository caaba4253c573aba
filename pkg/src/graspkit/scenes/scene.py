"""Tabletop scenes of primitive shapes, their grasp annotations and sensor data."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import PlacementFailure
from ..geometry import CameraIntrinsics, Grasp, GraspSet, Pose, Rotation, look_at
from .collision import PointCloudIndex, grasp_collisions
from .families import object_grasps
from .primitives import ALL_KINDS, SIZE_RANGES, Kind, Primitive
from .render import DepthMap, render

TRAIN_DENSITY = 5
TEST_DENSITY = 2 * TRAIN_DENSITY
CLOUD_SAMPLES = 2048
MAX_PLACEMENT_ATTEMPTS = 1000
N_COLORS = 8
_CLOUD_STREAM = 1


def default_intrinsics() -> CameraIntrinsics:
    return CameraIntrinsics(fx=500.0, fy=500.0, cx=255.5, cy=255.5, width=512, height=512)


@dataclass(frozen=True)
class Camera:
    K: CameraIntrinsics
    extrinsic: Pose  # world -> camera

    def to_json(self) -> dict:
        return {"K": self.K.to_json(), "extrinsic": self.extrinsic.to_json()}

    @classmethod
    def from_json(cls, d: dict) -> "Camera":
        return cls(CameraIntrinsics.from_json(d["K"]), Pose.from_json(d["extrinsic"]))


@dataclass
class SceneConfig:
    kinds: tuple = ALL_KINDS  # candidate kinds in single-object mode
    views: int = 5
    single_region: float = 0.05  # half-size of the xy placement square (m)
    multi_region: float = 0.20
    gap: float = 0.005  # minimum footprint clearance between objects
    distance: tuple = (0.6, 1.2)
    elevation_deg: tuple = (30.0, 75.0)
    intrinsics: CameraIntrinsics = field(default_factory=default_intrinsics)


@dataclass
class Scene:
    objects: list
    cameras: list
    seed: int
    multi: bool = False

    def to_json(self, view: int | None = None) -> dict:
        d = {
            "objects": [o.to_json() for o in self.objects],
            "camera": self.cameras[view or 0].to_json() if self.cameras else None,
            "cameras": [c.to_json() for c in self.cameras],
            "seed": self.seed,
            "multi": self.multi,
        }
        if view is not None:
            d["view"] = view
        return d

    @classmethod
    def from_json(cls, d: dict) -> "Scene":
        cams = d.get("cameras") or ([d["camera"]] if d.get("camera") else [])
        return cls([Primitive.from_json(o) for o in d["objects"]], [Camera.from_json(c) for c in cams],
                   int(d["seed"]), bool(d.get("multi", len(d["objects"]) > 1)))

    @property
    def centroid(self) -> np.ndarray:
        if not self.objects:
            return np.zeros(3)
        return np.mean([o.world_center for o in self.objects], axis=0)


def _sample_sizes(kind: Kind, rng: np.random.Generator) -> dict:
    return {k: float(rng.uniform(lo, hi)) for k, (lo, hi) in SIZE_RANGES[kind].items()}


def _place(kind: Kind, rng, region: float, placed: list, gap: float):
    sizes = _sample_sizes(kind, rng)
    color = int(rng.integers(N_COLORS))
    yaw = float(rng.uniform(0, 2 * math.pi))
    x, y = rng.uniform(-region, region, 2)
    obj = Primitive(kind, sizes, Pose(Rotation.from_axis_angle((0, 0, 1), yaw), (x, y, 0.0)), color)
    for other in placed:
        sep = np.hypot(*(obj.pose.t[:2] - other.pose.t[:2]))
        if sep < obj.footprint_radius + other.footprint_radius + gap:
            return None
    return obj


def sample_views(center, n: int, rng: np.random.Generator, config: SceneConfig) -> list:
    cams = []
    for _ in range(n):
        dist = rng.uniform(*config.distance)
        el = math.radians(rng.uniform(*config.elevation_deg))
        az = rng.uniform(0, 2 * math.pi)
        eye = np.asarray(center) + dist * np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])
        cams.append(Camera(config.intrinsics, look_at(eye, center)))
    return cams


def sample_scene(config: SceneConfig | None = None, seed: int = 0, multi: bool = False) -> Scene:
    """Random scene: one object (single) or one of each kind (multi), plus camera views."""
    config = config or SceneConfig()
    rng = np.random.default_rng(seed)
    if multi:
        kinds = list(ALL_KINDS)
        region = config.multi_region
    else:
        kinds = [Kind(config.kinds[int(rng.integers(len(config.kinds)))])]
        region = config.single_region
    placed, attempts = [], 0
    for kind in kinds:
        while True:
            if attempts >= MAX_PLACEMENT_ATTEMPTS:
                raise PlacementFailure(f"could not place {len(kinds)} objects in {attempts} attempts")
            attempts += 1
            obj = _place(kind, rng, region, placed, config.gap)
            if obj is not None:
                placed.append(obj)
                break
    scene = Scene(placed, [], int(seed), multi)
    scene.cameras = sample_views(scene.centroid, config.views, rng, config)
    return scene


def surface_cloud(scene: Scene, n: int = CLOUD_SAMPLES, rng: np.random.Generator | None = None):
    """Area-uniform surface samples of every object (world frame) and their object ids."""
    if n < 1:
        raise ValueError("need at least one sample per object")
    rng = rng if rng is not None else np.random.default_rng([scene.seed, _CLOUD_STREAM])
    pts = [o.sample_surface(n, rng) for o in scene.objects]
    if not pts:
        return np.zeros((0, 3)), np.zeros(0, dtype=int)
    ids = np.repeat(np.arange(len(scene.objects)), n)
    return np.concatenate(pts), ids


def annotate_set(scene: Scene, density: int = TRAIN_DENSITY, cloud=None) -> GraspSet:
    """World-frame grasp annotations; colliding grasps are pruned in multi-object scenes."""
    grasps = GraspSet.concat([object_grasps(o, k, density) for k, o in enumerate(scene.objects)])
    if len(scene.objects) > 1 and len(grasps):
        if cloud is None:
            cloud = PointCloudIndex(*surface_cloud(scene))
        bad = grasp_collisions(grasps.R, grasps.t, grasps.widths, grasps.object_ids, cloud)
        grasps = grasps.subset(~bad)
    return grasps


def annotate(scene: Scene, density: int = TRAIN_DENSITY) -> list[Grasp]:
    return annotate_set(scene, density).to_grasps()


def render_depth(scene: Scene, view: int = 0) -> DepthMap:
    cam = scene.cameras[view]
    return render(scene.objects, cam.K, cam.extrinsic)


def check_grasp_collision(grasp: Grasp, scene: Scene, target_id: int, cloud=None) -> bool:
    if cloud is None:
        cloud = PointCloudIndex(*surface_cloud(scene))
    elif not isinstance(cloud, PointCloudIndex):
        cloud = PointCloudIndex(*cloud)
    gs = GraspSet.from_grasps([grasp])
    return bool(grasp_collisions(gs.R, gs.t, gs.widths, [target_id], cloud)[0])


def scene_seed(seed: int, index: int) -> int:
    """Per-scene seed derived from (global seed, scene index); independent of worker scheduling."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])
