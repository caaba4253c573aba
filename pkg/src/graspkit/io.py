"""On-disk dataset layout.

    DIR/manifest.json
    DIR/scene_0000/scene.json          objects + cameras
    DIR/scene_0000/grasps.json         world-frame annotations
    DIR/scene_0000/view_0.json         depth/mask sidecar (size, dtype, camera)
    DIR/scene_0000/view_0.depth.f32    z-depth, little-endian float32, row-major
    DIR/scene_0000/view_0.mask.u16     instance mask, little-endian uint16
    DIR/scene_0000/view_0.cloud.csv    camera-frame object points: x,y,z,object_id
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .errors import MalformedInput
from .geometry import Grasp, GraspSet, backproject
from .scenes import Scene
from .scenes.render import DepthMap

MANIFEST = "manifest.json"
FORMAT_VERSION = 1


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def scene_dir(index: int) -> str:
    return f"scene_{index:04d}"


def write_text(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(text.encode("utf-8"))


def depth_cloud(depth: DepthMap, K) -> tuple:
    """Camera-frame points of every object pixel, and the object index of each."""
    v, u = np.nonzero((depth.mask > 0) & (depth.depth > 0))
    pts = backproject(np.stack([u, v], -1).astype(float), depth.depth[v, u], K)
    return pts, depth.mask[v, u].astype(int) - 1


def cloud_to_csv(points, ids) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "z", "object_id"])
    for p, k in zip(np.asarray(points).reshape(-1, 3), np.asarray(ids).reshape(-1)):
        w.writerow([repr(float(p[0])), repr(float(p[1])), repr(float(p[2])), int(k)])
    return buf.getvalue()


def cloud_from_csv(text: str) -> tuple:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["x", "y", "z", "object_id"]:
        raise MalformedInput("cloud CSV header mismatch")
    body = rows[1:]
    try:
        pts = np.array([[float(r[0]), float(r[1]), float(r[2])] for r in body]).reshape(-1, 3)
        ids = np.array([int(r[3]) for r in body], dtype=int)
    except (ValueError, IndexError) as e:
        raise MalformedInput(f"bad cloud row: {e}") from e
    return pts, ids


def write_view(root: Path, index: int, view: int, scene: Scene, depth: DepthMap):
    d = root / scene_dir(index)
    d.mkdir(parents=True, exist_ok=True)
    stem = f"view_{view}"
    cam = scene.cameras[view]
    (d / f"{stem}.depth.f32").write_bytes(depth.depth.astype("<f4").tobytes())
    (d / f"{stem}.mask.u16").write_bytes(depth.mask.astype("<u2").tobytes())
    side = {"width": depth.width, "height": depth.height, "units": "m", "depth_dtype": "f32le", "mask_dtype": "u16le",
            "order": "row-major", "depth": "z", "camera": cam.to_json()}
    write_text(d / f"{stem}.json", dumps(side))
    write_text(d / f"{stem}.cloud.csv", cloud_to_csv(*depth_cloud(depth, cam.K)))


def write_scene(root: Path, index: int, scene: Scene, grasps: GraspSet):
    d = root / scene_dir(index)
    write_text(d / "scene.json", dumps(scene.to_json()))
    write_text(d / "grasps.json", dumps([g.to_json() for g in grasps.to_grasps()]))


def write_manifest(root: Path, meta: dict, n_scenes: int, n_views: int):
    records = [{"scene": i, "view": v, "dir": scene_dir(i)} for i in range(n_scenes) for v in range(n_views)]
    write_text(root / MANIFEST, dumps({"version": FORMAT_VERSION, **meta, "records": records}))


def _load_json(path: Path):
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise MalformedInput(f"{path}: {e}") from e


def read_manifest(root) -> dict:
    m = _load_json(Path(root) / MANIFEST)
    if not isinstance(m, dict) or "records" not in m:
        raise MalformedInput("manifest lacks records")
    return m


def read_grasps(root, index: int) -> list[Grasp]:
    """Annotations exactly as stored (quaternion poses, no matrix round trip)."""
    path = Path(root) / scene_dir(index) / "grasps.json"
    try:
        return [Grasp.from_json(g) for g in _load_json(path)]
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedInput(f"{path}: {e}") from e


def read_scene(root, index: int) -> tuple:
    d = Path(root) / scene_dir(index)
    try:
        scene = Scene.from_json(_load_json(d / "scene.json"))
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedInput(f"{d}: {e}") from e
    return scene, GraspSet.from_grasps(read_grasps(root, index))


def read_view(root, index: int, view: int) -> DepthMap:
    d = Path(root) / scene_dir(index)
    side = _load_json(d / f"view_{view}.json")
    shape = (int(side["height"]), int(side["width"]))
    depth = np.frombuffer((d / f"view_{view}.depth.f32").read_bytes(), dtype="<f4")
    mask = np.frombuffer((d / f"view_{view}.mask.u16").read_bytes(), dtype="<u2")
    if depth.size != shape[0] * shape[1] or mask.size != depth.size:
        raise MalformedInput(f"view {index}/{view}: blob size does not match sidecar")
    return DepthMap(depth.reshape(shape).astype(float), mask.reshape(shape).astype(np.uint16))


def read_cloud(root, index: int, view: int) -> tuple:
    return cloud_from_csv((Path(root) / scene_dir(index) / f"view_{view}.cloud.csv").read_text())


def dataset_scene_indices(manifest: dict) -> list:
    return sorted({int(r["scene"]) for r in manifest["records"]})
