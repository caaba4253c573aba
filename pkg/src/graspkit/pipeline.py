"""End-to-end recovery: encodings -> detections -> keypoints -> PnP -> scale -> metrics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import DEFAULT_TEMPLATE, BinSpec, EncodingArrays, decode_keypoints_arrays, encode_arrays
from .detector import NoiseConfig, Predictions, ScaleSource, resolve_scale_arrays, simulate_detections
from .evaluation import EvalThresholds, MetricsReport, evaluate
from .geometry import CameraIntrinsics, GraspSet, Pose
from .labels import LabelGridSpec, decode_peaks_arrays, render_labels
from .pnp import solve_planar_pnp_batch
from .scenes import Scene, annotate_set, render_depth
from .scenes.render import DepthMap


@dataclass
class ViewData:
    """Ground truth of one (scene, view): camera-frame grasps that encode cleanly."""

    K: CameraIntrinsics
    extrinsic: Pose
    gt: GraspSet  # camera frame
    enc: EncodingArrays
    depth: DepthMap | None = None


def view_data(scene: Scene, view: int, grasps_world: GraspSet, with_depth: bool = False,
              depth: DepthMap | None = None, bins: BinSpec = BinSpec()) -> ViewData:
    """Rendered depth is attached when requested and not supplied."""
    cam = scene.cameras[view]
    g = grasps_world.transformed(cam.extrinsic)
    enc, valid, _ = encode_arrays(g.R, g.t, g.widths, cam.K, bins, DEFAULT_TEMPLATE)
    if depth is None and with_depth:
        depth = render_depth(scene, view)
    return ViewData(cam.K, cam.extrinsic, g.subset(valid), enc.subset(valid), depth)


@dataclass
class Recovered:
    grasps: GraspSet  # camera frame
    confidences: np.ndarray
    reprojection_errors: np.ndarray
    provenance: np.ndarray


def recover(enc: EncodingArrays, K: CameraIntrinsics, source: ScaleSource = ScaleSource.PREDICTED,
            depth: DepthMap | None = None, provenance=None, object_ids=None) -> Recovered:
    """Decode keypoints, solve PnP and fix the scale. Rows that fail any stage are dropped."""
    prov = np.arange(len(enc)) if provenance is None else np.asarray(provenance)
    if len(enc) == 0:
        return Recovered(GraspSet.empty(), np.zeros(0), np.zeros(0), np.zeros(0, int))
    kps = decode_keypoints_arrays(enc.centers, enc.offsets, enc.scales)
    batch = solve_planar_pnp_batch(kps, K, DEFAULT_TEMPLATE)
    scales = resolve_scale_arrays(enc, source, batch.best_t, depth, K)
    norms = np.linalg.norm(np.nan_to_num(batch.best_t), axis=1)
    ok = batch.ok & np.isfinite(scales) & (scales > 0) & (norms > 1e-9)
    idx = np.flatnonzero(ok)
    t = batch.best_t[idx] * (scales[idx] / norms[idx])[:, None]
    if object_ids is None:
        oid = np.full(len(idx), -1)
    else:
        object_ids = np.asarray(object_ids)
        oid = np.where(prov[idx] >= 0, object_ids[np.maximum(prov[idx], 0)], -1)
    gs = GraspSet(batch.best_R[idx], t, enc.widths[idx].copy(), oid)
    return Recovered(gs, enc.confidences[idx], batch.best_error[idx], prov[idx])


def predict_view(vd: ViewData, noise: NoiseConfig, source: ScaleSource, rng: np.random.Generator) -> Recovered:
    preds: Predictions = simulate_detections(vd.enc, noise, vd.K, rng=rng)
    return recover(preds.enc, vd.K, source, vd.depth, preds.provenance, vd.gt.object_ids)


def run_view(vd: ViewData, noise: NoiseConfig, source: ScaleSource, rng: np.random.Generator,
             thresholds: EvalThresholds = EvalThresholds(), symmetric: bool = False) -> MetricsReport:
    rec = predict_view(vd, noise, source, rng)
    return evaluate(rec.grasps, vd.gt, thresholds, symmetric)


def label_round_trip(vd: ViewData, spec: LabelGridSpec | None = None, threshold: float = 0.99):
    """Clean labels decoded back into grasps.

    Returns (recovered grasps, ground truth restricted to the encodings the
    labels kept after (cell, bin) suppression).
    """
    spec = spec or LabelGridSpec(vd.K.width, vd.K.height, 4, BinSpec().M)
    lab = render_labels(vd.enc, spec)
    dec = decode_peaks_arrays(lab.Y, lab, threshold, top_k=len(vd.enc) + 1, spec=spec)
    rec = recover(dec, vd.K)
    return rec.grasps, vd.gt.subset(lab.source)


def scene_rng(seed: int, scene_index: int, view: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(scene_index), int(view)])


def evaluate_scene(scene: Scene, scene_index: int, grasps_world: GraspSet, noise: NoiseConfig,
                   source: ScaleSource, seed: int, thresholds: EvalThresholds = EvalThresholds(),
                   views=None, depth_of=None) -> MetricsReport:
    """Merged report over views; `depth_of(view)` supplies stored depth maps instead of rendering."""
    views = range(len(scene.cameras)) if views is None else views
    need_depth = ScaleSource(source) is ScaleSource.CENTER_DEPTH
    out = MetricsReport(thresholds)
    for v in views:
        depth = depth_of(v) if need_depth and depth_of is not None else None
        vd = view_data(scene, v, grasps_world, need_depth, depth)
        out = out.merge(run_view(vd, noise, source, scene_rng(seed, scene_index, v), thresholds))
    return out


ABLATION_ROWS = (
    ("KGN", ScaleSource.KEYPOINT_PROXIMITY, False),
    ("+sBranch", ScaleSource.PREDICTED, False),
    ("+sBranch+sKpt", ScaleSource.PREDICTED, True),
)


def ablation_noises(noise: NoiseConfig) -> list:
    """Per-row configs: the offset sigma is shared numerically between raw and normalized rows."""
    sigma = noise.sigma_raw if noise.sigma_raw is not None else noise.sigma_offset
    return [noise.replace(sigma_offset=sigma) if norm else noise.replace(sigma_raw=sigma)
            for _, _, norm in ABLATION_ROWS]


def ablation_scene(scene: Scene, scene_index: int, grasps_world: GraspSet, noise: NoiseConfig, seed: int,
                   thresholds: EvalThresholds = EvalThresholds()) -> list:
    """One report per ablation row. Every row replays the same random stream per view."""
    noises = ablation_noises(noise)
    reps = [MetricsReport(thresholds) for _ in ABLATION_ROWS]
    for v in range(len(scene.cameras)):
        vd = view_data(scene, v, grasps_world)
        for k, (_, source, _) in enumerate(ABLATION_ROWS):
            reps[k] = reps[k].merge(run_view(vd, noises[k], source, scene_rng(seed, scene_index, v), thresholds))
    return reps


def ablation_table(per_scene: list, thresholds: EvalThresholds = EvalThresholds()) -> list[dict]:
    """Merge per-scene row reports into threshold-averaged GSR/GCR/OSR rows."""
    rows = []
    for k, (name, source, norm) in enumerate(ABLATION_ROWS):
        rep = MetricsReport.merge_all((s[k] for s in per_scene), thresholds)
        m = rep.mean()
        rows.append({"method": name, "scale_source": source.value, "offsets": "normalized" if norm else "raw",
                     "GSR": m["gsr"], "GCR": m["gcr"], "OSR": m["osr"]})
    return rows


def ablation_run(scenes, noise: NoiseConfig, seed: int = 0, grasps=None, density: int = 5,
                 thresholds: EvalThresholds = EvalThresholds(), mapper=map) -> list[dict]:
    """Three-row ablation over scenes; `grasps` optionally supplies world-frame annotations per scene."""
    scenes = list(scenes)
    if grasps is None:
        grasps = [None] * len(scenes)

    def one(i):
        g = grasps[i] if grasps[i] is not None else annotate_set(scenes[i], density)
        return ablation_scene(scenes[i], i, g, noise, seed, thresholds)

    return ablation_table(list(mapper(one, range(len(scenes)))), thresholds)
