"""Acceptance suite. Each test prints one PASS/FAIL line with the measured numbers."""
import csv
import hashlib
import time
from pathlib import Path

import numpy as np
import pytest
from oracles import brute_force_metrics, gauss_newton_oracle

from graspkit.cli import main
from graspkit.codec import DEFAULT_TEMPLATE, decode_keypoints_arrays, encode_arrays, grasp_keypoints_3d
from graspkit.detector import NoiseConfig, ScaleSource, simulate_detections
from graspkit.evaluation import EvalThresholds, MetricsReport, evaluate
from graspkit.geometry import CameraIntrinsics, GraspSet, project_points, random_rotation_matrices, rotation_errors, so3_exp
from graspkit.labels import focal_loss, focal_loss_grad, total_loss
from graspkit.pipeline import ablation_run, label_round_trip, recover, view_data
from graspkit.pnp import solve_planar_pnp_batch
from graspkit.scenes import TEST_DENSITY, Kind, SceneConfig, annotate_set, sample_scene, scene_seed

K = CameraIntrinsics(fx=500.0, fy=500.0, cx=255.5, cy=255.5, width=512, height=512)
FACING = np.array([[1.0, 0, 0], [0, 0, 1], [0, -1, 0]]).T
STRICT = EvalThresholds(((0.01, 20.0),))


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")
        assert ok, detail
    return emit


def facing_poses(rng, n, dist, min_facing=0.3):
    R = np.zeros((0, 3, 3))
    while len(R) < n:
        c = random_rotation_matrices(rng, 2 * n)
        R = np.concatenate([R, c[np.abs(c[:, 2, 1]) > min_facing]])
    R = R[:n]
    z = rng.uniform(*dist, n)
    xy = rng.uniform(-0.15, 0.15, (n, 2)) * z[:, None]
    return R, np.concatenate([xy, z[:, None]], 1)


@pytest.mark.slow
def test_criterion_1_error_grows_with_distance(tmp_path, verdict):
    failures, worst = [], 0.0
    ratios = []
    for seed in range(10):
        out = tmp_path / f"fig2_{seed}.csv"
        t0 = time.perf_counter()
        rc = main(["fig2", "--distances", "0.3:2.0:8", "--sigmas", "0.5,1,2,4", "--trials", "500",
                   "--seed", str(seed), "--out", str(out)])
        worst = max(worst, time.perf_counter() - t0)
        assert rc == 0
        rows = list(csv.DictReader(out.open()))
        for s in sorted({float(r["sigma"]) for r in rows}):
            cells = sorted((float(r["distance"]), float(r["mean_rot_err_deg"]), float(r["mean_trans_err_m"]))
                           for r in rows if float(r["sigma"]) == s)
            for col in (1, 2):
                vals = [c[col] for c in cells]
                if not all(b > a for a, b in zip(vals, vals[1:])):
                    failures.append((seed, s, col, "monotone"))
                if s >= 1:
                    ratios.append(vals[-1] / vals[0])
                    if vals[-1] < 2 * vals[0]:
                        failures.append((seed, s, col, "ratio"))
    ok = not failures and worst < 60
    verdict(1, ok, f"10 seeds, strictly increasing in distance at every sigma, 2.0 m / 0.3 m error ratio "
                   f"min {min(ratios):.1f}x, slowest run {worst:.1f}s, failures {failures}")


def test_criterion_2_normalized_noise_variance_law(verdict):
    sigma = 1.5
    n = 100_000
    rel = {}
    for S in (0.5, 1.0, 2.0):
        enc, valid, _ = encode_arrays(FACING[None], np.array([[0.01, -0.02, S]]), [0.05], K)
        assert valid[0]
        gt = enc.subset(np.zeros(n, int))
        pred = simulate_detections(gt, NoiseConfig(sigma_offset=sigma, sigma_raw=None, seed=int(S * 10)))
        clean = decode_keypoints_arrays(gt.centers, gt.offsets, gt.scales)
        noisy = decode_keypoints_arrays(pred.enc.centers, pred.enc.offsets, pred.enc.scales)
        rel[S] = (noisy - clean).std() / (sigma * S) - 1
    ok = all(abs(v) < 0.05 for v in rel.values())
    verdict(2, ok, "std / (sigma * S) - 1 = " + ", ".join(f"S={S}: {v:+.4f}" for S, v in rel.items()))


@pytest.mark.slow
def test_criterion_3_clean_label_round_trip(verdict):
    t0 = time.perf_counter()
    rep = MetricsReport(STRICT)
    suppressed = total = 0
    for i in range(200):
        scene = sample_scene(seed=scene_seed(3, i), multi=bool(i % 2))
        grasps = annotate_set(scene, TEST_DENSITY)
        for v in range(len(scene.cameras)):
            vd = view_data(scene, v, grasps)
            rec, kept = label_round_trip(vd)
            total += len(vd.gt)
            suppressed += len(vd.gt) - len(kept)
            rep = rep.merge(evaluate(rec, kept, STRICT))
    dt = time.perf_counter() - t0
    ok = rep.gsr(0) == rep.gcr(0) == rep.osr(0) == 100.0 and dt < 120
    verdict(3, ok, f"200 scenes x 5 views at (1cm, 20deg): GSR {rep.gsr(0):.2f} GCR {rep.gcr(0):.2f} "
                   f"OSR {rep.osr(0):.2f} over {rep.n_gt} unsuppressed grasps "
                   f"({suppressed} of {total} share a cell and bin), {dt:.0f}s")


def _mean_errors(R, t, R_ref, t_ref):
    return rotation_errors(R, R_ref).mean(), np.linalg.norm(t - t_ref, axis=1).mean()


@pytest.mark.slow
def test_criterion_4_pnp_matches_oracle(verdict):
    rng = np.random.default_rng(4)
    R, t = facing_poses(rng, 1000, (0.4, 1.5))
    b = solve_planar_pnp_batch(project_points(grasp_keypoints_3d(R, t), K), K)
    rot = rotation_errors(b.best_R, R).max()
    trans = (np.linalg.norm(b.best_t - t, axis=1) / np.linalg.norm(t, axis=1)).max()
    clean_ok = bool(b.ok.all()) and rot < 1e-6 and trans < 1e-6

    def noisy_ratio(dist, n=1000):
        R, t = facing_poses(rng, n, dist)
        kps = project_points(grasp_keypoints_3d(R, t), K) + rng.normal(0, 1.0, (n, 4, 2))
        b = solve_planar_pnp_batch(kps, K)
        Ro, to = gauss_newton_oracle(R, t, DEFAULT_TEMPLATE.metric, kps, K)
        ours = _mean_errors(b.best_R, b.best_t, R, t)
        ref = _mean_errors(Ro, to, R, t)
        return ours[0] / ref[0], ours[1] / ref[1]

    near = noisy_ratio((0.2, 0.5))
    far = noisy_ratio((0.4, 1.5))
    noisy_ok = all(abs(r - 1) <= 0.10 for r in near)
    verdict(4, clean_ok and noisy_ok,
            f"noiseless max rot {rot:.1e} rad, max rel trans {trans:.1e}; sigma=1px at 0.2-0.5 m "
            f"ours/oracle rot {near[0]:.3f} trans {near[1]:.3f} "
            f"(for reference at 0.4-1.5 m: rot {far[0]:.2f} trans {far[1]:.2f}, mirror-solution ambiguity)")


def test_criterion_5_metrics_match_brute_force(verdict):
    rng = np.random.default_rng(5)
    th = EvalThresholds()
    mismatches = checked = 0
    for _ in range(500):
        n, m = int(rng.integers(1, 21)), int(rng.integers(1, 21))
        gt = GraspSet(random_rotation_matrices(rng, m), rng.uniform(-0.05, 0.05, (m, 3)), np.full(m, 0.05),
                      rng.integers(5, size=m))
        src = rng.integers(m, size=n)
        R = so3_exp(rng.normal(0, np.radians(20), (n, 3))) @ gt.R[src]
        tt = gt.t[src] + rng.normal(0, 0.015, (n, 3))
        far = rng.random(n) < 0.3
        R[far] = random_rotation_matrices(rng, int(far.sum()))
        pred = GraspSet(R, tt, np.full(n, 0.05), np.full(n, -1))
        for symmetric in (False, True):
            rep = evaluate(pred, gt, th, symmetric)
            for i, (a, r) in enumerate(th):
                ref = brute_force_metrics(pred.R, pred.t, gt.R, gt.t, gt.object_ids, a, r, symmetric)
                got = (rep.counts["pred_matched"][i], rep.counts["gt_matched"][i], rep.counts["obj_success"][i])
                mismatches += got != ref
                checked += 1
    verdict(5, mismatches == 0, f"{checked} (instance, threshold, symmetry) cells over 500 instances, "
                                f"{mismatches} mismatches")


@pytest.mark.slow
def test_criterion_6_ablation_direction(verdict):
    base = NoiseConfig(shrink=0.85, sigma_raw=2.0, sigma_scale_rel=0.05)
    passed, lines = 0, []
    for seed in range(10):
        scenes = [sample_scene(seed=scene_seed(seed, i), multi=True) for i in range(100)]
        rows = ablation_run(scenes, base.replace(seed=seed), seed=seed)
        g = [r["GSR"] for r in rows]
        passed += g[0] < g[1] < g[2]
        lines.append("/".join(f"{x:.2f}" for x in g))
    verdict(6, passed >= 9, f"{passed}/10 seeds strictly ordered; GSR per seed {'; '.join(lines)}")


def test_criterion_7_loss_values(verdict):
    total = total_loss((1, 1, 1, 1))
    gt = np.zeros((4, 4, 1))
    gt[2, 1, 0] = 1.0
    pred = gt.copy()
    pred[2, 1, 0] = 0.5
    single = focal_loss(pred, gt)
    rng = np.random.default_rng(7)
    worst, grad_ok = 0.0, True
    for _ in range(5):
        g = rng.uniform(0, 0.9, (5, 5, 3))
        g[rng.integers(5), rng.integers(5), rng.integers(3)] = 1.0
        p = rng.uniform(0.05, 0.95, g.shape)
        ana = focal_loss_grad(p, g)
        h = 1e-6
        for idx in np.ndindex(p.shape):
            a, b = p.copy(), p.copy()
            a[idx] += h
            b[idx] -= h
            fd = (focal_loss(a, g) - focal_loss(b, g)) / (2 * h)
            # rtol 1e-5 plus an absolute floor for the finite-difference rounding noise
            grad_ok &= abs(ana[idx] - fd) <= 1e-5 * abs(fd) + 1e-9
            if abs(fd) > 1e-3:
                worst = max(worst, abs(ana[idx] - fd) / abs(fd))
    ok = total == 22 and abs(single - 0.1733) <= 1e-4 and grad_ok
    verdict(7, ok, f"total_loss = {total}, single-cell focal = {single:.6f}, "
                   f"gradient within rtol 1e-5 (atol 1e-9) of finite differences: {grad_ok}, "
                   f"max rel. error where |grad| > 1e-3 {worst:.1e}")


@pytest.mark.slow
def test_criterion_8_center_depth_floor(verdict):
    config = SceneConfig(kinds=(Kind.CUBOID,))
    depth_err, pred_err, half = [], [], []
    for i in range(30):
        scene = sample_scene(config, seed=scene_seed(8, i))
        box = scene.objects[0]
        grasps = annotate_set(scene, TEST_DENSITY)
        top = grasps.subset(grasps.R[:, 2, 2] > 0.999)
        for v in range(len(scene.cameras)):
            vd = view_data(scene, v, top, with_depth=True)
            prov = np.arange(len(vd.enc))
            for source, sink in ((ScaleSource.CENTER_DEPTH, depth_err), (ScaleSource.PREDICTED, pred_err)):
                rec = recover(vd.enc, vd.K, source, vd.depth, prov)
                sink.extend(np.linalg.norm(rec.grasps.t - vd.gt.t[rec.provenance], axis=1))
                if source is ScaleSource.CENTER_DEPTH:
                    # closing line of each grasp, in the box frame
                    closing = (vd.extrinsic.inverse().R @ vd.gt.R[rec.provenance][:, :, 0].T).T @ box.pose.R
                    ext = np.array([box["a"], box["b"], box["c"]])
                    half.extend(ext[np.argmax(np.abs(closing), axis=1)] / 2)
    floor, mean_half = float(np.mean(depth_err)), float(np.mean(half))
    worst_pred = float(np.max(pred_err))
    ok = floor >= 0.4 * mean_half and worst_pred < 1e-3
    verdict(8, ok, f"{len(depth_err)} top-down cuboid grasps: CenterDepth mean translation error "
                   f"{floor * 1000:.1f} mm = {floor / mean_half:.2f} x mean half-extent {mean_half * 1000:.1f} mm; "
                   f"PredictedScale max error {worst_pred:.1e} m")


def _digest(root: Path) -> dict:
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.mark.slow
def test_criterion_9_thread_independent_outputs(tmp_path, verdict):
    noise = '{"sigma_raw": 2.0, "shrink": 0.9, "sigma_scale_rel": 0.05, "false_positive_rate": 0.1}'
    for threads in ("1", "3"):
        root = tmp_path / f"t{threads}"
        assert main(["gen", "--mode", "multi", "--scenes", "4", "--views", "3", "--seed", "9",
                     "--threads", threads, "--out", str(root / "data")]) == 0
        assert main(["pipeline", "--dataset", str(root / "data"), "--noise", noise, "--seed", "9",
                     "--threads", threads, "--out", str(root / "report.json"), "--csv", str(root / "report.csv")]) == 0
    a, b = _digest(tmp_path / "t1"), _digest(tmp_path / "t3")
    verdict(9, a == b, f"{len(a)} artifacts, SHA-256 identical between --threads 1 and 3: {a == b}")
