"""graspkit command line: dataset generation, studies, evaluation and grasp selection."""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import io as gio
from .detector import NoiseConfig, Predictions, ScaleSource, simulate_detections
from .errors import GraspkitError, MalformedInput, NoFeasibleGrasp
from .evaluation import MetricsReport, feasibility_filter, score_and_rank
from .pipeline import ViewData, ablation_scene, ablation_table, evaluate_scene, recover, scene_rng, view_data
from .scenes import TRAIN_DENSITY, SceneConfig, annotate_set, render_depth, sample_scene, scene_seed
from .studies import fig2_sweep, parse_range

EXIT_OK, EXIT_IO, EXIT_MALFORMED, EXIT_NO_GRASP = 0, 2, 3, 4
SEED_ENV = "GRASPKIT_SEED"


def _mapper(threads: int):
    """map() over scene indices; results always come back in index order."""
    if threads and threads > 1:
        pool = ThreadPoolExecutor(max_workers=threads)
        return pool.map, pool
    return map, None


def _run_parallel(fn, items, threads):
    mapper, pool = _mapper(threads)
    try:
        return list(mapper(fn, items))
    finally:
        if pool is not None:
            pool.shutdown()


def _to_csv(rows: list[dict], columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in columns])
    return buf.getvalue()


def load_noise(spec: str | None) -> NoiseConfig:
    """Noise config from a JSON file path or an inline JSON object; zero noise if absent."""
    if not spec:
        return NoiseConfig()
    text = spec if spec.lstrip().startswith("{") else Path(spec).read_text()
    try:
        return NoiseConfig.from_json(json.loads(text))
    except (json.JSONDecodeError, TypeError, ValueError) as e:
        raise MalformedInput(f"bad noise config: {e}") from e


def resolve_seed(args) -> int:
    if args.seed is not None:
        return int(args.seed)
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError as e:
            raise MalformedInput(f"{SEED_ENV} is not an integer") from e
    return 0


# --- subcommands -----------------------------------------------------------


def cmd_gen(args) -> int:
    root = Path(args.out)
    seed = resolve_seed(args)
    multi = args.mode == "multi"
    config = SceneConfig(views=args.views)
    root.mkdir(parents=True, exist_ok=True)

    def one(i):
        scene = sample_scene(config, scene_seed(seed, i), multi)
        gio.write_scene(root, i, scene, annotate_set(scene, args.density))
        for v in range(args.views):
            gio.write_view(root, i, v, scene, render_depth(scene, v))
        return i

    _run_parallel(one, range(args.scenes), args.threads)
    meta = {"mode": args.mode, "seed": seed, "scenes": args.scenes, "views": args.views, "density": args.density}
    gio.write_manifest(root, meta, args.scenes, args.views)
    print(f"wrote {args.scenes * args.views} (scene, view) records to {root}")
    return EXIT_OK


FIG2_COLUMNS = ("distance", "sigma", "mean_rot_err_deg", "mean_trans_err_m")


def cmd_fig2(args) -> int:
    rows = fig2_sweep(parse_range(args.distances), parse_range(args.sigmas), args.trials, resolve_seed(args))
    gio.write_text(Path(args.out), _to_csv(rows, FIG2_COLUMNS))
    print(f"wrote {len(rows)} rows to {args.out}")
    return EXIT_OK


def _dataset(args):
    manifest = gio.read_manifest(args.dataset)
    views = {}
    for r in manifest["records"]:
        views.setdefault(int(r["scene"]), []).append(int(r["view"]))
    return manifest, sorted(views), views


def cmd_pipeline(args) -> int:
    noise = load_noise(args.noise)
    source = ScaleSource(args.scale_source)
    seed = resolve_seed(args) if args.seed is not None or os.environ.get(SEED_ENV) else noise.seed
    _, indices, views = _dataset(args)

    def one(i):
        scene, grasps = gio.read_scene(args.dataset, i)
        return evaluate_scene(scene, i, grasps, noise, source, seed, views=views[i],
                              depth_of=lambda v: gio.read_view(args.dataset, i, v))

    report = MetricsReport.merge_all(_run_parallel(one, indices, args.threads))
    out = report.to_json()
    out["scale_source"] = source.value
    out["noise"] = noise.to_json()
    out["seed"] = seed
    gio.write_text(Path(args.out), gio.dumps(out))
    if args.csv:
        gio.write_text(Path(args.csv), report.to_csv(args.split))
    m = report.mean()
    print(f"GSR {m['gsr']:.2f}  GCR {m['gcr']:.2f}  OSR {m['osr']:.2f}  (threshold mean)")
    return EXIT_OK


ABLATE_COLUMNS = ("method", "scale_source", "offsets", "GSR", "GCR", "OSR")


def cmd_ablate(args) -> int:
    noise = load_noise(args.noise)
    seed = resolve_seed(args) if args.seed is not None or os.environ.get(SEED_ENV) else noise.seed
    _, indices, _ = _dataset(args)

    def one(i):
        scene, grasps = gio.read_scene(args.dataset, i)
        return ablation_scene(scene, i, grasps, noise, seed)

    rows = ablation_table(_run_parallel(one, indices, args.threads))
    gio.write_text(Path(args.out), _to_csv(rows, ABLATE_COLUMNS))
    for r in rows:
        print(f"{r['method']:<16} GSR {r['GSR']:6.2f}  GCR {r['GCR']:6.2f}  OSR {r['OSR']:6.2f}")
    return EXIT_OK


def cmd_select(args) -> int:
    scene, grasps = gio.read_scene(args.dataset, args.scene)
    depth = gio.read_view(args.dataset, args.scene, args.view)
    vd: ViewData = view_data(scene, args.view, grasps, depth=depth)
    if args.predictions:
        try:
            preds = Predictions.from_json(json.loads(Path(args.predictions).read_text()))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise MalformedInput(f"bad predictions file: {e}") from e
    else:
        preds = simulate_detections(vd.enc, load_noise(args.noise), vd.K,
                                    rng=scene_rng(resolve_seed(args), args.scene, args.view))
    rec = recover(preds.enc, vd.K, ScaleSource(args.scale_source), depth, preds.provenance, vd.gt.object_ids)
    order, scores = score_and_rank(rec.confidences, rec.reprojection_errors, args.combiner)
    to_world = vd.extrinsic.inverse()
    ranked = rec.grasps.subset(order).transformed(to_world)
    pts, _ = gio.read_cloud(args.dataset, args.scene, args.view)
    if len(pts) == 0:
        raise NoFeasibleGrasp("view has no object points")
    k = feasibility_filter(ranked, to_world.apply(pts), args.min_points)
    i = int(order[k])
    chosen = rec.grasps.subset([i])
    out = {
        "rank": k, "prediction": int(rec.provenance[i]), "score": float(scores[i]),
        "confidence": float(rec.confidences[i]), "reprojection_error": float(rec.reprojection_errors[i]),
        "combiner": args.combiner,
        "grasp_camera": chosen.to_grasps()[0].to_json(),
        "grasp_world": ranked.subset([k]).to_grasps()[0].to_json(),
    }
    gio.write_text(Path(args.out), gio.dumps(out))
    print(f"selected prediction {out['prediction']} at rank {k}")
    return EXIT_OK


# --- parsing ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="graspkit", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, threads=True):
        sp.add_argument("--seed", type=int, default=None, help=f"global seed (fallback: ${SEED_ENV}, then 0)")
        sp.add_argument("--config", default=None, help="JSON file whose keys override the flags")
        if threads:
            sp.add_argument("--threads", type=int, default=1)

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    g.add_argument("--mode", choices=("single", "multi"), default="single")
    g.add_argument("--scenes", type=int, default=10)
    g.add_argument("--views", type=int, default=5)
    g.add_argument("--density", type=int, default=TRAIN_DENSITY, help="grasp family sampling density")
    g.add_argument("--out", required=True)
    common(g)
    g.set_defaults(func=cmd_gen)

    f = sub.add_parser("fig2", help="pose error versus camera distance")
    f.add_argument("--distances", default="0.3:2.0:8")
    f.add_argument("--sigmas", default="0.5,1,2,4")
    f.add_argument("--trials", type=int, default=500)
    f.add_argument("--out", required=True)
    common(f, threads=False)
    f.set_defaults(func=cmd_fig2)

    sources = [s.value for s in ScaleSource]
    pl = sub.add_parser("pipeline", help="simulate detections on a dataset and evaluate")
    pl.add_argument("--dataset", required=True)
    pl.add_argument("--noise", default=None, help="noise config: JSON file or inline JSON")
    pl.add_argument("--scale-source", choices=sources, default=ScaleSource.PREDICTED.value)
    pl.add_argument("--out", required=True)
    pl.add_argument("--csv", default=None, help="also write per-threshold CSV rows here")
    pl.add_argument("--split", default="test")
    common(pl)
    pl.set_defaults(func=cmd_pipeline)

    a = sub.add_parser("ablate", help="three-row scale/offset ablation")
    a.add_argument("--dataset", required=True)
    a.add_argument("--noise", default=None)
    a.add_argument("--out", required=True)
    common(a)
    a.set_defaults(func=cmd_ablate)

    s = sub.add_parser("select", help="rank detections of one view and pick the first feasible grasp")
    s.add_argument("--dataset", required=True)
    s.add_argument("--scene", type=int, default=0)
    s.add_argument("--view", type=int, default=0)
    s.add_argument("--predictions", default=None, help="predictions JSON; simulated from noise if absent")
    s.add_argument("--noise", default=None)
    s.add_argument("--scale-source", choices=sources, default=ScaleSource.PREDICTED.value)
    s.add_argument("--combiner", choices=("literal", "fidelity"), default="literal")
    s.add_argument("--min-points", type=int, default=10)
    s.add_argument("--out", required=True)
    common(s, threads=False)
    s.set_defaults(func=cmd_select)
    return p


def apply_config(args, parser: argparse.ArgumentParser):
    if not getattr(args, "config", None):
        return args
    try:
        cfg = json.loads(Path(args.config).read_text())
    except json.JSONDecodeError as e:
        raise MalformedInput(f"bad config file: {e}") from e
    if not isinstance(cfg, dict):
        raise MalformedInput("config must be a JSON object")
    for key, value in cfg.items():
        name = key.lstrip("-").replace("-", "_")
        if name in ("command", "func", "config") or not hasattr(args, name):
            raise MalformedInput(f"unknown config key {key!r}")
        if isinstance(value, (dict, list)) and name == "noise":
            value = json.dumps(value)
        setattr(args, name, value)
    return args


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        apply_config(args, parser)
        return args.func(args)
    except NoFeasibleGrasp as e:
        print(f"NoFeasibleGrasp: {e}", file=sys.stderr)
        return EXIT_NO_GRASP
    except (MalformedInput, json.JSONDecodeError, KeyError) as e:
        print(f"malformed input: {e}", file=sys.stderr)
        return EXIT_MALFORMED
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except (GraspkitError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MALFORMED


if __name__ == "__main__":
    sys.exit(main())
