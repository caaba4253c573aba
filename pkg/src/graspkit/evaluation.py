"""Pose-set metrics, ranking and the grasp feasibility check."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import NoFeasibleGrasp
from .geometry import GraspSet, pairwise_rotation_errors
from .scenes.collision import PointCloudIndex, enclosed_counts, point_collisions, table_collision

DEFAULT_THRESHOLDS = ((0.01, 20.0), (0.02, 30.0), (0.03, 45.0))
FIDELITY_LAMBDA = 0.05  # per px
MIN_ENCLOSED = 10


@dataclass(frozen=True)
class EvalThresholds:
    levels: tuple = DEFAULT_THRESHOLDS  # (translation m, rotation deg)

    def __post_init__(self):
        lv = tuple((float(t), float(r)) for t, r in self.levels)
        if not lv:
            raise ValueError("need at least one threshold")
        for (t0, r0), (t1, r1) in zip(lv, lv[1:]):
            if not (t1 > t0 and r1 > r0):
                raise ValueError("thresholds must increase strictly in both components")
        object.__setattr__(self, "levels", lv)

    def __iter__(self):
        return iter(self.levels)

    def __len__(self):
        return len(self.levels)


_COUNT_KEYS = ("pred_matched", "gt_matched", "obj_success", "matched_pairs")


@dataclass
class MetricsReport:
    """Counts per threshold; percentages are derived so reports merge by summation."""

    thresholds: EvalThresholds = field(default_factory=EvalThresholds)
    n_pred: int = 0
    n_gt: int = 0
    n_obj: int = 0
    counts: dict = field(default_factory=dict)  # key -> list per threshold
    err_sums: dict = field(default_factory=dict)  # "trans"/"rot" -> list per threshold

    def __post_init__(self):
        k = len(self.thresholds)
        for key in _COUNT_KEYS:
            self.counts.setdefault(key, [0] * k)
        for key in ("trans", "rot"):
            self.err_sums.setdefault(key, [0.0] * k)

    @staticmethod
    def _pct(a, b) -> float:
        return 100.0 * a / b if b else 0.0

    def gsr(self, i: int) -> float:
        return self._pct(self.counts["pred_matched"][i], self.n_pred)

    def gcr(self, i: int) -> float:
        return self._pct(self.counts["gt_matched"][i], self.n_gt)

    def osr(self, i: int) -> float:
        return self._pct(self.counts["obj_success"][i], self.n_obj)

    @property
    def empty_pred(self) -> bool:
        return self.n_pred == 0

    @property
    def empty_gt(self) -> bool:
        return self.n_gt == 0

    def mean(self) -> dict:
        k = len(self.thresholds)
        return {m: sum(getattr(self, m)(i) for i in range(k)) / k for m in ("gsr", "gcr", "osr")}

    def rows(self) -> list[dict]:
        out = []
        for i, (t, r) in enumerate(self.thresholds):
            n = self.counts["matched_pairs"][i]
            out.append({
                "trans_thresh_m": t, "rot_thresh_deg": r,
                "GSR": self.gsr(i), "GCR": self.gcr(i), "OSR": self.osr(i),
                "n_pred": self.n_pred, "n_gt": self.n_gt, "n_obj": self.n_obj,
                "mean_trans_err_m": self.err_sums["trans"][i] / n if n else math.nan,
                "mean_rot_err_deg": self.err_sums["rot"][i] / n if n else math.nan,
            })
        return out

    def merge(self, other: "MetricsReport") -> "MetricsReport":
        if other.thresholds != self.thresholds:
            raise ValueError("cannot merge reports with different thresholds")
        k = len(self.thresholds)
        return MetricsReport(
            self.thresholds, self.n_pred + other.n_pred, self.n_gt + other.n_gt, self.n_obj + other.n_obj,
            {key: [self.counts[key][i] + other.counts[key][i] for i in range(k)] for key in _COUNT_KEYS},
            {key: [self.err_sums[key][i] + other.err_sums[key][i] for i in range(k)] for key in ("trans", "rot")},
        )

    @classmethod
    def merge_all(cls, reports, thresholds: EvalThresholds | None = None) -> "MetricsReport":
        out = cls(thresholds or EvalThresholds())
        for r in reports:
            out = out.merge(r)
        return out

    def to_json(self) -> dict:
        return {
            "thresholds": [list(x) for x in self.thresholds],
            "n_pred": self.n_pred, "n_gt": self.n_gt, "n_obj": self.n_obj,
            "counts": self.counts, "err_sums": self.err_sums,
            "empty_pred": self.empty_pred, "empty_gt": self.empty_gt,
            "metrics": self.rows(), "mean": self.mean(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "MetricsReport":
        return cls(EvalThresholds(tuple(tuple(x) for x in d["thresholds"])), int(d["n_pred"]), int(d["n_gt"]),
                   int(d["n_obj"]), {k: list(v) for k, v in d["counts"].items()},
                   {k: [float(x) for x in v] for k, v in d["err_sums"].items()})

    def to_csv(self, split: str = "test") -> str:
        buf = io.StringIO()
        rows = self.rows()
        w = csv.DictWriter(buf, fieldnames=["split", *rows[0].keys()], lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({"split": split, **row})
        return buf.getvalue()


def pair_errors(pred: GraspSet, gt: GraspSet, symmetric: bool = False):
    """(translation m, rotation deg) matrices of shape (n_pred, n_gt)."""
    dt = np.linalg.norm(pred.t[:, None, :] - gt.t[None, :, :], axis=-1)
    dr = np.degrees(pairwise_rotation_errors(pred.R, gt.R, symmetric))
    return dt, dr


def evaluate(pred: GraspSet, gt: GraspSet, thresholds: EvalThresholds = EvalThresholds(),
             symmetric: bool = False, one_to_one: bool = False) -> MetricsReport:
    """Existence-based matching: a pair matches when both errors are within the threshold.

    With one_to_one, a maximum bipartite matching is counted instead (diagnostics only).
    """
    objs = np.unique(gt.object_ids) if len(gt) else np.zeros(0, int)
    rep = MetricsReport(thresholds, len(pred), len(gt), len(objs))
    if len(pred) == 0 or len(gt) == 0:
        return rep
    dt, dr = pair_errors(pred, gt, symmetric)
    for i, (tt, rr) in enumerate(thresholds):
        match = (dt <= tt) & (dr <= rr)
        if one_to_one:
            rows, cols = linear_sum_assignment(~match)
            ok = match[rows, cols]
            p_hit = np.zeros(len(pred), bool)
            g_hit = np.zeros(len(gt), bool)
            p_hit[rows[ok]] = True
            g_hit[cols[ok]] = True
            pairs = list(zip(rows[ok], cols[ok]))
        else:
            p_hit = match.any(axis=1)
            g_hit = match.any(axis=0)
            # error statistics: each matched prediction against its nearest matching gt
            near = np.argmin(np.where(match, dt, np.inf), axis=1)
            pairs = [(p, near[p]) for p in np.flatnonzero(p_hit)]
        rep.counts["pred_matched"][i] = int(p_hit.sum())
        rep.counts["gt_matched"][i] = int(g_hit.sum())
        rep.counts["obj_success"][i] = int(len(np.intersect1d(objs, gt.object_ids[g_hit])))
        rep.counts["matched_pairs"][i] = len(pairs)
        rep.err_sums["trans"][i] = float(sum(dt[p, g] for p, g in pairs))
        rep.err_sums["rot"][i] = float(sum(dr[p, g] for p, g in pairs))
    return rep


def combine_scores(confidences, reprojection_errors, combiner: str = "literal", lam: float = FIDELITY_LAMBDA):
    """Selection score: 'literal' = Y + RE, 'fidelity' = Y - lam * RE."""
    y = np.asarray(confidences, dtype=float)
    re = np.asarray(reprojection_errors, dtype=float)
    if combiner == "literal":
        return y + re
    if combiner == "fidelity":
        return y - lam * re
    raise ValueError(f"unknown combiner {combiner!r}")


def score_and_rank(confidences, reprojection_errors, combiner: str = "literal", lam: float = FIDELITY_LAMBDA):
    """Indices sorted by descending score (ties keep input order) and the scores."""
    s = combine_scores(confidences, reprojection_errors, combiner, lam)
    return np.argsort(-s, kind="stable"), s


def feasibility_mask(grasps: GraspSet, cloud, min_points: int = MIN_ENCLOSED, table: bool = True):
    """Per grasp: no point in fingers/palm, no table contact, >= min_points in the closing region."""
    cloud = cloud if isinstance(cloud, PointCloudIndex) else PointCloudIndex(cloud)
    clean = ~point_collisions(grasps.R, grasps.t, grasps.widths, cloud)
    if table:
        clean &= ~table_collision(grasps.R, grasps.t, grasps.widths)
    return clean & (enclosed_counts(grasps.R, grasps.t, grasps.widths, cloud) >= min_points)


def feasibility_filter(ranked: GraspSet, cloud, min_points: int = MIN_ENCLOSED, table: bool = True) -> int:
    """Index of the first feasible grasp in ranking order."""
    cloud = cloud if isinstance(cloud, PointCloudIndex) else PointCloudIndex(cloud)
    if len(cloud.points) == 0:
        raise ValueError("point cloud is empty")
    for i in range(len(ranked)):
        if feasibility_mask(ranked.subset([i]), cloud, min_points, table)[0]:
            return i
    raise NoFeasibleGrasp("no ranked grasp is collision free and encloses enough points")


def report_json(report: MetricsReport) -> str:
    return json.dumps(report.to_json(), indent=2, sort_keys=True)
