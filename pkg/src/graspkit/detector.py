"""Noise-model stand-in for a trained detector, and scale resolution strategies.

Predictions are made by perturbing ground-truth encodings. Every random draw
has a fixed layout (one block of normals per gt row), so two configurations
that differ only in their noise magnitudes see the same underlying numbers.
"""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .codec import DEFAULT_TEMPLATE, BinSpec, EncodingArrays, GraspEncoding, encode_arrays
from .errors import NoDepthReturn
from .geometry import CameraIntrinsics, random_rotation_matrices

CONFIDENCE_TAU = 3.0  # px
FP_SCALE_RANGE = (0.3, 2.0)
FP_WIDTH_RANGE = (0.02, 0.10)
MIN_WIDTH = 1e-4
MIN_SCALE = 1e-3


@dataclass(frozen=True)
class NoiseConfig:
    sigma_offset: float | None = None  # px per metre, noise on normalized offsets
    sigma_raw: float | None = 0.0  # px, noise on raw offsets
    shrink: float = 1.0
    sigma_center: float = 0.0  # px
    sigma_scale_rel: float = 0.0
    sigma_width: float = 0.0  # m
    drop_rate: float = 0.0
    false_positive_rate: float = 0.0
    quantize: int = 0  # snap centres to this grid ratio (0 = off)
    seed: int = 0

    def __post_init__(self):
        if (self.sigma_offset is None) == (self.sigma_raw is None):
            raise ValueError("exactly one of sigma_offset / sigma_raw must be set")
        for name in ("sigma_offset", "sigma_raw", "sigma_center", "sigma_scale_rel", "sigma_width"):
            v = getattr(self, name)
            if v is not None and not v >= 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0 < self.shrink <= 1:
            raise ValueError("shrink must lie in (0, 1]")
        for name in ("drop_rate", "false_positive_rate"):
            if not 0 <= getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in [0, 1)")
        if self.quantize < 0:
            raise ValueError("quantize must be >= 0")

    @property
    def normalized(self) -> bool:
        return self.sigma_offset is not None

    def replace(self, **kw) -> "NoiseConfig":
        d = asdict(self)
        if "sigma_offset" in kw and kw["sigma_offset"] is not None:
            d["sigma_raw"] = None
        if "sigma_raw" in kw and kw["sigma_raw"] is not None:
            d["sigma_offset"] = None
        d.update(kw)
        return NoiseConfig(**d)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "NoiseConfig":
        d = dict(d)
        if "sigma_offset" in d and d["sigma_offset"] is not None and "sigma_raw" not in d:
            d["sigma_raw"] = None
        return cls(**d)


class ScaleSource(str, enum.Enum):
    PREDICTED = "PredictedScale"
    KEYPOINT_PROXIMITY = "KeypointProximity"
    CENTER_DEPTH = "CenterDepth"


@dataclass
class Predictions:
    enc: EncodingArrays
    provenance: np.ndarray  # gt row index, -1 for false positives
    noise_rms: np.ndarray = field(default=None)  # realized raw-pixel offset perturbation

    def __len__(self):
        return len(self.enc)

    def to_json(self) -> list:
        out = []
        for i in range(len(self.enc)):
            d = self.enc[i].to_json()
            d["provenance"] = int(self.provenance[i]) if self.provenance[i] >= 0 else "fp"
            out.append(d)
        return out

    @classmethod
    def from_json(cls, items: list) -> "Predictions":
        encs = [GraspEncoding.from_json(d) for d in items]
        prov = np.array([-1 if d.get("provenance") == "fp" else int(d["provenance"]) for d in items], dtype=int)
        return cls(EncodingArrays.from_list(encs), prov)


def confidence_from_error(e) -> np.ndarray:
    return np.exp(-np.square(e) / (2 * CONFIDENCE_TAU**2))


def _false_positives(n: int, K: CameraIntrinsics, bins: BinSpec, rng: np.random.Generator) -> EncodingArrays:
    """Random grasps that project fully into the image, at scales in FP_SCALE_RANGE."""
    if n == 0:
        return EncodingArrays.empty()
    parts, have = [], 0
    for _ in range(100):
        m = 4 * (n - have)
        uv = np.stack([rng.uniform(0, K.width - 1, m), rng.uniform(0, K.height - 1, m)], -1)
        rays = np.stack([(uv[:, 0] - K.cx) / K.fx, (uv[:, 1] - K.cy) / K.fy, np.ones(m)], -1)
        rays /= np.linalg.norm(rays, axis=1, keepdims=True)
        t = rays * rng.uniform(*FP_SCALE_RANGE, m)[:, None]
        R = random_rotation_matrices(rng, m)
        w = rng.uniform(*FP_WIDTH_RANGE, m)
        enc, valid, _ = encode_arrays(R, t, w, K, bins, DEFAULT_TEMPLATE)
        take = np.flatnonzero(valid)[: n - have]
        parts.append(enc.subset(take))
        have += len(take)
        if have == n:
            break
    out = _concat(parts)
    out.confidences = rng.uniform(0.0, 1.0, len(out))
    return out


def _concat(parts) -> EncodingArrays:
    parts = [p for p in parts if len(p)]
    if not parts:
        return EncodingArrays.empty()
    return EncodingArrays(*(np.concatenate([getattr(p, f) for p in parts]) for f in
                            ("centers", "bins", "offsets", "scales", "widths", "confidences")))


def simulate_detections(gt: EncodingArrays, noise: NoiseConfig, K: CameraIntrinsics | None = None,
                        bins: BinSpec = BinSpec(), rng: np.random.Generator | None = None) -> Predictions:
    """Perturb ground-truth encodings into predictions.

    Order: offsets shrink toward the centre, offset noise (raw px or normalized),
    multiplicative scale noise, centre jitter (moves the whole keypoint set),
    optional grid snapping with the residual folded into the offsets, width
    noise, drops, then false positives.
    """
    rng = rng if rng is not None else np.random.default_rng(noise.seed)
    if not isinstance(gt, EncodingArrays):
        gt = EncodingArrays.from_list(gt)
    n = len(gt)
    z_off = rng.standard_normal((n, 4, 2))
    z_scale = rng.standard_normal(n)
    z_center = rng.standard_normal((n, 2))
    z_width = rng.standard_normal(n)
    u_drop = rng.uniform(size=n)

    S = gt.scales
    raw = noise.shrink * gt.offsets * S[:, None, None]
    S_pred = np.maximum(S * (1 + noise.sigma_scale_rel * z_scale), MIN_SCALE)
    if noise.normalized:
        eps = noise.sigma_offset * z_off
        offsets = raw / S[:, None, None] + eps
        pert = eps * S_pred[:, None, None]
    else:
        pert = noise.sigma_raw * z_off
        offsets = (raw + pert) / S_pred[:, None, None]
    e = np.sqrt(np.mean(np.sum(pert**2, axis=-1), axis=-1)) if n else np.zeros(0)

    centers = gt.centers + noise.sigma_center * z_center
    if noise.quantize:
        q = noise.quantize
        snapped = np.floor(centers / q) * q + (q - 1) / 2.0
        offsets = offsets + ((centers - snapped) / S_pred[:, None])[:, None, :]
        centers = snapped
    widths = np.maximum(gt.widths + noise.sigma_width * z_width, MIN_WIDTH)

    keep = np.flatnonzero(u_drop >= noise.drop_rate)
    pred = EncodingArrays(centers[keep], gt.bins[keep].copy(), offsets[keep], S_pred[keep], widths[keep],
                          confidence_from_error(e[keep]))
    prov = keep.astype(int)
    rms = e[keep]

    n_fp = int(round(noise.false_positive_rate * n))
    if n_fp:
        if K is None:
            raise ValueError("false positives need camera intrinsics")
        fp = _false_positives(n_fp, K, bins, rng)
        pred = _concat([pred, fp])
        prov = np.concatenate([prov, np.full(len(fp), -1)])
        rms = np.concatenate([rms, np.full(len(fp), np.nan)])
    return Predictions(pred, prov, rms)


def center_range(depth_map, u: float, v: float, K: CameraIntrinsics) -> float:
    """Distance from the optical centre to the surface seen at pixel (u, v)."""
    z = depth_map.bilinear(u, v)
    if not z > 0:
        raise NoDepthReturn(f"no depth return at pixel ({u:.1f}, {v:.1f})")
    return z * math.sqrt(((u - K.cx) / K.fx) ** 2 + ((v - K.cy) / K.fy) ** 2 + 1.0)


def resolve_scale(enc: GraspEncoding, source: ScaleSource, pnp=None, depth=None,
                  K: CameraIntrinsics | None = None) -> float:
    """Metric distance of the grasp from the camera under the chosen scale source."""
    source = ScaleSource(source)
    if source is ScaleSource.PREDICTED:
        return float(enc.scale)
    if source is ScaleSource.KEYPOINT_PROXIMITY:
        if pnp is None:
            raise ValueError("KeypointProximity needs a PnP result")
        return float(np.linalg.norm(pnp.best.t))
    if depth is None or K is None:
        raise ValueError("CenterDepth needs a depth map and intrinsics")
    return center_range(depth, enc.center.u, enc.center.v, K)


def resolve_scale_arrays(enc: EncodingArrays, source: ScaleSource, pnp_t=None, depth=None,
                         K: CameraIntrinsics | None = None) -> np.ndarray:
    """Batched resolve_scale; CenterDepth rows without a return become NaN."""
    source = ScaleSource(source)
    if source is ScaleSource.PREDICTED:
        return np.asarray(enc.scales, dtype=float).copy()
    if source is ScaleSource.KEYPOINT_PROXIMITY:
        return np.linalg.norm(np.asarray(pnp_t, dtype=float), axis=-1)
    out = np.full(len(enc), np.nan)
    for i, (u, v) in enumerate(enc.centers):
        try:
            out[i] = center_range(depth, u, v, K)
        except NoDepthReturn:
            pass
    return out
