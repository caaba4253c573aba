"""Ground-truth label tensors on the downsampled grid, training losses and peak decoding."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import maximum_filter

from .codec import EncodingArrays, GraspEncoding
from .errors import EmptyMask

PRED_EPS = 1e-7
FOCAL_ALPHA = 2.0
FOCAL_BETA = 4.0
MIN_SIGMA_CELLS = 2.0
SIGMA_PER_GAP = 0.25  # splat std as a fraction of the projected tip gap
FIELDS = ("Y", "O", "Wd", "S", "mask")


@dataclass(frozen=True)
class LabelGridSpec:
    width: int = 512
    height: int = 512
    R: int = 4
    M: int = 9

    def __post_init__(self):
        if self.R < 1 or self.M < 1:
            raise ValueError("downsample ratio and bin count must be positive")
        if self.width % self.R or self.height % self.R:
            raise ValueError("image size must be divisible by the downsample ratio")

    @property
    def grid_width(self) -> int:
        return self.width // self.R

    @property
    def grid_height(self) -> int:
        return self.height // self.R

    @property
    def shape(self) -> tuple:
        return (self.grid_height, self.grid_width, self.M)

    def cell_of(self, uv) -> np.ndarray:
        """Grid cell (col, row) containing each pixel position."""
        return np.floor(np.asarray(uv, dtype=float) / self.R).astype(int)

    def cell_center(self, cells) -> np.ndarray:
        """Pixel position represented by a cell (centre of its R x R block)."""
        return np.asarray(cells, dtype=float) * self.R + (self.R - 1) / 2.0


@dataclass
class LabelTensors:
    Y: np.ndarray  # (H', W', M)
    O: np.ndarray  # (H', W', M, 8), px per metre, sub-cell residual folded in
    Wd: np.ndarray  # (H', W', M) metres
    S: np.ndarray  # (H', W', M) metres
    mask: np.ndarray  # (H', W', M) bool, annotated centres
    cells: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), int))  # (K, 2) col, row
    bins: np.ndarray = field(default_factory=lambda: np.zeros(0, int))
    residuals: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))  # centre minus cell centre, px
    source: np.ndarray = field(default_factory=lambda: np.zeros(0, int))  # index of the kept encoding
    suppressed: int = 0

    @classmethod
    def zeros(cls, spec: LabelGridSpec) -> "LabelTensors":
        shp = spec.shape
        return cls(np.zeros(shp), np.zeros(shp + (8,)), np.zeros(shp), np.zeros(shp), np.zeros(shp, bool))


def _as_arrays(encodings) -> EncodingArrays:
    return encodings if isinstance(encodings, EncodingArrays) else EncodingArrays.from_list(encodings)


def splat_sigma(offsets: np.ndarray, scale: float, R: int) -> float:
    """Splat std in cells: a quarter of the projected tip gap, at least two cells."""
    gap = np.linalg.norm((offsets[1] - offsets[0]) * scale) / R
    return max(MIN_SIGMA_CELLS, SIGMA_PER_GAP * gap)


def _splat(Y: np.ndarray, col: int, row: int, sigma: float):
    H, W = Y.shape
    rad = int(math.ceil(3 * sigma))
    r0, r1 = max(0, row - rad), min(H, row + rad + 1)
    c0, c1 = max(0, col - rad), min(W, col + rad + 1)
    rr, cc = np.mgrid[r0:r1, c0:c1]
    g = np.exp(-((rr - row) ** 2 + (cc - col) ** 2) / (2 * sigma * sigma))
    np.maximum(Y[r0:r1, c0:c1], g, out=Y[r0:r1, c0:c1])


def render_labels(encodings, spec: LabelGridSpec = LabelGridSpec()) -> LabelTensors:
    """Rasterize encodings into heatmap, offset, width and scale maps.

    Each encoding lands at cell floor(center / R) in channel `bin`. The stored
    offsets are measured from the cell centre, so decoding the cell recovers the
    exact keypoints. The first encoding to claim a (cell, bin) wins.
    """
    enc = _as_arrays(encodings)
    lab = LabelTensors.zeros(spec)
    if len(enc) == 0:
        return lab
    if not np.all(np.isfinite(enc.centers)):
        raise ValueError("encodings must have finite centres")
    cells = spec.cell_of(enc.centers)
    inside = (cells[:, 0] >= 0) & (cells[:, 0] < spec.grid_width) & (cells[:, 1] >= 0) & (cells[:, 1] < spec.grid_height)
    if not np.all(inside):
        raise ValueError("encoding centre outside the image")
    ref = spec.cell_center(cells)
    resid = enc.centers - ref
    kept = []
    for i in range(len(enc)):
        c, r = cells[i]
        m = int(enc.bins[i])
        if lab.mask[r, c, m]:
            lab.suppressed += 1
            continue
        lab.mask[r, c, m] = True
        lab.O[r, c, m] = (enc.offsets[i] + resid[i] / enc.scales[i]).ravel()
        lab.Wd[r, c, m] = enc.widths[i]
        lab.S[r, c, m] = enc.scales[i]
        _splat(lab.Y[:, :, m], c, r, splat_sigma(enc.offsets[i], enc.scales[i], spec.R))
        kept.append(i)
    kept = np.array(kept, dtype=int)
    lab.cells, lab.bins, lab.residuals, lab.source = cells[kept], enc.bins[kept].astype(int), resid[kept], kept
    lab.Y[lab.mask] = 1.0
    return lab


def _focal_terms(pred, gt, alpha, beta):
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape:
        raise ValueError("shape mismatch")
    pos = gt == 1.0
    n = max(1, int(np.count_nonzero(pos)))
    return pred, gt, pos, n


def focal_loss(pred, gt, alpha: float = FOCAL_ALPHA, beta: float = FOCAL_BETA) -> float:
    """Penalty-reduced focal loss; pred must lie strictly inside (0, 1)."""
    p, gt, pos, n = _focal_terms(pred, gt, alpha, beta)
    pos_term = (1 - p[pos]) ** alpha * np.log(p[pos])
    neg = ~pos
    neg_term = (1 - gt[neg]) ** beta * p[neg] ** alpha * np.log1p(-p[neg])
    return float(-(pos_term.sum() + neg_term.sum()) / n)


def focal_loss_grad(pred, gt, alpha: float = FOCAL_ALPHA, beta: float = FOCAL_BETA) -> np.ndarray:
    """Analytic derivative of focal_loss with respect to pred."""
    p, gt, pos, n = _focal_terms(pred, gt, alpha, beta)
    g = np.zeros_like(p)
    pp = p[pos]
    g[pos] = -alpha * (1 - pp) ** (alpha - 1) * np.log(pp) + (1 - pp) ** alpha / pp
    neg = ~pos
    pn = p[neg]
    g[neg] = (1 - gt[neg]) ** beta * (alpha * pn ** (alpha - 1) * np.log1p(-pn) - pn**alpha / (1 - pn))
    return -g / n


def clamp_pred(pred) -> np.ndarray:
    return np.clip(pred, PRED_EPS, 1 - PRED_EPS)


def masked_l1(pred, gt, mask) -> float:
    """Mean absolute difference over masked entries.

    The mask may cover the leading axes of the maps (e.g. a (H', W', M) centre
    mask against (H', W', M, 8) offsets); every trailing component counts.
    """
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if pred.shape != gt.shape or pred.shape[: mask.ndim] != mask.shape:
        raise ValueError("shape mismatch")
    if not mask.any():
        raise EmptyMask("no labelled entries")
    return float(np.mean(np.abs(pred[mask] - gt[mask])))


@dataclass(frozen=True)
class LossWeights:
    Y: float = 1.0
    O: float = 1.0
    W: float = 10.0
    S: float = 10.0

    def __post_init__(self):
        if min(self.Y, self.O, self.W, self.S) < 0:
            raise ValueError("loss weights must be non-negative")


def total_loss(parts, weights: LossWeights = LossWeights()) -> float:
    LY, LO, LW, LS = (float(p) for p in parts)
    if not all(math.isfinite(p) for p in (LY, LO, LW, LS)):
        raise ValueError("loss parts must be finite")
    return weights.Y * LY + weights.O * LO + weights.W * LW + weights.S * LS


def label_losses(pred: LabelTensors, gt: LabelTensors) -> tuple:
    """(L_Y, L_O, L_W, L_S) of a predicted tensor set against labels."""
    return (
        focal_loss(clamp_pred(pred.Y), gt.Y),
        masked_l1(pred.O, gt.O, gt.mask),
        masked_l1(pred.Wd, gt.Wd, gt.mask),
        masked_l1(pred.S, gt.S, gt.mask),
    )


def decode_peaks_arrays(Y, tensors: LabelTensors, threshold: float = 0.5, top_k: int = 100,
                        spec: LabelGridSpec | None = None) -> EncodingArrays:
    """Local maxima of each heatmap channel turned back into encodings.

    Peaks whose scale or width map entry is not positive are skipped.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    Y = np.asarray(Y, dtype=float)
    H, W, M = Y.shape
    if spec is None:
        spec = LabelGridSpec(W * 4, H * 4, 4, M)
    peak = Y == maximum_filter(Y, size=(3, 3, 1), mode="constant", cval=-np.inf)
    peak &= (Y >= threshold) & (Y > 0)
    r, c, m = np.nonzero(peak)
    vals = Y[r, c, m]
    S = tensors.S[r, c, m]
    Wd = tensors.Wd[r, c, m]
    ok = np.isfinite(S) & (S > 0) & np.isfinite(Wd) & (Wd > 0)
    r, c, m, vals, S, Wd = r[ok], c[ok], m[ok], vals[ok], S[ok], Wd[ok]
    order = np.argsort(-vals, kind="stable")[:top_k]
    r, c, m = r[order], c[order], m[order]
    centers = spec.cell_center(np.stack([c, r], -1)) if len(r) else np.zeros((0, 2))
    return EncodingArrays(centers, m.astype(int), tensors.O[r, c, m].reshape(-1, 4, 2), S[order], Wd[order],
                          np.minimum(vals[order], 1.0))


def decode_peaks(Y, tensors: LabelTensors, threshold: float = 0.5, top_k: int = 100,
                 spec: LabelGridSpec | None = None) -> list[GraspEncoding]:
    return decode_peaks_arrays(Y, tensors, threshold, top_k, spec).to_list()


def dump_labels(lab: LabelTensors, directory, stem: str = "labels") -> Path:
    """Write a JSON header plus one little-endian float32 blob per field."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    fields = {}
    for name in FIELDS:
        arr = getattr(lab, name).astype("<f4")
        fname = f"{stem}.{name}.f32"
        (directory / fname).write_bytes(arr.tobytes(order="C"))
        fields[name] = {"file": fname, "shape": list(arr.shape)}
    H, W, M = lab.Y.shape
    header = {"dims": {"height": H, "width": W, "bins": M}, "dtype": "f32le", "order": "row-major",
              "fields": fields, "suppressed": lab.suppressed}
    path = directory / f"{stem}.json"
    path.write_text(json.dumps(header, indent=2))
    return path


def load_labels(header_path) -> LabelTensors:
    header_path = Path(header_path)
    header = json.loads(header_path.read_text())
    arrs = {}
    for name, meta in header["fields"].items():
        raw = np.frombuffer((header_path.parent / meta["file"]).read_bytes(), dtype="<f4")
        arrs[name] = raw.reshape(meta["shape"]).astype(float)
    lab = LabelTensors(arrs["Y"], arrs["O"], arrs["Wd"], arrs["S"], arrs["mask"] > 0)
    lab.suppressed = int(header.get("suppressed", 0))
    return lab
