"""Pose recovery from four coplanar keypoints.

The solver follows the infinitesimal-plane construction: a plane-to-image
homography is fitted by normalized DLT, its Jacobian at the template centroid
yields two closed-form rotation candidates, each gets a least-squares
translation and a short Gauss-Newton reprojection polish, and the candidates
are ranked by RMS reprojection error.

Everything is vectorized over a leading batch axis; `solve_planar_pnp` is the
single-instance wrapper.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import DEFAULT_TEMPLATE, KeypointSet, KeypointTemplate
from .errors import BehindCameraSolution, DegenerateConfiguration, NonPositiveDepth
from .geometry import MIN_DEPTH, CameraIntrinsics, Pose, so3_exp

COND_LIMIT = 1e8
POLISH_ITERS = 50
POLISH_TOL = 1e-10
POLISH_RTOL = 1e-12  # relative cost decrease treated as converged
LM_INIT = 1e-3
LM_MAX = 1e6

OK, DEGENERATE, BEHIND = 0, 1, 2


@dataclass
class PnPResult:
    candidates: list  # Poses, ascending reprojection error
    reprojection_errors: list
    ambiguity_ratio: float

    @property
    def best(self) -> Pose:
        return self.candidates[0]


@dataclass
class PnPBatch:
    R: np.ndarray  # (N, 2, 3, 3) candidates sorted by error
    t: np.ndarray  # (N, 2, 3)
    errors: np.ndarray  # (N, 2) RMS px; inf for rejected candidates
    status: np.ndarray  # (N,) OK / DEGENERATE / BEHIND

    @property
    def ok(self) -> np.ndarray:
        return self.status == OK

    @property
    def best_R(self) -> np.ndarray:
        return self.R[:, 0]

    @property
    def best_t(self) -> np.ndarray:
        return self.t[:, 0]

    @property
    def best_error(self) -> np.ndarray:
        return self.errors[:, 0]

    def result(self, i: int) -> PnPResult:
        if self.status[i] == DEGENERATE:
            raise DegenerateConfiguration("homography system is ill-conditioned")
        if self.status[i] == BEHIND:
            raise BehindCameraSolution("no candidate places the template in front of the camera")
        keep = np.isfinite(self.errors[i])
        cands = [Pose.from_Rt(self.R[i, k], self.t[i, k]) for k in range(2) if keep[k]]
        errs = [float(e) for e in self.errors[i][keep]]
        ratio = errs[0] / errs[1] if len(errs) == 2 and errs[1] > 0 else 1.0
        return PnPResult(cands, errs, ratio)


def _plane_frame(template: KeypointTemplate):
    P = template.metric
    centroid = P.mean(axis=0)
    _, _, Vt = np.linalg.svd(P - centroid)
    e1, e2 = Vt[0], Vt[1]
    Q = np.stack([e1, e2, np.cross(e1, e2)], axis=1)
    XY = (P - centroid) @ Q[:, :2]
    return XY, Q, centroid


def _hartley(pts):
    """Similarity normalizing (..., n, 2) points to centroid 0, mean distance sqrt(2)."""
    c = pts.mean(axis=-2)
    d = np.linalg.norm(pts - c[..., None, :], axis=-1).mean(axis=-1)
    s = np.sqrt(2.0) / np.where(d > 0, d, 1.0)
    T = np.zeros(pts.shape[:-2] + (3, 3))
    T[..., 0, 0] = s
    T[..., 1, 1] = s
    T[..., 0, 2] = -s * c[..., 0]
    T[..., 1, 2] = -s * c[..., 1]
    T[..., 2, 2] = 1.0
    return T


def _apply_h(T, pts):
    ph = np.concatenate([pts, np.ones(pts.shape[:-1] + (1,))], axis=-1)
    out = ph @ np.swapaxes(T, -1, -2)
    return out[..., :2] / out[..., 2:3]


def _homographies(XY, xy):
    """DLT homographies plane XY (n,2) -> normalized image xy (N,n,2); returns H, condition numbers."""
    N, n = xy.shape[:2]
    Tp = _hartley(XY)
    Ti = _hartley(xy)
    Xn = np.broadcast_to(_apply_h(Tp, XY), (N, n, 2))
    xn = _apply_h(Ti, xy)
    A = np.zeros((N, 2 * n, 9))
    X, Y = Xn[..., 0], Xn[..., 1]
    x, y = xn[..., 0], xn[..., 1]
    A[:, 0::2, 0], A[:, 0::2, 1], A[:, 0::2, 2] = -X, -Y, -1
    A[:, 0::2, 6], A[:, 0::2, 7], A[:, 0::2, 8] = x * X, x * Y, x
    A[:, 1::2, 3], A[:, 1::2, 4], A[:, 1::2, 5] = -X, -Y, -1
    A[:, 1::2, 6], A[:, 1::2, 7], A[:, 1::2, 8] = y * X, y * Y, y
    _, s, Vt = np.linalg.svd(A)
    smallest = s[:, 7]
    cond = np.where(smallest > 0, s[:, 0] / np.where(smallest > 0, smallest, 1.0), np.inf)
    Hn = Vt[:, -1].reshape(N, 3, 3)
    H = np.linalg.inv(Ti) @ Hn @ Tp
    H = H / H[:, 2:3, 2:3]
    return H, cond


def _ippe_rotations(H):
    """Two plane->camera rotation candidates from homographies normalized at the plane origin."""
    p, q = H[:, 0, 2], H[:, 1, 2]
    J = np.empty((len(H), 2, 2))
    J[:, 0, 0] = H[:, 0, 0] - H[:, 2, 0] * p
    J[:, 0, 1] = H[:, 0, 1] - H[:, 2, 1] * p
    J[:, 1, 0] = H[:, 1, 0] - H[:, 2, 0] * q
    J[:, 1, 1] = H[:, 1, 1] - H[:, 2, 1] * q

    # Rv takes the optical axis onto the viewing ray of the plane origin
    r = np.hypot(p, q)
    axis = np.stack([-q, p, np.zeros_like(p)], -1) / np.where(r > 0, r, 1.0)[:, None]
    Rv = so3_exp(axis * np.arctan(r)[:, None])

    B = np.stack([Rv[:, 0, :2] - p[:, None] * Rv[:, 2, :2], Rv[:, 1, :2] - q[:, None] * Rv[:, 2, :2]], axis=1)
    A = np.linalg.solve(B, J)
    ata00 = A[:, 0, 0] ** 2 + A[:, 1, 0] ** 2
    ata11 = A[:, 0, 1] ** 2 + A[:, 1, 1] ** 2
    ata01 = A[:, 0, 0] * A[:, 0, 1] + A[:, 1, 0] * A[:, 1, 1]
    gamma = np.sqrt(0.5 * (ata00 + ata11 + np.sqrt((ata00 - ata11) ** 2 + 4 * ata01**2)))
    Rt = A / gamma[:, None, None]
    b0 = np.sqrt(np.clip(1 - Rt[:, 0, 0] ** 2 - Rt[:, 1, 0] ** 2, 0, None))
    b1 = np.sqrt(np.clip(1 - Rt[:, 0, 1] ** 2 - Rt[:, 1, 1] ** 2, 0, None))
    dot = Rt[:, 0, 0] * Rt[:, 0, 1] + Rt[:, 1, 0] * Rt[:, 1, 1]
    b1 = np.where(dot > 0, -b1, b1)

    out = []
    for sign in (1.0, -1.0):
        c1 = np.stack([Rt[:, 0, 0], Rt[:, 1, 0], sign * b0], -1)
        c2 = np.stack([Rt[:, 0, 1], Rt[:, 1, 1], sign * b1], -1)
        M = np.stack([c1, c2, np.cross(c1, c2)], axis=-1)
        out.append(Rv @ M)
    return np.stack(out, axis=1)  # (N, 2, 3, 3)


def _translations(Rp, XY, xy):
    """Least-squares translation given plane rotations (N,C,3,3) and normalized points (N,n,2)."""
    P = np.concatenate([XY, np.zeros((len(XY), 1))], axis=1)
    RP = np.einsum("ncij,kj->ncki", Rp, P)  # (N,C,n,3)
    x = xy[:, None, :, 0]
    y = xy[:, None, :, 1]
    # rows [1,0,-x], [0,1,-y] applied to t; rhs = -(RP_xy - [x,y] RP_z)
    n = XY.shape[0]
    Arows = np.zeros(RP.shape[:3] + (2, 3))
    Arows[..., 0, 0] = 1.0
    Arows[..., 0, 2] = -x
    Arows[..., 1, 1] = 1.0
    Arows[..., 1, 2] = -y
    rhs = -np.stack([RP[..., 0] - x * RP[..., 2], RP[..., 1] - y * RP[..., 2]], -1)
    A = Arows.reshape(RP.shape[:2] + (2 * n, 3))
    b = rhs.reshape(RP.shape[:2] + (2 * n,))
    AtA = np.swapaxes(A, -1, -2) @ A
    Atb = np.einsum("ncki,nck->nci", A, b)
    return np.linalg.solve(AtA, Atb[..., None])[..., 0]


def _project(Pc, K: CameraIntrinsics):
    z = Pc[..., 2]
    return np.stack([K.fx * Pc[..., 0] / z + K.cx, K.fy * Pc[..., 1] / z + K.cy], -1)


def _rms(R, t, M, kps, K):
    Pc = np.einsum("...ij,kj->...ki", R, M) + t[..., None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        r = _project(Pc, K) - kps
    return np.sqrt(np.mean(np.sum(r * r, axis=-1), axis=-1))


def gauss_newton_polish(R, t, M, kps, K: CameraIntrinsics, iters: int = POLISH_ITERS, tol: float = POLISH_TOL):
    """Batched damped Gauss-Newton (Levenberg-Marquardt) on pixel reprojection error.

    R (N,3,3), t (N,3), model points M (n,3), keypoints (N,n,2). A step that
    does not reduce the cost is rejected and the item's damping grows tenfold.
    """
    R = R.copy()
    t = t.copy()
    active = np.all(np.isfinite(R), axis=(1, 2)) & np.all(np.isfinite(t), axis=1)
    fx, fy = K.fx, K.fy
    cost = _rms(R, t, M, kps, K)
    lam = np.full(len(t), LM_INIT)
    for _ in range(iters):
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        Ra, ta, ka = R[idx], t[idx], kps[idx]
        RM = np.einsum("nij,kj->nki", Ra, M)
        Pc = RM + ta[:, None, :]
        x, y, z = Pc[..., 0], Pc[..., 1], Pc[..., 2]
        if np.any(z <= MIN_DEPTH):
            bad = np.any(z <= MIN_DEPTH, axis=1)
            active[idx[bad]] = False
            continue
        res = (_project(Pc, K) - ka).reshape(len(idx), -1)
        Jp = np.zeros(Pc.shape[:2] + (2, 3))
        Jp[..., 0, 0] = fx / z
        Jp[..., 0, 2] = -fx * x / z**2
        Jp[..., 1, 1] = fy / z
        Jp[..., 1, 2] = -fy * y / z**2
        # d(exp(w) R M)/dw = -[RM]x
        skew = np.zeros(RM.shape + (3,))
        skew[..., 0, 1], skew[..., 0, 2] = RM[..., 2], -RM[..., 1]
        skew[..., 1, 0], skew[..., 1, 2] = -RM[..., 2], RM[..., 0]
        skew[..., 2, 0], skew[..., 2, 1] = RM[..., 1], -RM[..., 0]
        Jfull = np.concatenate([Jp @ skew, Jp], axis=-1).reshape(len(idx), -1, 6)
        JtJ = np.swapaxes(Jfull, 1, 2) @ Jfull
        diag = np.diagonal(JtJ, axis1=1, axis2=2)
        JtJ = JtJ + (lam[idx, None] * diag + 1e-12 * diag.mean(1, keepdims=True))[..., None] * np.eye(6)
        g = np.einsum("nki,nk->ni", Jfull, res)
        try:
            delta = -np.linalg.solve(JtJ, g[..., None])[..., 0]
        except np.linalg.LinAlgError:
            delta = -np.array([np.linalg.lstsq(a, b, rcond=None)[0] for a, b in zip(JtJ, g)])
        Rn = so3_exp(delta[:, :3]) @ Ra
        tn = ta + delta[:, 3:]
        new_cost = _rms(Rn, tn, M, ka, K)
        better = np.isfinite(new_cost) & (new_cost <= cost[idx])
        stalled = better & (cost[idx] - new_cost <= POLISH_RTOL * cost[idx])
        R[idx[better]] = Rn[better]
        t[idx[better]] = tn[better]
        cost[idx[better]] = new_cost[better]
        lam[idx] = np.where(better, lam[idx] / 10, lam[idx] * 10)
        step = np.linalg.norm(delta, axis=1)
        active[idx[(better & (step < tol)) | stalled | (lam[idx] > LM_MAX)]] = False
    return R, t


def solve_planar_pnp_batch(kps, K: CameraIntrinsics, template: KeypointTemplate = DEFAULT_TEMPLATE,
                           polish: bool = True) -> PnPBatch:
    """Solve many 4-point planar PnP problems at once; kps is (N, 4, 2) pixels."""
    kps = np.asarray(kps, dtype=float).reshape(-1, 4, 2)
    N = len(kps)
    XY, Q, centroid = _plane_frame(template)
    M = template.metric
    status = np.full(N, OK)
    R_out = np.full((N, 2, 3, 3), np.nan)
    t_out = np.full((N, 2, 3), np.nan)
    err_out = np.full((N, 2), np.inf)
    finite = np.all(np.isfinite(kps), axis=(1, 2))
    status[~finite] = DEGENERATE
    if not np.any(finite):
        return PnPBatch(R_out, t_out, err_out, status)

    idx = np.flatnonzero(finite)
    k = kps[idx]
    xy = np.stack([(k[..., 0] - K.cx) / K.fx, (k[..., 1] - K.cy) / K.fy], -1)
    H, cond = _homographies(XY, xy)
    good = cond <= COND_LIMIT
    status[idx[~good]] = DEGENERATE
    idx, H, xy, k = idx[good], H[good], xy[good], k[good]
    if len(idx) == 0:
        return PnPBatch(R_out, t_out, err_out, status)

    with np.errstate(invalid="ignore", divide="ignore"):
        Rp = _ippe_rotations(H)
        tp = _translations(Rp, XY, xy)
    Rg = Rp @ Q.T  # plane frame -> gripper frame
    tg = tp - np.einsum("ncij,j->nci", Rg, centroid)

    n = len(idx)
    Rg = Rg.reshape(2 * n, 3, 3)
    tg = tg.reshape(2 * n, 3)
    kk = np.repeat(k, 2, axis=0)
    if polish:
        Rg, tg = gauss_newton_polish(Rg, tg, M, kk, K)
    Pc = np.einsum("nij,kj->nki", Rg, M) + tg[:, None, :]
    in_front = np.all(Pc[..., 2] > 0, axis=1) & np.all(np.isfinite(Pc), axis=(1, 2))
    errs = np.where(in_front, _rms(Rg, tg, M, kk, K), np.inf)
    errs = np.where(np.isfinite(errs), errs, np.inf)

    Rg = Rg.reshape(n, 2, 3, 3)
    tg = tg.reshape(n, 2, 3)
    errs = errs.reshape(n, 2)
    order = np.argsort(errs, axis=1, kind="stable")
    rows = np.arange(n)[:, None]
    R_out[idx] = Rg[rows, order]
    t_out[idx] = tg[rows, order]
    err_out[idx] = errs[rows, order]
    status[idx[~np.isfinite(err_out[idx, 0])]] = BEHIND
    return PnPBatch(R_out, t_out, err_out, status)


def solve_planar_pnp(kps: KeypointSet, template: KeypointTemplate, K: CameraIntrinsics) -> PnPResult:
    pts = kps.points if isinstance(kps, KeypointSet) else np.asarray(kps, dtype=float)
    return solve_planar_pnp_batch(pts[None], K, template).result(0)


def reprojection_error(pose: Pose, kps: KeypointSet, template: KeypointTemplate, K: CameraIntrinsics) -> float:
    """RMS pixel distance between the projected template and the keypoints."""
    Pc = pose.apply(template.metric)
    if np.any(Pc[:, 2] <= MIN_DEPTH):
        raise NonPositiveDepth("template point behind the camera")
    pts = kps.points if isinstance(kps, KeypointSet) else np.asarray(kps, dtype=float)
    r = _project(Pc, K) - pts
    return float(np.sqrt(np.mean(np.sum(r * r, axis=-1))))
