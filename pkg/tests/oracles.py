"""Independent reference implementations used by the tests."""
import numpy as np

from graspkit.geometry import so3_exp


def project(R, t, M, K):
    P = M @ R.T + t
    return np.stack([K.fx * P[:, 0] / P[:, 2] + K.cx, K.fy * P[:, 1] / P[:, 2] + K.cy], -1)


def gauss_newton_oracle(R0, t0, M, kps, K, iters=50, h=1e-7):
    """Reprojection minimiser with a central finite-difference Jacobian.

    Accepts one problem (R0 (3,3), t0 (3,), kps (n,2)) or a batch with a
    leading axis. Undamped Gauss-Newton, fixed iteration count.
    """
    single = np.ndim(R0) == 2
    R = np.array(R0, dtype=float).reshape(-1, 3, 3)
    t = np.array(t0, dtype=float).reshape(-1, 3)
    kps = np.asarray(kps, dtype=float).reshape(len(t), -1, 2)

    def residual(x):
        Rx = so3_exp(x[:, :3]) @ R
        P = np.einsum("nij,kj->nki", Rx, M) + (t + x[:, 3:])[:, None, :]
        uv = np.stack([K.fx * P[..., 0] / P[..., 2] + K.cx, K.fy * P[..., 1] / P[..., 2] + K.cy], -1)
        return (uv - kps).reshape(len(t), -1)

    zero = np.zeros((len(t), 6))
    for _ in range(iters):
        r0 = residual(zero)
        J = np.zeros(r0.shape + (6,))
        for j in range(6):
            e = zero.copy()
            e[:, j] = h
            J[..., j] = (residual(e) - residual(-e)) / (2 * h)
        dx = -np.einsum("nij,nj->ni", np.linalg.pinv(J), r0)
        R = so3_exp(dx[:, :3]) @ R
        t = t + dx[:, 3:]
    return (R[0], t[0]) if single else (R, t)


def rms(R, t, M, kps, K):
    r = project(R, t, M, K) - kps
    return float(np.sqrt(np.mean(np.sum(r * r, axis=-1))))


def brute_force_metrics(pred_R, pred_t, gt_R, gt_t, gt_obj, t_th, r_th_deg, symmetric=False):
    """Double-loop existence matching returning (pred matched, gt matched, objects hit)."""
    flip = np.diag([-1.0, -1.0, 1.0])

    def angle(A, B):
        c = (np.trace(A.T @ B) - 1) / 2
        return np.degrees(np.arccos(min(1.0, max(-1.0, c))))

    n, m = len(pred_t), len(gt_t)
    p_hit = [False] * n
    g_hit = [False] * m
    for i in range(n):
        for j in range(m):
            dt = np.linalg.norm(pred_t[i] - gt_t[j])
            dr = angle(pred_R[i], gt_R[j])
            if symmetric:
                dr = min(dr, angle(pred_R[i], gt_R[j] @ flip))
            if dt <= t_th and dr <= r_th_deg:
                p_hit[i] = True
                g_hit[j] = True
    objs = {int(gt_obj[j]) for j in range(m) if g_hit[j]}
    return sum(p_hit), sum(g_hit), len(objs)
