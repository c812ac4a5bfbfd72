"""Pose graph optimization: damped Gauss-Newton over SE(3) with dynamic
covariance scaling on loop-closure residuals.

The residual of an edge with measurement Z between poses Ti, Tj is the
6-vector [t, log R] of the error transform Z^-1 (Ti^-1 Tj): translation in
meters, rotation as an axis-angle vector in radians.  Pose increments are
6-vectors [dt, dw] applied on the right: R <- R Exp(dw), t <- t + R dt.
Odometry residuals enter the cost unrobustified; each loop residual is scaled
by s = min(1, 2*phi / (phi + chi2)), which bounds its scaled cost s*chi2 by
2*phi no matter how wrong the measurement is.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .geometry import SE3Pose, _skew, so3_exp, so3_jr_inv, so3_log
from .graph import EdgeKind, GraphEdge, GraphSnapshot


class OptimizeError(RuntimeError):
    pass


@dataclass(frozen=True)
class DcsParams:
    """Robust-loss knee: loop residuals with chi2 beyond phi get scaled down."""

    phi: float = 1.0

    def __post_init__(self):
        if self.phi <= 0:
            raise ValueError("phi must be positive")


@dataclass(frozen=True)
class OptimizeOptions:
    tol: float = 1e-8           # stop when max |increment| drops below this
    max_iters: int = 100
    lambda_init: float = 1e-4
    lambda_max: float = 1e10    # damping bound; beyond it the system is declared singular


@dataclass(frozen=True)
class Residual:
    edge: GraphEdge
    value: np.ndarray  # (6,) [translation, rotation]
    chi2: float


def dcs_scale(chi2: float, params: DcsParams) -> float:
    """Dynamic covariance scale factor in (0, 1]."""
    if chi2 < 0:
        raise ValueError("chi2 must be non-negative")
    return min(1.0, 2.0 * params.phi / (params.phi + chi2))


def _batch_residuals(Ri, ti, Rj, tj, Rz, tz):
    """Residuals for stacked edges.  Returns r (m, 6) plus the intermediates
    needed by the Jacobians: W = Ri^T Rj, a = Ri^T (tj - ti)."""
    RiT = np.transpose(Ri, (0, 2, 1))
    W = RiT @ Rj
    a = np.einsum("nij,nj->ni", RiT, tj - ti)
    RzT = np.transpose(Rz, (0, 2, 1))
    r_t = np.einsum("nij,nj->ni", RzT, a - tz)
    E_R = RzT @ W
    r_w = so3_log(E_R)
    return np.concatenate([r_t, r_w], axis=1), W, a, RzT


def _batch_jacobians(W, a, RzT, r_w):
    """Jacobian blocks of the residual w.r.t. the [dt, dw] perturbations of
    the from-pose (Ji) and to-pose (Jj).  Shapes (m, 6, 6)."""
    m = W.shape[0]
    jr_inv = so3_jr_inv(r_w)
    Ji = np.zeros((m, 6, 6))
    Jj = np.zeros((m, 6, 6))
    Ji[:, :3, :3] = -RzT
    Ji[:, :3, 3:] = RzT @ _skew(a)
    Ji[:, 3:, 3:] = -jr_inv @ np.transpose(W, (0, 2, 1))
    Jj[:, :3, :3] = RzT @ W
    Jj[:, 3:, 3:] = jr_inv
    return Ji, Jj


def edge_residual(edge: GraphEdge, poses: dict[int, SE3Pose]) -> Residual:
    """Residual of one edge against a pose map."""
    for nid in (edge.from_id, edge.to_id):
        if nid not in poses:
            raise KeyError(f"pose for node {nid} missing")
    Ti, Tj = poses[edge.from_id], poses[edge.to_id]
    r, _, _, _ = _batch_residuals(
        Ti.rotation_matrix()[None], Ti.translation[None],
        Tj.rotation_matrix()[None], Tj.translation[None],
        edge.rel_pose.rotation_matrix()[None], edge.rel_pose.translation[None])
    value = r[0]
    chi2 = float(edge.info_weight * value @ value)
    return Residual(edge=edge, value=value, chi2=chi2)


def edge_residual_jacobians(edge: GraphEdge, poses: dict[int, SE3Pose]):
    """(residual, J_from, J_to) under the right-multiplicative retraction;
    used directly by tests against finite differences."""
    Ti, Tj = poses[edge.from_id], poses[edge.to_id]
    r, W, a, RzT = _batch_residuals(
        Ti.rotation_matrix()[None], Ti.translation[None],
        Tj.rotation_matrix()[None], Tj.translation[None],
        edge.rel_pose.rotation_matrix()[None], edge.rel_pose.translation[None])
    Ji, Jj = _batch_jacobians(W, a, RzT, r[:, 3:])
    return r[0], Ji[0], Jj[0]


def retract_pose(pose: SE3Pose, delta: np.ndarray) -> SE3Pose:
    """Apply a [dt, dw] increment on the right of a pose."""
    R = pose.rotation_matrix()
    Rn = R @ so3_exp(delta[3:])
    tn = pose.translation + R @ delta[:3]
    return SE3Pose.from_rt(Rn, tn)


def _check_odometry_chain(snapshot: GraphSnapshot):
    ids = sorted(kf.id for kf in snapshot.keyframes)
    chain = {(e.from_id, e.to_id) for e in snapshot.edges if e.kind is EdgeKind.ODOMETRY}
    for prev, nxt in zip(ids[:-1], ids[1:]):
        if (prev, nxt) not in chain:
            raise OptimizeError(f"odometry chain broken between nodes {prev} and {nxt}")


def _robust_cost(chi2: np.ndarray, is_loop: np.ndarray, params: DcsParams) -> float:
    s = np.ones_like(chi2)
    mask = is_loop & (chi2 > params.phi)
    s[mask] = 2.0 * params.phi / (params.phi + chi2[mask])
    return float(np.sum(s * chi2))


def optimize(snapshot: GraphSnapshot, params: DcsParams = DcsParams(),
             options: OptimizeOptions = OptimizeOptions(),
             trace: list | None = None) -> dict[int, SE3Pose]:
    """Optimize all poses of a snapshot; the first (lowest-id) pose is the
    gauge anchor and is returned bit-identical.

    Returns {node id: pose} for every node.  The robustified total cost is
    non-increasing across accepted steps; raises OptimizeError when the graph
    is not chained by odometry or the normal equations stay singular at the
    damping bound.  When `trace` is a list, one {"cost", "step"} entry is
    appended per accepted iteration.
    """
    kfs = sorted(snapshot.keyframes, key=lambda k: k.id)
    n = len(kfs)
    out = {kf.id: kf.pose for kf in kfs}
    if n <= 1 or not snapshot.edges:
        return out
    _check_odometry_chain(snapshot)

    index = {kf.id: k for k, kf in enumerate(kfs)}
    Rs = np.stack([kf.pose.rotation_matrix() for kf in kfs])
    ts = np.stack([kf.pose.translation for kf in kfs])

    edges = snapshot.edges
    m = len(edges)
    ei = np.array([index[e.from_id] for e in edges])
    ej = np.array([index[e.to_id] for e in edges])
    Rz = np.stack([e.rel_pose.rotation_matrix() for e in edges])
    tz = np.stack([e.rel_pose.translation for e in edges])
    w = np.array([e.info_weight for e in edges])
    is_loop = np.array([e.kind is EdgeKind.LOOP for e in edges])

    # gauge: node index 0 fixed; free parameter block k-1 for node index k
    n_free = n - 1
    dim = 6 * n_free

    # static scatter indices for the 12x12 per-edge blocks
    def block_indices():
        rows, cols, keep = [], [], []
        for k in range(m):
            idx = [ei[k], ej[k]]
            offs = []
            for node_idx in idx:
                offs.append(None if node_idx == 0 else 6 * (node_idx - 1))
            for bi, oi in enumerate(offs):
                for bj, oj in enumerate(offs):
                    if oi is None or oj is None:
                        continue
                    rr, cc = np.meshgrid(np.arange(6) + oi, np.arange(6) + oj, indexing="ij")
                    rows.append(rr.ravel())
                    cols.append(cc.ravel())
                    keep.append((k, bi, bj))
        return np.concatenate(rows), np.concatenate(cols), keep

    H_rows, H_cols, H_keep = block_indices()

    def residuals(Rcur, tcur):
        return _batch_residuals(Rcur[ei], tcur[ei], Rcur[ej], tcur[ej], Rz, tz)

    def chi2_of(r):
        return w * np.einsum("ni,ni->n", r, r)

    lam = options.lambda_init
    r, W, a, RzT = residuals(Rs, ts)
    chi2 = chi2_of(r)
    cost = _robust_cost(chi2, is_loop, params)
    dirty = np.zeros(n, dtype=bool)

    for _ in range(options.max_iters):
        # DCS: scale loop residuals via their current chi2
        s = np.ones(m)
        mask = is_loop & (chi2 > params.phi)
        s[mask] = 2.0 * params.phi / (params.phi + chi2[mask])
        w_eff = w * s * s

        Ji, Jj = _batch_jacobians(W, a, RzT, r[:, 3:])
        J = np.concatenate([Ji, Jj], axis=2)          # (m, 6, 12)
        Ht = np.einsum("nik,n,nil->nkl", J, w_eff, J)  # (m, 12, 12)
        bt = np.einsum("nik,n,ni->nk", J, w_eff, r)    # (m, 12)

        data = np.empty(len(H_keep) * 36)
        b = np.zeros(dim)
        for block, (k, bi, bj) in enumerate(H_keep):
            data[block * 36:(block + 1) * 36] = \
                Ht[k, 6 * bi:6 * bi + 6, 6 * bj:6 * bj + 6].ravel()
        for k in range(m):
            for bpos, node_idx in enumerate((ei[k], ej[k])):
                if node_idx != 0:
                    off = 6 * (node_idx - 1)
                    b[off:off + 6] += bt[k, 6 * bpos:6 * bpos + 6]
        H = scipy.sparse.coo_matrix((data, (H_rows, H_cols)), shape=(dim, dim)).tocsc()

        accepted = False
        while True:
            Hd = H + lam * scipy.sparse.identity(dim, format="csc")
            try:
                dx = scipy.sparse.linalg.spsolve(Hd, -b)
            except Exception:
                dx = None
            if dx is None or not np.all(np.isfinite(dx)):
                lam *= 10.0
                if lam > options.lambda_max:
                    raise OptimizeError("normal equations singular at damping bound")
                continue
            step = float(np.max(np.abs(dx))) if dim else 0.0
            # candidate update
            d = np.zeros((n, 6))
            d[1:] = dx.reshape(n_free, 6)
            Rc = Rs @ so3_exp(d[:, 3:])
            tc = ts + np.einsum("nij,nj->ni", Rs, d[:, :3])
            rc, Wc, ac, _ = residuals(Rc, tc)
            chi2c = chi2_of(rc)
            costc = _robust_cost(chi2c, is_loop, params)
            if costc <= cost + 1e-15:
                Rs, ts = Rc, tc
                r, W, a = rc, Wc, ac
                chi2, cost = chi2c, costc
                dirty[1:] |= np.any(d[1:] != 0.0, axis=1)
                lam = max(lam * 0.5, 1e-12)
                accepted = True
                if trace is not None:
                    trace.append({"cost": cost, "step": step})
                break
            lam *= 10.0
            if lam > options.lambda_max:
                accepted = False
                break
        if not accepted or step < options.tol:
            break

    for k, kf in enumerate(kfs):
        if dirty[k]:
            out[kf.id] = SE3Pose.from_rt(Rs[k], ts[k])
    return out
