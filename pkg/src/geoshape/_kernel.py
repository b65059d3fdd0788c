"""Shared kernel pass for MI/GMI values and gradients.

For every noise sample ``z`` and symbol pair ``(i, j)`` the kernel is

    h_ij(z) = exp(-(||x_i - x_j||^2 + 2 <z, x_i - x_j>) / sigma^2)
            = exp((||z||^2 - ||x_i + z - x_j||^2) / sigma^2),

so ``h_ij <= exp(||z||^2 / sigma^2)`` and ``h_ii == 1``. With ``z = sigma * t``
on a Gauss-Hermite grid the exponent is bounded by ``||t||^2`` and every
row sum is at least one, which means the row sums can be formed directly
without overflow or underflow. Batches whose nodes exceed ``_SHIFT_LIMIT``
fall back to a per-row max shift.

One pass produces the row sums (value) and, if requested, the two matrix
products needed for the gradient (``H @ X`` style row terms and
``H.T @ U`` style column terms). No kernel entry is evaluated twice.

Terms with ``h < exp(-PRUNE_LOG)`` are skipped for large constellations by
only visiting columns inside a ball around ``x_i + z``; since every sum
includes ``h_ii = 1`` the relative error of doing so is below
``M * exp(-PRUNE_LOG)``.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

PRUNE_LOG = 40.0
_SHIFT_LIMIT = 600.0
_MAX_ELEMS = 1 << 21
_BLOCK_ROWS = 256


@dataclass
class KernelResult:
    """Accumulated sums of one pass, natural-log units.

    ``value`` is ``sum_t w_t sum_i bracket_i(z_t)`` where the bracket is
    ``log S_i`` (MI) or ``m log S_i - sum_k log S_i^k`` (GMI). ``grad`` is
    its derivative with respect to the points.
    """

    value: float
    grad: np.ndarray | None
    per_bit: np.ndarray | None
    per_node: np.ndarray | None
    n_kernel_evals: int


def spatial_blocks(points: np.ndarray, size: int) -> list[np.ndarray]:
    """Partition row indices into spatially compact blocks of at most ``size``."""
    n = points.shape[0]
    if n <= size:
        return [np.arange(n)]
    out = []
    stack = [np.arange(n)]
    while stack:
        idx = stack.pop()
        if idx.size <= size:
            out.append(np.sort(idx))
            continue
        sub = points[idx]
        d = int(np.argmax(np.ptp(sub, axis=0)))
        order = np.argsort(sub[:, d], kind="stable")
        half = idx.size // 2
        stack.append(idx[order[half:]])
        stack.append(idx[order[:half]])
    return out


_local = threading.local()


def _workspace(n: int) -> np.ndarray:
    """Per-thread scratch array of at least ``n`` doubles, reused across calls."""
    buf = getattr(_local, "buf", None)
    if buf is None or buf.size < n:
        buf = np.empty(n)
        _local.buf = buf
    return buf[:n]


class _Pass:
    def __init__(self, points, bits, sigma_sq, t_nodes, weights, metric, want_grad,
                 per_node, prune, max_elems, block_rows):
        self.X = np.ascontiguousarray(points, dtype=np.float64)
        self.M, self.D = self.X.shape
        self.sq = np.sum(self.X * self.X, axis=1)
        self.gmi = metric == "gmi"
        if self.gmi:
            self.bits = np.ascontiguousarray(bits, dtype=np.float64)
            self.m = self.bits.shape[1]
        else:
            self.bits = None
            self.m = 0
        self.sigma_sq = float(sigma_sq)
        self.inv = 1.0 / self.sigma_sq
        self.t = np.ascontiguousarray(t_nodes, dtype=np.float64)
        self.tt = np.sum(self.t * self.t, axis=1)
        self.Z = np.sqrt(self.sigma_sq) * self.t
        self.w = np.asarray(weights, dtype=np.float64)
        self.want_grad = want_grad
        self.per_node = per_node
        self.max_elems = max_elems
        self.block_rows = block_rows
        self.prune = prune
        self.tree = None
        # matmul column counts, used to size node batches
        D, m = self.D, self.m
        if self.gmi:
            self.n_fwd = 2 * m + D + m * D if want_grad else 2 * m
            self.n_bwd = (D + 1) * (m + 1) if want_grad else 0
        else:
            self.n_fwd = D + 1 if want_grad else 1
            self.n_bwd = D + 1 if want_grad else 0

    def run(self, jobs: int = 1) -> KernelResult:
        blocks = spatial_blocks(self.X, self.block_rows)
        if self.prune and self.M > self.block_rows:
            self.tree = cKDTree(self.X)
        if jobs > 1 and len(blocks) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                parts = list(pool.map(self._block, blocks))
        else:
            parts = [self._block(b) for b in blocks]
        value = 0.0
        grad = np.zeros((self.M, self.D)) if self.want_grad else None
        per_bit = np.zeros(self.m) if self.gmi else None
        per_node = np.zeros(len(self.w)) if self.per_node else None
        count = 0
        # fixed block order keeps the reduction independent of ``jobs``
        for part in parts:
            value += part["value"]
            count += part["count"]
            if grad is not None:
                grad += part["grad"]
            if per_bit is not None:
                per_bit += part["per_bit"]
            if per_node is not None:
                per_node += part["per_node"]
        return KernelResult(value, grad, per_bit, per_node, count)

    def _block(self, rows: np.ndarray) -> dict:
        R = rows.size
        n_nodes = len(self.w)
        acc = {
            "value": 0.0,
            "count": 0,
            "grad": np.zeros((self.M, self.D)) if self.want_grad else None,
            "per_bit": np.zeros(self.m) if self.gmi else None,
            "per_node": np.zeros(n_nodes) if self.per_node else None,
        }
        width = self.M + self.n_fwd + self.n_bwd + 2 * self.m * self.D
        batch = max(1, self.max_elems // (R * width))
        if batch >= 2 or not self.prune:
            cols = np.arange(self.M)
            for start in range(0, n_nodes, batch):
                nodes = np.arange(start, min(start + batch, n_nodes))
                self._batch(rows, cols, nodes, acc)
            return acc
        lo, hi = self.X[rows].min(axis=0), self.X[rows].max(axis=0)
        center = 0.5 * (lo + hi)
        spread = float(np.sqrt(np.max(np.sum((self.X[rows] - center) ** 2, axis=1))))
        sigma = np.sqrt(self.sigma_sq)
        radii = spread + sigma * np.sqrt(self.tt + PRUNE_LOG)
        for k in range(n_nodes):
            cols = self.tree.query_ball_point(center + self.Z[k], radii[k], return_sorted=True)
            self._batch(rows, np.asarray(cols, dtype=np.intp), np.array([k]), acc)
        return acc

    def _batch(self, rows, cols, nodes, acc):
        X, inv = self.X, self.inv
        T, R, C = nodes.size, rows.size, cols.size
        Xr, Xc = X[rows], X[cols]
        zt, w = self.Z[nodes], self.w[nodes]

        G = (2.0 * inv) * (Xr @ Xc.T)
        a = (self.sq[rows][None, :] + 2.0 * (zt @ Xr.T)) * inv
        b = (self.sq[cols][None, :] - 2.0 * (zt @ Xc.T)) * inv
        # the scratch buffer avoids re-faulting a fresh multi-megabyte array per call
        H = _workspace(T * R * C).reshape(T, R, C)
        np.subtract(G[None, :, :], a[:, :, None], out=H)
        H -= b[:, None, :]
        if self.tt[nodes].max() > _SHIFT_LIMIT:
            shift = H.max(axis=2)
            H -= shift[:, :, None]
        else:
            shift = None
        np.exp(H, out=H)
        H2 = H.reshape(T * R, C)
        acc["count"] += T * R * C

        if self.gmi:
            self._gmi(rows, cols, nodes, Xr, Xc, zt, w, H2, shift, acc)
        else:
            self._mi(rows, cols, nodes, Xr, Xc, zt, w, H2, shift, acc)

    def _mi(self, rows, cols, nodes, Xr, Xc, zt, w, H2, shift, acc):
        D, inv = self.D, self.inv
        T, R = nodes.size, rows.size
        # quantities indexed by (column-of-sum, row*node) are kept transposed
        # so that per-row arithmetic runs over contiguous memory
        if self.want_grad:
            PT = np.empty((D + 1, cols.size))
            PT[0] = 1.0
            PT[1:] = Xc.T
            FT = PT @ H2.T
            S = FT[0]
        else:
            S = H2.sum(axis=1)
        logS = np.log(S).reshape(T, R)
        if shift is not None:
            logS = logS + shift
        node_vals = logS.sum(axis=1)
        acc["value"] += float(w @ node_vals)
        if acc["per_node"] is not None:
            acc["per_node"][nodes] += node_vals
        if not self.want_grad:
            return
        YT = self._y_t(Xr, zt)
        inv_s = 1.0 / S
        row_term = np.einsum("t,dtr->rd", w, (YT - FT[1:] * inv_s).reshape(D, T, R))
        acc["grad"][rows] -= (2.0 * inv) * row_term
        ws = np.repeat(w, R) * inv_s
        UT = np.empty((D + 1, ws.size))
        UT[:D] = YT * ws
        UT[D] = ws
        CT = UT @ H2
        acc["grad"][cols] += (2.0 * inv) * (CT[:D] - Xc.T * CT[D]).T

    @staticmethod
    def _y_t(Xr, zt):
        """``(x_r + z_t)`` for every (node, row), as a ``D x (T*R)`` array."""
        return (Xr.T[:, None, :] + zt.T[:, :, None]).reshape(Xr.shape[1], -1)

    def _gmi(self, rows, cols, nodes, Xr, Xc, zt, w, H2, shift, acc):
        D, m, inv = self.D, self.m, self.inv
        T, R, C = nodes.size, rows.size, cols.size
        BcT = self.bits[cols].T
        XcT = Xc.T
        n_p = 2 * m + D + m * D if self.want_grad else 2 * m
        PT = np.empty((n_p, C))
        PT[:m] = BcT
        PT[m:2 * m] = 1.0 - BcT
        if self.want_grad:
            PT[2 * m:2 * m + D] = XcT
            np.multiply(BcT[:, None, :], XcT[None, :, :],
                        out=PT[2 * m + D:].reshape(m, D, C))
        # the class sums entering a logarithm are formed explicitly for both
        # bit values, since S - Q can cancel catastrophically
        FT = PT @ H2.T
        Q1, Q0 = FT[:m], FT[m:2 * m]
        S = Q1[0] + Q0[0]
        BrT = np.tile(self.bits[rows].T > 0.5, T)
        Sk = np.where(BrT, Q1, Q0)
        logS = np.log(S)
        logSk = np.log(Sk)
        wt = np.repeat(w, R)
        acc["per_bit"] += (logS - logSk) @ wt
        # a row shift enters log S and every log S^k alike and cancels here
        bracket = (m * logS - logSk.sum(axis=0)).reshape(T, R)
        node_vals = bracket.sum(axis=1)
        acc["value"] += float(w @ node_vals)
        if acc["per_node"] is not None:
            acc["per_node"][nodes] += node_vals
        if not self.want_grad:
            return

        # Gradient sums may use differences: their rounding error is absolute
        # (of order eps times the node weight) and harmless, unlike in a log.
        # Own-class sum of row i for bit k: b N1_k + (1 - b) (Ntot - N1_k).
        inv_sk = 1.0 / Sk
        inv_s = 1.0 / S
        s_inv = np.where(BrT, inv_sk, -inv_sk)
        other = np.where(BrT, 0.0, inv_sk).sum(axis=0)
        Ntot = FT[2 * m:2 * m + D]
        N1 = FT[2 * m + D:].reshape(m, D, -1)
        dev = np.einsum("kdn,kn->dn", N1, s_inv) + Ntot * (other - m * inv_s)
        row_term = np.einsum("t,dtr->rd", w, dev.reshape(D, T, R))
        acc["grad"][rows] -= (2.0 * inv) * row_term

        # Column terms: sum_i H_ij c_i (y_i - x_j) with c_i from the MI part
        # and the own-class part; the latter splits into a bit-independent
        # piece and a piece selected by the column's bit.
        YT = self._y_t(Xr, zt)
        base = wt * (m * inv_s - other)
        dk = s_inv * wt
        UT = np.empty(((D + 1) * (m + 1), wt.size))
        np.multiply(YT, base, out=UT[:D])
        UT[D] = base
        np.multiply(dk[:, None, :], YT[None, :, :], out=UT[D + 1:D + 1 + m * D].reshape(m, D, -1))
        UT[D + 1 + m * D:] = dk
        CT = UT @ H2
        col = CT[:D] - XcT * CT[D]
        A_y = CT[D + 1:D + 1 + m * D].reshape(m, D, C)
        A_1 = CT[D + 1 + m * D:]
        col -= np.einsum("kc,kdc->dc", BcT, A_y) - XcT * np.einsum("kc,kc->c", BcT, A_1)
        acc["grad"][cols] += (2.0 * inv) * col.T


def kernel_pass(points, bits, sigma_sq, t_nodes, weights, *, metric="mi", grad=False,
                per_node=False, prune=True, jobs=1, max_elems=_MAX_ELEMS,
                block_rows=_BLOCK_ROWS) -> KernelResult:
    """Evaluate the MI or GMI sums (and optionally their gradient) in one pass.

    Parameters
    ----------
    points : (M, D) array
    bits : (M, m) 0/1 array or None
        Needed for ``metric="gmi"``.
    sigma_sq : float
        Noise variance per two real dimensions.
    t_nodes : (T, D) array
        Normalised noise samples; the kernel uses ``z = sqrt(sigma_sq) * t``.
    weights : (T,) array
        Expectation weights of the samples (sum to one for an expectation).
    """
    if metric not in ("mi", "gmi"):
        raise ValueError(f"metric must be 'mi' or 'gmi', got {metric!r}")
    if metric == "gmi" and bits is None:
        raise ValueError("GMI needs the bit matrix")
    p = _Pass(points, bits, sigma_sq, t_nodes, weights, metric, grad, per_node, prune,
              max_elems, block_rows)
    return p.run(jobs)
