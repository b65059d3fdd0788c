"""Trust-region shaping optimiser with SR1 curvature and Steihaug-CG steps.

The optimiser minimises ``-AIR``: each iteration solves the quadratic model
inside the trust radius, evaluates value and gradient once at the trial point,
updates the SR1 curvature estimate and adapts the radius from the ratio of
actual to predicted reduction.
"""

from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial
from typing import Callable, NamedTuple

import numpy as np

from .air import AwgnChannel, GhqGrid
from .constellation import Constellation, _orthant_signs, normalize
from .fibre import FibreModel
from .grad import ObjectiveGradient, compose_awgn_objective, compose_nonlinear_objective

__all__ = [
    "OptimizerConfig",
    "TrustRegionState",
    "TraceRecord",
    "OptTrace",
    "steihaug_cg",
    "sr1_update",
    "trust_region",
    "orthant_relabel",
    "OrthantFold",
    "fold_orthant",
    "optimize",
    "multi_start",
    "make_objective",
]

SYMMETRIES = ("none", "orthant")


@dataclass(frozen=True)
class OptimizerConfig:
    """Trust-region settings; radius factors and caps are configurable."""

    delta0: float = 1.0
    shrink_thresh: float = 0.2
    grow_thresh: float = 0.8
    stop_delta: float = 3e-4
    max_iters: int = 10_000
    sr1_skip_tol: float = 1e-8
    cg_tol: float = 1e-8
    cg_max_iters: int | None = None
    symmetry: str = "none"
    shrink_factor: float = 0.25
    grow_factor: float = 2.0
    max_delta_factor: float = 10.0
    min_predicted: float = 1e-15

    def __post_init__(self):
        if not 0.0 < self.shrink_thresh < self.grow_thresh < 1.0:
            raise ValueError("need 0 < shrink_thresh < grow_thresh < 1")
        if not 0.0 < self.stop_delta < self.delta0:
            raise ValueError("need 0 < stop_delta < delta0")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")
        if not 0.0 < self.shrink_factor < 1.0 < self.grow_factor:
            raise ValueError("need shrink_factor in (0, 1) and grow_factor > 1")
        if self.symmetry not in SYMMETRIES:
            raise ValueError(f"symmetry must be one of {SYMMETRIES}, got {self.symmetry!r}")


@dataclass
class TrustRegionState:
    x: np.ndarray
    f: float
    g: np.ndarray
    B: np.ndarray
    delta: float
    iter: int = 0


@dataclass(frozen=True)
class TraceRecord:
    iter: int
    f: float
    grad_norm: float
    delta: float
    step_norm: float
    accepted: bool
    n_objective_evals: int
    rho: float


@dataclass
class OptTrace:
    """Per-iteration history; ``f`` is the minimised quantity (``-AIR`` for shaping)."""

    records: list[TraceRecord] = field(default_factory=list)
    start_index: int | None = None

    def __len__(self):
        return len(self.records)

    @property
    def final_f(self) -> float:
        return self.records[-1].f

    @property
    def n_objective_evals(self) -> int:
        return self.records[-1].n_objective_evals if self.records else 0

    def to_csv(self, path):
        names = list(TraceRecord.__dataclass_fields__)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names)
            for r in self.records:
                row = asdict(r)
                w.writerow([f"{row[k]:.17g}" if isinstance(row[k], float) else int(row[k])
                            for k in names])


def steihaug_cg(B, g, delta: float, cg_tol: float = 1e-8, cg_max_iters: int | None = None):
    """Truncated CG for ``min g's + s'Bs/2`` subject to ``||s|| <= delta``.

    Stops on the boundary when it is crossed or negative curvature appears,
    otherwise when the residual falls below ``cg_tol * ||g||``.
    """
    B = np.asarray(B, dtype=float)
    g = np.asarray(g, dtype=float)
    s = np.zeros_like(g)
    r = g.copy()
    g_norm = float(np.linalg.norm(g))
    if g_norm == 0.0:
        return s
    d = -r
    rr = float(r @ r)
    for _ in range(cg_max_iters or 2 * g.size):
        Bd = B @ d
        dBd = float(d @ Bd)
        if dBd <= 0.0:
            return s + _to_boundary(s, d, delta) * d
        alpha = rr / dBd
        s_next = s + alpha * d
        if np.linalg.norm(s_next) >= delta:
            return s + _to_boundary(s, d, delta) * d
        s = s_next
        r = r + alpha * Bd
        rr_next = float(r @ r)
        if math.sqrt(rr_next) <= cg_tol * g_norm:
            break
        d = -r + (rr_next / rr) * d
        rr = rr_next
    return s


def _to_boundary(s, d, delta):
    """Positive ``tau`` with ``||s + tau d|| = delta``."""
    a = float(d @ d)
    b = 2.0 * float(s @ d)
    c = float(s @ s) - delta * delta
    disc = math.sqrt(max(b * b - 4.0 * a * c, 0.0))
    # stable root formula; c <= 0 keeps the root non-negative
    return (-b + disc) / (2.0 * a) if b <= 0.0 else -2.0 * c / (b + disc)


def sr1_update(B, s, y, skip_tol: float = 1e-8) -> np.ndarray:
    """Symmetric rank-one update of the Hessian estimate, skipped when ill-posed."""
    B = np.asarray(B, dtype=float)
    r = y - B @ s
    den = float(r @ s)
    if abs(den) < skip_tol * np.linalg.norm(s) * np.linalg.norm(r) or den == 0.0:
        return B.copy()
    return B + np.outer(r, r) / den


def trust_region(fun: Callable, x0, cfg: OptimizerConfig = OptimizerConfig(),
                 callback: Callable | None = None):
    """Minimise ``fun`` (returning value and gradient) from ``x0``.

    A trial point whose evaluation raises ``ValueError`` or
    ``FloatingPointError``, or returns non-finite numbers, is rejected.

    Returns
    -------
    state : TrustRegionState
    trace : OptTrace
    """
    x = np.array(x0, dtype=float).reshape(-1)
    f, g = fun(x)
    f, g = float(f), np.asarray(g, dtype=float).reshape(-1)
    if not (math.isfinite(f) and np.all(np.isfinite(g))):
        raise ValueError("objective is not finite at the starting point")
    evals = 1
    st = TrustRegionState(x=x, f=f, g=g, B=np.eye(x.size), delta=cfg.delta0)
    trace = OptTrace()
    trace.records.append(TraceRecord(0, f, float(np.linalg.norm(g)), st.delta, 0.0, True, evals,
                                     math.nan))
    delta_max = cfg.max_delta_factor * cfg.delta0
    while st.iter < cfg.max_iters and st.delta >= cfg.stop_delta:
        st.iter += 1
        delta = st.delta
        s = steihaug_cg(st.B, st.g, delta, cfg.cg_tol, cfg.cg_max_iters)
        pred = -(float(st.g @ s) + 0.5 * float(s @ st.B @ s))
        rho = -math.inf
        if pred >= cfg.min_predicted:
            try:
                f_new, g_new = fun(st.x + s)
                f_new = float(f_new)
                g_new = np.asarray(g_new, dtype=float).reshape(-1)
                finite = math.isfinite(f_new) and bool(np.all(np.isfinite(g_new)))
            except (ValueError, FloatingPointError):
                finite = False
            evals += 1
            if finite:
                rho = (st.f - f_new) / pred
                st.B = sr1_update(st.B, s, g_new - st.g, cfg.sr1_skip_tol)
        accepted = rho > 0.0
        if accepted:
            st.x, st.f, st.g = st.x + s, f_new, g_new
        if rho < cfg.shrink_thresh:
            st.delta = cfg.shrink_factor * delta
        elif rho > cfg.grow_thresh:
            st.delta = min(cfg.grow_factor * delta, delta_max)
        trace.records.append(TraceRecord(st.iter, st.f, float(np.linalg.norm(st.g)), delta,
                                         float(np.linalg.norm(s)), accepted, evals, rho))
        if callback is not None:
            callback(st)
    return st, trace


def _sign_bit_axes(c: Constellation):
    """Per axis ``(bit, flip)`` such that bit XOR flip is 1 exactly on the positive side."""
    m, dims = c.bits_per_symbol, c.dims
    labels = c.labels
    found, used = [], set()
    for d in range(dims):
        pos = c.points[:, d] > 0
        hit = None
        for k in range(m - 1, -1, -1):
            if k in used:
                continue
            b = ((labels >> k) & 1).astype(bool)
            if np.array_equal(b, pos):
                hit = (k, 0)
            elif np.array_equal(b, ~pos):
                hit = (k, 1)
            if hit:
                break
        if hit is None:
            raise ValueError(f"no label bit follows the sign of coordinate {d + 1}")
        used.add(hit[0])
        found.append(hit)
    return found


def orthant_relabel(c: Constellation) -> Constellation:
    """Permute and flip label bits so that bit ``m-1-d`` is 1 iff coordinate ``d`` > 0.

    Bit permutations and flips leave the GMI unchanged.
    """
    m, dims = c.bits_per_symbol, c.dims
    if m < dims:
        raise ValueError(f"M={c.M} is smaller than the {1 << dims} orthants")
    axes = _sign_bit_axes(c)
    sign_bits = {k for k, _ in axes}
    rest = [k for k in range(m - 1, -1, -1) if k not in sign_bits]
    old = c.labels
    new = np.zeros_like(old)
    for d, (k, flip) in enumerate(axes):
        new |= (((old >> k) & 1) ^ flip) << (m - 1 - d)
    for pos, k in zip(range(m - dims - 1, -1, -1), rest):
        new |= ((old >> k) & 1) << pos
    return Constellation(c.points, new)


class OrthantFold(NamedTuple):
    """Free variables of an orthant-symmetric constellation.

    ``free_vars`` are the absolute coordinates of the base points (sign bits
    all zero), row-major in base-label order. ``reconstruct`` mirrors them
    into every orthant and ``fold_gradient`` maps a full gradient (rows in
    reconstruction order) back onto the free variables.
    """

    free_vars: np.ndarray
    base_labels: np.ndarray
    reconstruct: Callable[[np.ndarray], Constellation]
    fold_gradient: Callable[[np.ndarray], np.ndarray]


def fold_orthant(c: Constellation) -> OrthantFold:
    dims, m = c.dims, c.bits_per_symbol
    if c.M % (1 << dims) or m < dims:
        raise ValueError(f"M={c.M} is not divisible by the {1 << dims} orthants")
    c = orthant_relabel(c)
    shift = m - dims
    base = np.flatnonzero((c.labels >> shift) == 0)
    base = base[np.argsort(c.labels[base])]
    base_labels = c.labels[base].copy()
    n_base = base.size
    signs = _orthant_signs(dims)
    labels = np.concatenate([(s << shift) | base_labels for s in range(1 << dims)])

    def reconstruct(v) -> Constellation:
        p = np.asarray(v, dtype=float).reshape(n_base, dims)
        return Constellation(np.concatenate([p * sg for sg in signs]), labels)

    def fold_gradient(g) -> np.ndarray:
        g = np.asarray(g, dtype=float).reshape(1 << dims, n_base, dims)
        return np.einsum("sbd,sd->bd", g, signs).reshape(-1)

    return OrthantFold(np.abs(c.points[base]).reshape(-1), base_labels, reconstruct,
                       fold_gradient)


def optimize(start: Constellation, objective: Callable[[Constellation], ObjectiveGradient],
             cfg: OptimizerConfig = OptimizerConfig(), callback: Callable | None = None):
    """Maximise ``objective`` from ``start``.

    The start is rescaled to unit power first; the trust radius is measured
    in those units. With ``cfg.symmetry == "orthant"`` only one orthant is
    optimised and the result is exactly symmetric.

    Returns
    -------
    best : Constellation
        Normalised optimised constellation.
    trace : OptTrace
    """
    if cfg.symmetry == "orthant":
        fold = fold_orthant(start)
        x0, to_const, fold_grad = fold.free_vars, fold.reconstruct, fold.fold_gradient
    else:
        x0 = start.points.reshape(-1)
        shape = start.points.shape

        def to_const(v):
            return start.with_points(np.reshape(v, shape))

        def fold_grad(g):
            return np.reshape(g, -1)

    full = to_const(x0).points
    x0 = x0 * math.sqrt(full.shape[0] * full.shape[1] / 2.0 / float(np.sum(full * full)))

    def fun(v):
        og = objective(to_const(v))
        return -og.value, -fold_grad(og.grad)

    st, trace = trust_region(fun, x0, cfg, callback)
    return normalize(to_const(st.x)), trace


def _try_optimize(item, objective, cfg):
    idx, start = item
    try:
        return optimize(start, objective, cfg)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        warnings.warn(f"start {idx} failed: {exc}", RuntimeWarning, stacklevel=3)
        return None


def multi_start(starts, objective, cfg: OptimizerConfig = OptimizerConfig(), jobs: int = 1):
    """Optimise every start and keep the best result (earliest start wins ties).

    Returns
    -------
    best : Constellation
    trace : OptTrace
        Trace of the winning run; ``trace.start_index`` names its start.
    """
    starts = list(starts)
    if not starts:
        raise ValueError("need at least one starting constellation")
    run = partial(_try_optimize, objective=objective, cfg=cfg)
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(run, enumerate(starts)))
    else:
        results = [run(item) for item in enumerate(starts)]
    best = None
    for idx, res in enumerate(results):
        if res is not None and (best is None or res[1].final_f < best[1].final_f):
            best = res
            res[1].start_index = idx
    if best is None:
        raise RuntimeError("every starting constellation failed")
    return best


def make_objective(metric: str = "gmi", *, snr_db: float | None = None,
                   fibre: FibreModel | None = None, grid: GhqGrid | None = None, **kw):
    """Objective ``Constellation -> ObjectiveGradient`` for the AWGN or nonlinear channel."""
    if metric not in ("mi", "gmi"):
        raise ValueError(f"metric must be 'mi' or 'gmi', got {metric!r}")
    if fibre is not None:
        return partial(compose_nonlinear_objective, fibre=fibre, grid=grid, metric=metric, **kw)
    if snr_db is None:
        raise ValueError("need snr_db for the AWGN objective")
    return partial(compose_awgn_objective, ch=AwgnChannel.from_snr_db(snr_db), grid=grid,
                   metric=metric, **kw)
