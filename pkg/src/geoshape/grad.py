"""Analytic gradients of MI and GMI and of the composed shaping objectives.

Two objectives are offered to the optimiser. The AWGN objective evaluates the
rate at the power-normalised constellation ``u(x)``, which makes it scale
invariant and removes the power constraint. The nonlinear objective inserts
a kurtosis-dependent amplitude scale ``n(u)`` between normalisation and the
rate. Both Jacobians are applied as scaled-identity plus rank-one maps and
never materialised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .air import AwgnChannel, GhqGrid, _check_normalized, _grid_for, air_pass
from .constellation import Constellation, normalize_points
from .fibre import FibreModel, nonlinear_scale

__all__ = [
    "ObjectiveGradient",
    "mi_gradient",
    "gmi_gradient",
    "NormalizationJacobian",
    "normalization_jacobian",
    "compose_awgn_objective",
    "compose_nonlinear_objective",
    "fd_gradient",
    "count_kernel_evals",
]


@dataclass(frozen=True)
class ObjectiveGradient:
    """Objective value (bits per symbol) and its ``M x 2N`` gradient.

    ``n_kernel_evals`` counts the pairwise kernel terms that were evaluated.
    """

    value: float
    grad: np.ndarray
    n_kernel_evals: int | None = None


def _metric_pass(c: Constellation, sigma_sq: float, grid: GhqGrid, metric: str, kw) -> tuple:
    bits = c.bit_matrix() if metric == "gmi" else None
    return air_pass(c.points, bits, sigma_sq, grid, metric, grad=True, **kw)


def mi_gradient(c: Constellation, ch: AwgnChannel, grid: GhqGrid | None = None,
                **kw) -> ObjectiveGradient:
    """MI and its gradient with respect to every coordinate of a normalised ``c``."""
    _check_normalized(c)
    value, g, res = _metric_pass(c, ch.sigma_sq, _grid_for(c, grid), "mi", kw)
    return ObjectiveGradient(value, g, res.n_kernel_evals)


def gmi_gradient(c: Constellation, ch: AwgnChannel, grid: GhqGrid | None = None,
                 **kw) -> ObjectiveGradient:
    """GMI and its gradient; shares the kernel pass with the value."""
    _check_normalized(c)
    value, g, res = _metric_pass(c, ch.sigma_sq, _grid_for(c, grid), "gmi", kw)
    return ObjectiveGradient(value, g, res.n_kernel_evals)


def count_kernel_evals(c: Constellation, ch: AwgnChannel, grid: GhqGrid | None = None,
                       metric: str = "gmi", with_gradient: bool = False, **kw) -> int:
    """Number of pairwise kernel terms computed for a value or value+gradient pass."""
    bits = c.bit_matrix() if metric == "gmi" else None
    _, _, res = air_pass(c.points, bits, ch.sigma_sq, _grid_for(c, grid), metric,
                         grad=with_gradient, **kw)
    return res.n_kernel_evals


class NormalizationJacobian:
    """Jacobian of ``u(x) = x / (s ||x||_F)`` with ``s = sqrt(1/(M N))``.

    ``J v = (||x||^2 v - x <x, v>) / (s ||x||^3)``. The map is symmetric so
    ``rmatvec`` is the same operation.
    """

    def __init__(self, x: np.ndarray):
        x = np.asarray(x, dtype=np.float64)
        norm = math.sqrt(float(np.sum(x * x)))
        if norm == 0.0:
            raise ValueError("normalisation Jacobian undefined at the zero constellation")
        self.x = x
        self.shape = (x.size, x.size)
        self._norm = norm
        self._s = math.sqrt(2.0 / x.size)

    def matvec(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64).reshape(self.x.shape)
        n = self._norm
        return (n * n * v - self.x * float(np.sum(self.x * v))) / (self._s * n ** 3)

    rmatvec = matvec

    def __matmul__(self, v):
        return self.matvec(v)

    def to_dense(self) -> np.ndarray:
        f = self.x.reshape(-1)
        n = self._norm
        return (n * n * np.eye(f.size) - np.outer(f, f)) / (self._s * n ** 3)


def normalization_jacobian(c: Constellation | np.ndarray) -> NormalizationJacobian:
    x = c.points if isinstance(c, Constellation) else c
    return NormalizationJacobian(x)


def compose_awgn_objective(c_raw: Constellation, ch: AwgnChannel, grid: GhqGrid | None = None,
                           metric: str = "gmi", **kw) -> ObjectiveGradient:
    """Rate at the normalised constellation and its gradient in the raw coordinates.

    The value is not clamped, so it stays consistent with the gradient.
    """
    grid = _grid_for(c_raw, grid)
    u = normalize_points(c_raw.points)
    value, g, res = _metric_pass(c_raw.with_points(u), ch.sigma_sq, grid, metric, kw)
    return ObjectiveGradient(value, NormalizationJacobian(c_raw.points).rmatvec(g),
                             res.n_kernel_evals)


def _kurtosis_and_grad(u: np.ndarray) -> tuple[float, np.ndarray]:
    """Excess kurtosis of 2D points and its gradient."""
    M = u.shape[0]
    e = np.sum(u * u, axis=1)
    p = e.sum()
    a = float(np.sum(e * e))
    phi = M * a / (p * p) - 2.0
    dphi = 4.0 * M * u * (e * p - a)[:, None] / p ** 3
    return phi, dphi


def compose_nonlinear_objective(c_raw: Constellation, fibre: FibreModel,
                                grid: GhqGrid | None = None, metric: str = "gmi",
                                **kw) -> ObjectiveGradient:
    """Rate of ``kappa(u) * u`` over AWGN at the Gaussian-signal SNR of ``fibre``.

    ``kappa = (1 + c Phi(u)) ** (-1/6)`` models the SNR change at optimum
    launch power; only single-pair (2D) constellations are supported.
    """
    if c_raw.n_pairs != 1:
        raise ValueError("the nonlinear objective is only defined for 2D constellations")
    grid = _grid_for(c_raw, grid)
    u = normalize_points(c_raw.points)
    phi, dphi = _kurtosis_and_grad(u)
    kappa = nonlinear_scale(fibre.c, phi)
    sigma_sq = 10.0 ** (-fibre.snr_gaussian_db / 10.0)
    value, g, res = _metric_pass(c_raw.with_points(kappa * u), sigma_sq, grid, metric, kw)
    dkappa = -(fibre.c / 6.0) * (1.0 + fibre.c * phi) ** (-7.0 / 6.0) * dphi
    g_u = kappa * g + dkappa * float(np.sum(u * g))
    return ObjectiveGradient(value, NormalizationJacobian(c_raw.points).rmatvec(g_u),
                             res.n_kernel_evals)


def fd_gradient(objective: Callable, c, step: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient, one coordinate at a time.

    ``objective`` receives a perturbed copy of ``c`` (a ``Constellation`` or a
    plain array) and returns a number or an ``ObjectiveGradient``. Costs
    ``2 * c.size`` objective evaluations.
    """
    if not step > 0.0:
        raise ValueError("finite-difference step must be positive")
    is_const = isinstance(c, Constellation)
    x = np.array(c.points if is_const else c, dtype=np.float64)

    def f(pts):
        r = objective(c.with_points(pts) if is_const else pts)
        return float(getattr(r, "value", r))

    out = np.empty_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + step
        fp = f(x.copy())
        x[idx] = orig - step
        fm = f(x.copy())
        x[idx] = orig
        out[idx] = (fp - fm) / (2.0 * step)
    return out
