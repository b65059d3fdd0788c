"""Gauss-Hermite rules for expectations over Gaussian noise."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal

__all__ = ["GhqGrid", "hermite_rule", "ghq_grid"]


def _orthonormal_hermite(t: np.ndarray, n: int) -> np.ndarray:
    """Values of the first ``n + 1`` orthonormal Hermite polynomials at ``t``."""
    p = np.empty((n + 1,) + t.shape)
    p[0] = np.pi ** -0.25
    if n >= 1:
        p[1] = np.sqrt(2.0) * t * p[0]
    for k in range(1, n):
        p[k + 1] = np.sqrt(2.0 / (k + 1)) * t * p[k] - np.sqrt(k / (k + 1)) * p[k - 1]
    return p


@lru_cache(maxsize=None)
def _rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    k = np.arange(1, order)
    nodes = eigh_tridiagonal(np.zeros(order), np.sqrt(k / 2.0), eigvals_only=True)
    # one Newton step on the orthonormal recurrence sharpens the eigenvalues
    p = _orthonormal_hermite(nodes, order)
    nodes = nodes - p[order] / (np.sqrt(2.0 * order) * p[order - 1])
    nodes = 0.5 * (nodes - nodes[::-1])
    p = _orthonormal_hermite(nodes, order - 1)
    weights = 1.0 / np.sum(p * p, axis=0)
    weights = 0.5 * (weights + weights[::-1])
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def hermite_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for ``int exp(-t**2) p(t) dt`` (Golub-Welsch).

    Exact for polynomials of degree up to ``2 * order - 1``.
    """
    if order < 1:
        raise ValueError("quadrature order must be >= 1")
    return _rule(int(order))


@dataclass(frozen=True, eq=False)
class GhqGrid:
    """Tensor Gauss-Hermite grid over ``dims`` real dimensions.

    ``points`` holds the ``order**dims`` node tuples ``t`` and
    ``tensor_weights`` the matching weights scaled by ``pi**(-dims/2)``, so
    that ``sum(tensor_weights * g(sigma * points))`` approximates the
    expectation of ``g(z)`` for ``z`` with variance ``sigma**2 / 2`` per
    real dimension.
    """

    order: int
    dims: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def points(self) -> np.ndarray:
        return _tensor(self.order, self.dims)[0]

    @property
    def tensor_weights(self) -> np.ndarray:
        return _tensor(self.order, self.dims)[1]

    def __len__(self):
        return self.order ** self.dims


@lru_cache(maxsize=16)
def _tensor(order: int, dims: int):
    nodes, weights = hermite_rule(order)
    mesh = np.meshgrid(*([nodes] * dims), indexing="ij")
    pts = np.column_stack([g.ravel() for g in mesh])
    wmesh = np.meshgrid(*([weights] * dims), indexing="ij")
    w = np.prod(np.column_stack([g.ravel() for g in wmesh]), axis=1) / np.pi ** (dims / 2)
    pts.setflags(write=False)
    w.setflags(write=False)
    return pts, w


def ghq_grid(order: int = 10, dims: int = 2) -> GhqGrid:
    nodes, weights = hermite_rule(order)
    return GhqGrid(order=int(order), dims=int(dims), nodes=nodes, weights=weights)
