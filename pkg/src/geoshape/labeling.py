"""Recursive Gray bit labelling of arbitrary point sets.

Points are sorted along one coordinate, split into ``2**bits`` contiguous
blocks which receive a binary-reflected Gray prefix, and the procedure
recurses on the remaining coordinates inside every block. Applied to a
regular grid this reproduces Gray-coded square QAM; applied in spherical
coordinates it produces ASK-PSK style labels.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

__all__ = [
    "graymap",
    "default_bit_allocation",
    "assign_labels",
    "assign_labels_spherical",
    "to_spherical",
]

_TWO_PI = 2.0 * np.pi


def graymap(m: int) -> list[int]:
    """Binary-reflected Gray sequence of length ``2**m``.

    >>> graymap(3)
    [0, 1, 3, 2, 6, 7, 5, 4]
    """
    if m < 0:
        raise ValueError(f"number of bits must be non-negative, got {m}")
    return [i ^ (i >> 1) for i in range(1 << m)]


def default_bit_allocation(m: int, dims: int) -> list[int]:
    """Split ``m`` bits over ``dims`` coordinates, larger shares first."""
    if dims < 1:
        raise ValueError("need at least one dimension")
    base, extra = divmod(m, dims)
    return [base + (1 if d < extra else 0) for d in range(dims)]


def _check_alloc(n_points: int, dims: int, alloc: Sequence[int]) -> list[int]:
    alloc = [int(a) for a in alloc]
    if len(alloc) != dims:
        raise ValueError(f"bit allocation has {len(alloc)} entries for {dims} dimensions")
    if any(a < 0 for a in alloc):
        raise ValueError("bits per dimension must be non-negative")
    if n_points != 1 << sum(alloc):
        raise ValueError(
            f"{n_points} points cannot carry {sum(alloc)} bits (need exactly 2**bits points)"
        )
    return alloc


def _label_recursive(x: np.ndarray, alloc: list[int]) -> np.ndarray:
    n_points, dims = x.shape
    order = np.argsort(x[:, 0], kind="stable")
    labels = np.empty(n_points, dtype=np.int64)
    if dims == 1:
        labels[order] = graymap(alloc[0])
        return labels
    prefix = graymap(alloc[0])
    block = n_points >> alloc[0]
    for j, gray in enumerate(prefix):
        sel = order[j * block:(j + 1) * block]
        labels[sel] = block * gray + _label_recursive(x[sel, 1:], alloc[1:])
    return labels


def assign_labels(points, alloc: Sequence[int] | None = None) -> np.ndarray:
    """Gray labels for an ``M x D`` point set in its Cartesian basis.

    Parameters
    ----------
    points : array_like, shape (M, D)
    alloc : sequence of int, optional
        Bits carried by each coordinate; defaults to an even split.

    Returns
    -------
    numpy.ndarray of int64
        ``labels[i]`` is the integer bit pattern of ``points[i]``. The
        first coordinate owns the most significant bits.
    """
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n_points, dims = x.shape
    if alloc is None:
        m = int(np.log2(n_points))
        alloc = default_bit_allocation(m, dims)
    alloc = _check_alloc(n_points, dims, alloc)
    return _label_recursive(x, alloc)


def to_spherical(points) -> np.ndarray:
    """Map ``M x 2N`` points to ``(radius, split angles, phases)``.

    For ``N`` coordinate pairs the output columns are the total radius,
    ``N - 1`` angles describing how energy is split between the pairs and
    ``N`` per-pair phases in ``[0, 2*pi)``. Points at the origin get zero
    angles.
    """
    x = np.asarray(points, dtype=float)
    n_points, dims = x.shape
    if dims % 2:
        raise ValueError("spherical labelling needs an even number of real dimensions")
    pairs = x.reshape(n_points, dims // 2, 2)
    pair_radius = np.hypot(pairs[..., 0], pairs[..., 1])
    phase = np.mod(np.arctan2(pairs[..., 1], pairs[..., 0]), _TWO_PI)
    # atan2 can return -0.0 or -tiny for points on the positive axis
    phase[phase >= _TWO_PI - 1e-12] = 0.0
    radius = np.sqrt(np.sum(x * x, axis=1))
    splits = []
    partial = pair_radius[:, 0] ** 2
    for p in range(1, dims // 2):
        splits.append(np.arctan2(pair_radius[:, p], np.sqrt(partial)))
        partial = partial + pair_radius[:, p] ** 2
    cols = [radius, *splits, *phase.T]
    return np.column_stack(cols)


def assign_labels_spherical(points, alloc: Sequence[int] | None = None) -> np.ndarray:
    """Gray labels computed in spherical coordinates (radius sorted first).

    With ``alloc = [bits_for_rings, bits_for_phase]`` on a ring constellation
    the most significant bits pick the amplitude ring and the remaining bits
    follow a Gray code around each ring.
    """
    return assign_labels(to_spherical(points), alloc)
