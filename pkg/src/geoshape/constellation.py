"""Labelled multidimensional constellations.

A constellation is an ``M x 2N`` matrix of real coordinates together with a
bijective integer bit labelling. Coordinates are kept exactly as given
(unnormalised); power normalisation happens inside the objectives.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .labeling import assign_labels, assign_labels_spherical, default_bit_allocation

__all__ = [
    "Constellation",
    "FecParams",
    "normalize",
    "normalize_points",
    "excess_kurtosis",
    "kurtosis_of_points",
    "generate",
    "KINDS",
    "save_csv",
    "load_csv",
]

KINDS = ("square", "lattice", "ring", "gaussian")


def _is_power_of_two(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


@dataclass(frozen=True, eq=False)
class Constellation:
    """Immutable labelled point set.

    Attributes
    ----------
    points : numpy.ndarray, shape (M, 2N)
    labels : numpy.ndarray of int64, shape (M,)
        ``labels[i]`` is the bit pattern of row ``i``; bit ``m - k`` of the
        integer is the k-th bit (k = 1 is the most significant).
    """

    points: np.ndarray
    labels: np.ndarray = field(default=None)

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True)
        if pts.ndim != 2:
            raise ValueError("points must be an M x 2N matrix")
        n_points, dims = pts.shape
        if not _is_power_of_two(n_points):
            raise ValueError(f"number of points must be a power of two >= 2, got {n_points}")
        if dims < 2 or dims % 2:
            raise ValueError(f"need an even number (>= 2) of real dimensions, got {dims}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("constellation coordinates must be finite")
        if self.labels is None:
            lab = np.arange(n_points, dtype=np.int64)
        else:
            lab = np.array(self.labels, dtype=np.int64, copy=True).reshape(-1)
            if lab.shape != (n_points,) or not np.array_equal(np.sort(lab), np.arange(n_points)):
                raise ValueError("labels must be a permutation of 0..M-1")
        pts.setflags(write=False)
        lab.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", lab)

    @property
    def M(self) -> int:
        return self.points.shape[0]

    @property
    def n_pairs(self) -> int:
        return self.points.shape[1] // 2

    @property
    def dims(self) -> int:
        return self.points.shape[1]

    @property
    def bits_per_symbol(self) -> int:
        return self.M.bit_length() - 1

    def bit_matrix(self) -> np.ndarray:
        """``M x m`` 0/1 matrix; column ``k`` is bit ``k + 1`` (MSB first)."""
        m = self.bits_per_symbol
        shifts = np.arange(m - 1, -1, -1)
        return ((self.labels[:, None] >> shifts[None, :]) & 1).astype(np.float64)

    def with_points(self, points) -> "Constellation":
        return Constellation(points, self.labels)

    def sorted_by_label(self) -> "Constellation":
        order = np.argsort(self.labels)
        return Constellation(self.points[order], self.labels[order])

    def __repr__(self):
        return f"Constellation(M={self.M}, n_pairs={self.n_pairs})"


@dataclass(frozen=True)
class FecParams:
    """Code rate and bits per symbol of a coded modulation scheme."""

    code_rate: float
    bits_per_symbol: int

    def __post_init__(self):
        if not 0.0 < self.code_rate <= 1.0:
            raise ValueError(f"code rate must lie in (0, 1], got {self.code_rate}")
        if int(self.bits_per_symbol) != self.bits_per_symbol or self.bits_per_symbol < 1:
            raise ValueError("bits per symbol must be a positive integer")


def normalize_points(x: np.ndarray) -> np.ndarray:
    """Scale ``x`` so that the mean energy per coordinate pair is one."""
    x = np.asarray(x, dtype=np.float64)
    n_points, dims = x.shape
    fro = np.sqrt(np.sum(x * x))
    if fro == 0.0:
        raise ValueError("cannot normalise an all-zero constellation")
    return x * (np.sqrt(n_points * dims / 2) / fro)


def normalize(c: Constellation) -> Constellation:
    """Return ``c`` with ``||points||_F**2 == M * N``; labels are unchanged."""
    return c.with_points(normalize_points(c.points))


def kurtosis_of_points(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1] != 2:
        raise ValueError("excess kurtosis is only defined for one coordinate pair (N = 1)")
    energy = np.sum(x * x, axis=1)
    p2 = energy.mean()
    if p2 == 0.0:
        raise ValueError("excess kurtosis undefined for zero-power constellation")
    return float(np.mean(energy * energy) / (p2 * p2) - 2.0)


def excess_kurtosis(c: Constellation) -> float:
    """``E|X|^4 / (E|X|^2)^2 - 2`` for a 2D (complex) constellation.

    Equals -1 for constant-modulus sets and tends to 0 for Gaussian points.
    """
    return kurtosis_of_points(c.points)


def _pam_levels(bits: int) -> np.ndarray:
    n = 1 << bits
    return 2.0 * np.arange(n) - (n - 1)


def _grid(alloc) -> np.ndarray:
    axes = [_pam_levels(b) for b in alloc]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([g.ravel() for g in mesh])


def _ring_2d(M: int, n_rings: int | None, points_per_ring: int | None):
    m = M.bit_length() - 1
    if n_rings is None and points_per_ring is None:
        n_rings = 1 << (m // 2)
        n_rings = max(1, min(n_rings, M // 4)) if M >= 4 else 1
        points_per_ring = M // n_rings
    elif n_rings is None:
        n_rings = M // points_per_ring
    elif points_per_ring is None:
        points_per_ring = M // n_rings
    if n_rings * points_per_ring != M or not (
        _is_power_of_two(points_per_ring) and (n_rings == 1 or _is_power_of_two(n_rings))
    ):
        raise ValueError(
            f"ring layout {n_rings} x {points_per_ring} does not give {M} points in powers of two"
        )
    # ring radii at Rayleigh quantiles: equal probability mass per ring
    q = (np.arange(n_rings) + 0.5) / n_rings
    radii = np.sqrt(-np.log1p(-q))
    phase = 2.0 * np.pi * (np.arange(points_per_ring) + 0.5) / points_per_ring
    r, ph = np.meshgrid(radii, phase, indexing="ij")
    pts = np.column_stack([(r * np.cos(ph)).ravel(), (r * np.sin(ph)).ravel()])
    alloc = [n_rings.bit_length() - 1, points_per_ring.bit_length() - 1]
    return pts, alloc


def generate(
    kind: str,
    M: int,
    n_pairs: int = 1,
    seed: int | None = None,
    *,
    label_basis: str | None = None,
    symmetric: bool = False,
    n_rings: int | None = None,
    points_per_ring: int | None = None,
) -> Constellation:
    """Starting constellation of the requested family, with Gray labels.

    Parameters
    ----------
    kind : {"square", "lattice", "ring", "gaussian"}
        ``square`` is the regular QAM grid with the same number of levels in
        every real dimension; ``lattice`` is a rectangular grid with bits
        split as evenly as possible; ``ring`` is an ASK-PSK family (per
        coordinate pair); ``gaussian`` draws i.i.d. normal coordinates.
    M : int
        Number of points, a power of two.
    n_pairs : int
        Number of coordinate pairs N (points live in 2N real dimensions).
    seed : int, optional
        Seed for the ``gaussian`` kind.
    label_basis : {"cartesian", "spherical"}, optional
        Basis for the labelling; spherical for rings, Cartesian otherwise.
    symmetric : bool
        For ``gaussian``, mirror ``M / 2**(2N)`` draws into every orthant.
    n_rings, points_per_ring : int, optional
        Ring layout; by default ``2**floor(m/2)`` rings (at most ``M/4``).
    """
    if kind not in KINDS:
        raise ValueError(f"unknown constellation kind {kind!r}; choose from {KINDS}")
    if not _is_power_of_two(int(M)):
        raise ValueError(f"M must be a power of two >= 2, got {M}")
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    M = int(M)
    m = M.bit_length() - 1
    dims = 2 * n_pairs

    if kind == "square":
        if m % dims:
            raise ValueError(
                f"M={M} does not factor into equal grids over {dims} dimensions; "
                "use kind='lattice' or kind='ring'"
            )
        alloc = [m // dims] * dims
        pts = _grid(alloc)
        cart_alloc = alloc
    elif kind == "lattice":
        cart_alloc = default_bit_allocation(m, dims)
        pts = _grid(cart_alloc)
    elif kind == "ring":
        if n_pairs == 1:
            pts, sph_alloc = _ring_2d(M, n_rings, points_per_ring)
        else:
            if m % n_pairs:
                raise ValueError(f"ring product needs log2(M) divisible by N={n_pairs}")
            sub, sph_alloc = _ring_2d(1 << (m // n_pairs), n_rings, points_per_ring)
            pts = _product(sub, n_pairs)
        cart_alloc = default_bit_allocation(m, dims)
    else:
        rng = np.random.default_rng(seed)
        if symmetric:
            if m < dims:
                raise ValueError(f"M={M} too small to mirror into {2 ** dims} orthants")
            base = np.abs(rng.standard_normal((M >> dims, dims)))
            pts = np.concatenate([base * s for s in _orthant_signs(dims)])
        else:
            pts = rng.standard_normal((M, dims))
        cart_alloc = default_bit_allocation(m, dims)

    basis = label_basis or ("spherical" if kind == "ring" else "cartesian")
    if basis == "cartesian":
        labels = assign_labels(pts, cart_alloc)
    elif basis == "spherical":
        if kind == "ring" and n_pairs == 1:
            labels = assign_labels_spherical(pts, sph_alloc)
        elif kind == "ring":
            labels = _product_labels(assign_labels_spherical(sub, sph_alloc), n_pairs)
        else:
            labels = assign_labels_spherical(pts, default_bit_allocation(m, dims))
    else:
        raise ValueError(f"unknown label basis {basis!r}")
    return Constellation(pts, labels)


def _orthant_signs(dims: int) -> np.ndarray:
    """All ``2**dims`` sign vectors; row ``s`` has +1 where bit ``dims-1-d`` of s is set."""
    s = np.arange(1 << dims)[:, None]
    bits = (s >> np.arange(dims - 1, -1, -1)[None, :]) & 1
    return 2.0 * bits - 1.0


def _product(sub: np.ndarray, n_pairs: int) -> np.ndarray:
    k = sub.shape[0]
    idx = np.indices((k,) * n_pairs).reshape(n_pairs, -1).T
    return np.concatenate([sub[idx[:, p]] for p in range(n_pairs)], axis=1)


def _product_labels(sub_labels: np.ndarray, n_pairs: int) -> np.ndarray:
    k = sub_labels.shape[0]
    idx = np.indices((k,) * n_pairs).reshape(n_pairs, -1).T
    lab = np.zeros(idx.shape[0], dtype=np.int64)
    for p in range(n_pairs):
        lab = lab * k + sub_labels[idx[:, p]]
    return lab


def save_csv(c: Constellation, path, meta: dict | None = None) -> Path:
    """Write ``dim1..dim2N,label`` rows (17 significant digits) plus a JSON sidecar."""
    path = Path(path)
    header = ",".join([f"dim{d + 1}" for d in range(c.dims)] + ["label"])
    lines = [header]
    for row, lab in zip(c.points, c.labels):
        lines.append(",".join(f"{v:.17g}" for v in row) + f",{int(lab)}")
    path.write_text("\n".join(lines) + "\n")
    sidecar = {
        "M": c.M,
        "n_pairs": c.n_pairs,
        "design_snr_db": None,
        "metric": None,
        "kind": None,
        "seed": None,
    }
    if meta:
        sidecar.update(meta)
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return path


def load_csv(path) -> Constellation:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
        if not header or header[-1] != "label" or any(
            h != f"dim{d + 1}" for d, h in enumerate(header[:-1])
        ):
            raise ValueError(f"{path}: unexpected header {header}")
        data = [line.strip().split(",") for line in fh if line.strip()]
    if not data:
        raise ValueError(f"{path}: no constellation rows")
    pts = np.array([[float(v) for v in row[:-1]] for row in data])
    labels = np.array([int(row[-1]) for row in data], dtype=np.int64)
    return Constellation(pts, labels)
