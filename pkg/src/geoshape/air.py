"""Achievable information rates over the AWGN channel.

MI and GMI are evaluated as ``m - (1/M) sum_i E_z[...]`` with the noise
expectation replaced by a tensor Gauss-Hermite rule; a Monte Carlo
estimator built on the same kernels serves as an independent check.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ._kernel import KernelResult, kernel_pass
from .constellation import Constellation
from .quadrature import GhqGrid, ghq_grid

__all__ = [
    "GhqGrid",
    "ghq_grid",
    "AwgnChannel",
    "AirReport",
    "h_kernel_log",
    "mi",
    "gmi",
    "gmi_per_bit",
    "capacity_2d",
    "binary_entropy",
    "r_star",
    "mi_monte_carlo",
    "evaluate",
    "DEFAULT_GHQ_ORDER",
]

DEFAULT_GHQ_ORDER = 10
_LN2 = math.log(2.0)


@dataclass(frozen=True)
class AwgnChannel:
    """Complex AWGN with variance ``sigma_sq`` per two real dimensions.

    For unit power per coordinate pair ``snr_db = -10 log10(sigma_sq)``.
    """

    sigma_sq: float

    def __post_init__(self):
        if not self.sigma_sq > 0.0:
            raise ValueError(f"noise variance must be positive, got {self.sigma_sq}")

    @classmethod
    def from_snr_db(cls, snr_db: float) -> "AwgnChannel":
        return cls(10.0 ** (-snr_db / 10.0))

    @property
    def snr_db(self) -> float:
        return -10.0 * math.log10(self.sigma_sq)


@dataclass(frozen=True)
class AirReport:
    """Information rates of one constellation at one SNR (bits per symbol)."""

    mi: float
    gmi: float
    capacity_2d: float
    gap_gmi: float
    snr_db: float
    n_pairs: int = 1
    M: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def h_kernel_log(z, xi, xj, sigma_sq: float):
    """``log h`` for noise ``z`` and symbols ``xi``, ``xj`` (broadcasts)."""
    d = np.asarray(xi, dtype=float) - np.asarray(xj, dtype=float)
    z = np.asarray(z, dtype=float)
    return -(np.sum(d * d, axis=-1) + 2.0 * np.sum(z * d, axis=-1)) / sigma_sq


def _grid_for(c: Constellation, grid: GhqGrid | None) -> GhqGrid:
    if grid is None:
        return ghq_grid(DEFAULT_GHQ_ORDER, c.dims)
    if grid.dims != c.dims:
        raise ValueError(f"quadrature grid has {grid.dims} dimensions, constellation has {c.dims}")
    return grid


def _check_normalized(c: Constellation):
    target = c.M * c.n_pairs
    if abs(float(np.sum(c.points ** 2)) - target) > 1e-9 * target:
        raise ValueError("constellation must be normalised to unit energy per coordinate pair")


def air_pass(points: np.ndarray, bits: np.ndarray | None, sigma_sq: float, grid: GhqGrid,
             metric: str, grad: bool = False, **kw) -> tuple[float, np.ndarray | None, KernelResult]:
    """MI or GMI (bits/symbol) and its gradient for raw points, no clamping.

    ``bits`` is the ``M x m`` bit matrix (MSB first); only used for GMI.
    """
    M = points.shape[0]
    m = M.bit_length() - 1
    res = kernel_pass(points, bits, sigma_sq, grid.points, grid.tensor_weights,
                      metric=metric, grad=grad, **kw)
    scale = 1.0 / (M * _LN2)
    value = m - scale * res.value
    g = -scale * res.grad if grad else None
    return value, g, res


def mi(c: Constellation, ch: AwgnChannel, grid: GhqGrid | None = None, **kw) -> float:
    """Mutual information in bits per 2N-dimensional symbol, clamped to ``[0, log2 M]``."""
    _check_normalized(c)
    grid = _grid_for(c, grid)
    value, _, _ = air_pass(c.points, None, ch.sigma_sq, grid, "mi", **kw)
    return float(min(max(value, 0.0), c.bits_per_symbol))


def gmi(c: Constellation, ch: AwgnChannel, grid: GhqGrid | None = None, **kw) -> float:
    """Bit-wise generalised mutual information, clamped to ``[0, log2 M]``."""
    _check_normalized(c)
    grid = _grid_for(c, grid)
    value, _, _ = air_pass(c.points, c.bit_matrix(), ch.sigma_sq, grid, "gmi", **kw)
    return float(min(max(value, 0.0), c.bits_per_symbol))


def gmi_per_bit(c: Constellation, ch: AwgnChannel, grid: GhqGrid | None = None, **kw) -> np.ndarray:
    """``I(C_k; Y)`` for k = 1..m (most significant bit first); sums to the GMI."""
    _check_normalized(c)
    grid = _grid_for(c, grid)
    _, _, res = air_pass(c.points, c.bit_matrix(), ch.sigma_sq, grid, "gmi", **kw)
    return 1.0 - res.per_bit / (c.M * _LN2)


def capacity_2d(snr_db: float) -> float:
    """AWGN capacity ``log2(1 + SNR)`` per two real dimensions."""
    if snr_db == -math.inf:
        return 0.0
    return math.log2(1.0 + 10.0 ** (snr_db / 10.0))


def binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def r_star(fec, ber: float) -> float:
    """Post-FEC rate ``m R (1 - H_b(BER))`` of a hard-decision outer code."""
    if not 0.0 <= ber <= 0.5:
        raise ValueError(f"BER must lie in [0, 0.5], got {ber}")
    return fec.bits_per_symbol * fec.code_rate * (1.0 - binary_entropy(ber))


def mi_monte_carlo(c: Constellation, ch: AwgnChannel, n_samples: int = 10**6,
                   seed: int | None = 0, mode: str = "mi", chunk: int = 1 << 15):
    """Monte Carlo estimate of MI or GMI with its standard error.

    ``n_samples`` counts symbol/noise pairs: ``n_samples // M`` Gaussian noise
    draws are each applied to every symbol, so every draw yields one i.i.d.
    sample of the symbol-averaged log term.

    Returns
    -------
    (estimate, std_error) : tuple of float
    """
    if n_samples < 1000:
        raise ValueError("need at least 1000 samples")
    if mode not in ("mi", "gmi"):
        raise ValueError(f"mode must be 'mi' or 'gmi', got {mode!r}")
    _check_normalized(c)
    M, m = c.M, c.bits_per_symbol
    n_draws = max(2, n_samples // M)
    rng = np.random.default_rng(seed)
    bits = c.bit_matrix() if mode == "gmi" else None
    samples = np.empty(n_draws)
    for start in range(0, n_draws, chunk):
        n = min(chunk, n_draws - start)
        # t has variance 1/2 per real dimension, z = sigma * t
        t = rng.standard_normal((n, c.dims)) * math.sqrt(0.5)
        res = kernel_pass(c.points, bits, ch.sigma_sq, t, np.full(n, 1.0 / n),
                          metric=mode, per_node=True)
        samples[start:start + n] = m - res.per_node / (M * _LN2)
    est = float(samples.mean())
    err = float(samples.std(ddof=1) / math.sqrt(n_draws))
    return est, err


def evaluate(c: Constellation, snr_db: float, grid: GhqGrid | None = None, **kw) -> AirReport:
    """Normalise ``c`` and report MI, GMI, capacity and the GMI gap at ``snr_db``."""
    from .constellation import normalize

    u = normalize(c)
    ch = AwgnChannel.from_snr_db(snr_db)
    mi_val = mi(u, ch, grid, **kw)
    gmi_val = gmi(u, ch, grid, **kw)
    cap = capacity_2d(snr_db)
    return AirReport(mi=mi_val, gmi=gmi_val, capacity_2d=cap,
                     gap_gmi=c.n_pairs * cap - gmi_val, snr_db=float(snr_db),
                     n_pairs=c.n_pairs, M=c.M)
