"""Kurtosis-dependent SNR of the nonlinear fibre channel at optimum launch power.

The GN-model nonlinear coefficient is split into a modulation independent
part and a part proportional to the excess kurtosis of the transmitted
constellation. Re-optimising the launch power for each constellation then
changes the achievable SNR by ``(1 + c * phi) ** (-1/3)`` relative to a
Gaussian-modulated signal, where ``c`` is the eta ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = ["FibreModel", "snr_for_constellation", "nonlinear_scale"]


@dataclass(frozen=True)
class FibreModel:
    """Nonlinear channel described by the eta ratio and the Gaussian-signal SNR.

    ``eta1``, ``eta2`` and ``p_ase`` are carried along for bookkeeping only.
    """

    c: float
    snr_gaussian_db: float
    eta1: float | None = None
    eta2: float | None = None
    p_ase: float | None = None

    def __post_init__(self):
        if not self.c >= 0.0:
            raise ValueError(f"eta ratio must be non-negative, got {self.c}")
        if not math.isfinite(self.snr_gaussian_db):
            raise ValueError("snr_gaussian_db must be finite")


def _penalty_base(c: float, phi: float) -> float:
    base = 1.0 + c * phi
    if not base > 0.0:
        raise ValueError(f"1 + c*phi must be positive (c={c}, phi={phi})")
    return base


def snr_for_constellation(fm: FibreModel, phi: float) -> float:
    """Predicted SNR in dB for a constellation with excess kurtosis ``phi``."""
    return fm.snr_gaussian_db - 10.0 / 3.0 * math.log10(_penalty_base(fm.c, phi))


def nonlinear_scale(c_ratio: float, phi: float) -> float:
    """Amplitude factor ``(1 + c*phi) ** (-1/6)`` applied to a unit-power constellation."""
    return _penalty_base(c_ratio, phi) ** (-1.0 / 6.0)
