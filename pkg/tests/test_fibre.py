import math

import numpy as np
import pytest

from geoshape.fibre import FibreModel, nonlinear_scale, snr_for_constellation


def test_model_validation():
    FibreModel(0.4, 12.0, eta1=1e3, eta2=4e2, p_ase=1e-5)
    with pytest.raises(ValueError):
        FibreModel(-0.1, 12.0)
    with pytest.raises(ValueError):
        FibreModel(0.4, math.inf)


def test_snr_examples():
    fm = FibreModel(0.4, 12.0)
    assert snr_for_constellation(fm, 0.0) == 12.0
    assert snr_for_constellation(fm, -1.0) - 12.0 == pytest.approx(0.7394, abs=1e-4)
    assert snr_for_constellation(FibreModel(0.0, 12.0), 3.7) == 12.0


def test_snr_domain_error():
    with pytest.raises(ValueError):
        snr_for_constellation(FibreModel(1.0, 12.0), -1.0)
    with pytest.raises(ValueError):
        nonlinear_scale(2.0, -0.6)


def test_scale_examples():
    assert nonlinear_scale(0.4, 0.0) == 1.0
    assert nonlinear_scale(0.4, -1.0) == pytest.approx(1.0889, abs=1e-4)
    assert nonlinear_scale(0.4, 1.0) == pytest.approx(0.9455, abs=1e-4)


def test_scale_matches_snr_change():
    # amplitude scale squared is the SNR ratio predicted for the same phi
    fm = FibreModel(0.4, 10.0)
    for phi in (-1.0, -0.68, 0.0, 1.5):
        gain_db = 20 * math.log10(nonlinear_scale(fm.c, phi))
        assert gain_db == pytest.approx(snr_for_constellation(fm, phi) - 10.0, abs=1e-12)


def test_monotone_in_kurtosis():
    fm = FibreModel(0.4, 14.0)
    snr = [snr_for_constellation(fm, p) for p in np.linspace(-1, 4, 101)]
    assert np.all(np.diff(snr) < 0)
