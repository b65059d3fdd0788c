import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def brute_air(points, labels, sigma_sq, t_nodes, weights, metric="mi"):
    """Direct per-symbol evaluation of MI / GMI, independent of the kernel code."""
    M = points.shape[0]
    m = M.bit_length() - 1
    z = np.sqrt(sigma_sq) * t_nodes
    total = 0.0
    for i in range(M):
        d = points[i][None, None, :] - points[None, :, :]
        lh = -(np.sum(d * d, axis=-1) + 2.0 * np.sum(z[:, None, :] * d, axis=-1)) / sigma_sq
        log_s = np.log(np.exp(lh).sum(axis=1))
        if metric == "mi":
            total += weights @ log_s
        else:
            acc = m * log_s
            for k in range(m):
                same = ((labels >> k) & 1) == ((labels[i] >> k) & 1)
                acc -= np.log(np.exp(lh[:, same]).sum(axis=1))
            total += weights @ acc
    return m - total / (M * np.log(2.0))
