"""One test per acceptance criterion, at the stated tolerances."""

import math
import time

import numpy as np
import pytest

from geoshape.air import AwgnChannel, air_pass, capacity_2d, ghq_grid, gmi, mi, mi_monte_carlo
from geoshape.constellation import Constellation, excess_kurtosis, generate, normalize, normalize_points
from geoshape.fibre import FibreModel, snr_for_constellation
from geoshape.grad import (
    compose_awgn_objective,
    compose_nonlinear_objective,
    count_kernel_evals,
    fd_gradient,
    gmi_gradient,
    mi_gradient,
)
from geoshape.labeling import assign_labels, graymap
from geoshape.optim import (
    OptimizerConfig,
    make_objective,
    multi_start,
    optimize,
    sr1_update,
    steihaug_cg,
    trust_region,
)
from geoshape.quadrature import hermite_rule


def best_time(fn, repeats=7):
    fn()
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def rel_err(a, b):
    return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))


def test_criterion_01_gradient_correctness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    cases = [(M, N) for M in (4, 8, 16) for N in (1, 2) if M >= 2 ** N]
    worst = 0.0
    for metric in ("mi", "gmi"):
        for k in range(20):
            M, N = cases[k % len(cases)]
            grid = ghq_grid(10 if N == 1 else 6, 2 * N)
            raw = Constellation(rng.standard_normal((M, 2 * N)), rng.permutation(M))
            ch = AwgnChannel.from_snr_db(float(rng.uniform(0, 15)))
            obj = lambda c: compose_awgn_objective(c, ch, grid, metric)
            worst = max(worst, rel_err(obj(raw).grad, fd_gradient(obj, raw, 1e-5)))
            u = normalize(raw)
            bits = u.bit_matrix() if metric == "gmi" else None
            fn = mi_gradient if metric == "mi" else gmi_gradient
            fd = fd_gradient(lambda p: air_pass(p, bits, ch.sigma_sq, grid, metric)[0], u.points)
            worst = max(worst, rel_err(fn(u, ch, grid).grad, fd))
        fm = FibreModel(0.4, 10.0)
        for k in range(20):
            M = (4, 8, 16)[k % 3]
            raw = Constellation(rng.standard_normal((M, 2)), rng.permutation(M))
            obj = lambda c: compose_nonlinear_objective(c, fm, ghq_grid(10), metric)
            worst = max(worst, rel_err(obj(raw).grad, fd_gradient(obj, raw, 1e-5)))
    assert worst < 1e-6
    assert time.perf_counter() - t0 < 120


@pytest.mark.parametrize("metric", ["mi", "gmi"])
def test_criterion_02_kernel_reuse(metric):
    c = normalize(generate("gaussian", 64, seed=5))
    ch = AwgnChannel.from_snr_db(12)
    grid = ghq_grid(10)
    assert (count_kernel_evals(c, ch, grid, metric, with_gradient=False)
            == count_kernel_evals(c, ch, grid, metric, with_gradient=True))
    bits = c.bit_matrix() if metric == "gmi" else None
    t_val = best_time(lambda: air_pass(c.points, bits, ch.sigma_sq, grid, metric), 15)
    t_grad = best_time(lambda: air_pass(c.points, bits, ch.sigma_sq, grid, metric, grad=True), 15)
    assert t_grad <= 2.5 * t_val


@pytest.mark.slow
def test_criterion_03_speedup_over_finite_differences():
    c = normalize(generate("gaussian", 256, seed=3))
    ch = AwgnChannel.from_snr_db(12)
    grid = ghq_grid(10)
    t0 = time.perf_counter()
    gmi_gradient(c, ch, grid)
    t_analytic = best_time(lambda: gmi_gradient(c, ch, grid), 3)
    bits = c.bit_matrix()
    t1 = time.perf_counter()
    fd_gradient(lambda p: air_pass(p, bits, ch.sigma_sq, grid, "gmi")[0], c.points)
    t_fd = time.perf_counter() - t1
    assert t_fd >= 50 * t_analytic
    assert time.perf_counter() - t0 < 300


@pytest.mark.slow
def test_criterion_04_quadrature_validity():
    c = normalize(generate("square", 16))
    grid = ghq_grid(20)
    for snr in (5, 10, 15):
        ch = AwgnChannel.from_snr_db(snr)
        for mode, f in (("mi", mi), ("gmi", gmi)):
            est, _ = mi_monte_carlo(c, ch, 10 ** 7, seed=snr, mode=mode)
            assert abs(f(c, ch, grid) - est) < 5e-3
    for L in (5, 10, 20):
        t, w = hermite_rule(L)
        for k in range(0, 2 * L, 2):
            assert float(w @ t ** k) == pytest.approx(math.gamma((k + 1) / 2), rel=1e-9)
        for k in range(1, 2 * L, 2):
            assert abs(float(w @ t ** k)) < 1e-9 * math.gamma(k / 2 + 1)


def standard_starts(M, seed=0):
    return [generate(k, M, symmetric=True, seed=seed) for k in ("square", "ring", "gaussian")]


@pytest.mark.slow
def test_criterion_05_shaping_gain_m64():
    t0 = time.perf_counter()
    ch = AwgnChannel.from_snr_db(12)
    grid = ghq_grid(10)
    best, _ = multi_start(standard_starts(64), make_objective("gmi", snr_db=12, grid=grid),
                          OptimizerConfig(symmetry="orthant"))
    g_opt = gmi(best, ch, grid)
    g_qam = gmi(normalize(generate("square", 64)), ch, grid)
    assert g_opt - g_qam >= 0.05
    assert capacity_2d(12) - g_opt >= 0
    assert time.perf_counter() - t0 < 600


@pytest.mark.slow
def test_criterion_06_m8192_single_evaluation():
    c = normalize(generate("lattice", 8192))
    ch = AwgnChannel.from_snr_db(25)
    t0 = time.perf_counter()
    og = gmi_gradient(c, ch, ghq_grid(10))
    elapsed = time.perf_counter() - t0
    assert np.isfinite(og.value) and np.all(np.isfinite(og.grad))
    assert elapsed < 60


@pytest.mark.slow
def test_criterion_07_nonlinear_tradeoff():
    t0 = time.perf_counter()
    grid = ghq_grid(10)
    fm = FibreModel(0.4, 12.0)
    cfg = OptimizerConfig(symmetry="orthant")
    awgn, _ = multi_start(standard_starts(64), make_objective("gmi", snr_db=12.0, grid=grid), cfg)
    gsnl, _ = multi_start(standard_starts(64), make_objective("gmi", fibre=fm, grid=grid), cfg)
    assert excess_kurtosis(gsnl) < excess_kurtosis(awgn)
    assert (compose_nonlinear_objective(gsnl, fm, grid).value
            >= compose_nonlinear_objective(awgn, fm, grid).value)
    assert time.perf_counter() - t0 < 900


def test_criterion_08_snr_change_constant_modulus():
    fm = FibreModel(0.4, 10.0)
    assert snr_for_constellation(fm, -1.0) - 10.0 == pytest.approx(0.7394, abs=1e-3)


def test_criterion_09_labelling():
    assert graymap(2) == [0, 1, 3, 2]
    assert graymap(3) == [0, 1, 3, 2, 6, 7, 5, 4]
    for M in (16, 64, 256):
        side = int(math.isqrt(M))
        lv = np.arange(side) * 2.0 - (side - 1)
        pts = np.array([(a, b) for a in lv for b in lv])
        lab = assign_labels(pts, [side.bit_length() - 1] * 2)
        assert sorted(lab.tolist()) == list(range(M))
        d2 = np.sum((pts[:, None] - pts[None]) ** 2, axis=-1)
        i, j = np.nonzero(np.isclose(d2, 4.0))
        assert len(i) == 2 * 2 * side * (side - 1)
        assert all(bin(int(lab[a] ^ lab[b])).count("1") == 1 for a, b in zip(i, j))


def rosenbrock(x):
    a, b = x
    return ((1 - a) ** 2 + 100 * (b - a * a) ** 2,
            np.array([-2 * (1 - a) - 400 * a * (b - a * a), 200 * (b - a * a)]))


def test_criterion_10_optimizer_units():
    g = np.array([3.0, 4.0])
    assert np.allclose(steihaug_cg(np.eye(2), g, 1.0), -g / 5)
    assert np.allclose(steihaug_cg(np.eye(2), g / 10, 1.0), -g / 10)
    s = steihaug_cg(np.diag([1.0, -1.0]), np.array([1.0, 0.0]), 1.0)
    assert np.linalg.norm(s) == pytest.approx(1.0)
    rng = np.random.default_rng(0)
    A = rng.standard_normal((3, 3))
    H = A + A.T
    B = np.eye(3)
    for v in rng.standard_normal((3, 3)):
        B = sr1_update(B, v, H @ v)
    assert np.max(np.abs(B - H)) < 1e-8
    cfg = OptimizerConfig()
    deltas = []
    st, trace = trust_region(rosenbrock, [-1.2, 1.0], cfg, callback=lambda s: deltas.append(s.delta))
    for prev, cur in zip(trace.records, trace.records[1:]):
        if cur.accepted:
            assert cur.f < prev.f
    assert deltas[-1] < 3e-4 and len(trace) - 1 < cfg.max_iters
    assert np.max(np.abs(st.x - 1.0)) < 1e-6


def evals_to_reach(trace, level):
    for r in trace.records:
        if -r.f >= level:
            return r.n_objective_evals
    return math.inf


@pytest.mark.slow
def test_criterion_11_composed_beats_projected_gradient():
    ch = AwgnChannel.from_snr_db(12)
    grid = ghq_grid(10)
    start = normalize(generate("square", 64))
    cfg = OptimizerConfig(max_iters=300)
    _, composed = optimize(start, lambda c: compose_awgn_objective(c, ch, grid, "gmi"), cfg)

    # comparator: raw-metric gradient at u(x), renormalised after every step
    bits, shape = start.bit_matrix(), start.points.shape

    def raw(v):
        u = normalize_points(v.reshape(shape))
        val, gr, _ = air_pass(u, bits, ch.sigma_sq, grid, "gmi", grad=True)
        return -val, -gr.reshape(-1)

    def project(state):
        state.x = normalize_points(state.x.reshape(shape)).reshape(-1)

    _, projected = trust_region(raw, start.points.reshape(-1), cfg, callback=project)
    g0 = -composed.records[0].f
    level = g0 + 0.9 * (-composed.final_f - g0)
    assert evals_to_reach(composed, level) < evals_to_reach(projected, level)
