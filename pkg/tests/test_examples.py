"""Worked examples and hand-checkable cases for every module."""
import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from _instances import crandn, network_instance, random_precoder

from zosga import harness, wmmse
from zosga.catalog import load_experiment, synthetic_scenario
from zosga.channel import (
    ChannelModel,
    build_exponential_correlation,
    build_kronecker_correlation,
    correlation_sqrt,
    path_loss,
    sample_rician_link,
)
from zosga.network import (
    IrsLayout,
    UtilitySpec,
    compose_channel,
    effective_channel,
    effective_channel_jacobian,
    sinr,
    sumrate,
    sumrate_cograd,
    wirtinger_full_gradient,
)
from zosga.optimizer import ZosgaConfig, estimate_gradient, sample_direction, simulate
from zosga.varactor import (
    VaractorCircuitSpec,
    input_impedance,
    map_irs,
    parallel,
    phase_shift_coefficient,
    surface_impedance,
    varactor_impedance,
)

SPEC = VaractorCircuitSpec()

# ---------------------------------------------------------------- channel


def test_correlation_small_cases():
    assert np.array_equal(build_exponential_correlation(0.0, 3), np.eye(3))
    assert np.allclose(build_exponential_correlation(0.5, 2), [[1, 0.5], [0.5, 1]])
    assert np.array_equal(build_kronecker_correlation(np.eye(2), np.eye(3)), np.eye(6))


@settings(max_examples=40, deadline=None)
@given(r=st.floats(0.0, 0.9999))
def test_exponential_correlation_is_psd(r):
    assert np.linalg.eigvalsh(build_exponential_correlation(r, 8)).min() >= -1e-10


def test_kronecker_against_loops_and_spectrum():
    a, b = build_exponential_correlation(0.5, 2), build_exponential_correlation(0.5, 2)
    ref = np.empty((4, 4))
    for i in range(2):
        for j in range(2):
            for k in range(2):
                for m in range(2):
                    ref[2 * i + k, 2 * j + m] = a[i, j] * b[k, m]
    assert np.allclose(build_kronecker_correlation(a, b), ref)
    a, b = build_exponential_correlation(0.3, 3), build_exponential_correlation(0.8, 3)
    prods = np.sort(np.outer(np.linalg.eigvalsh(a), np.linalg.eigvalsh(b)).ravel())
    assert np.allclose(np.linalg.eigvalsh(build_kronecker_correlation(a, b)), prods)


def test_path_loss_values():
    assert path_loss(1e-3, 3.7, 1.0) == pytest.approx(0.0316228, rel=1e-6)
    assert path_loss(1e-3, 0.0, 123.0) == pytest.approx(np.sqrt(1e-3))
    assert path_loss(1e-3, 2.2, 10.0) == pytest.approx(2.512e-3, rel=1e-3)


def test_rician_limits_and_moments():
    rng = np.random.default_rng(0)
    los = crandn(rng, 4)
    out = sample_rician_link(los, 1e12, rng)
    assert np.linalg.norm(out - los) / np.linalg.norm(los) < 1e-5
    phi = build_exponential_correlation(0.6, 4)
    left = correlation_sqrt(phi)
    draws = np.stack([sample_rician_link(los, 0.0, rng, left=left) for _ in range(100000)])
    cov = draws.T @ draws.conj() / len(draws)
    assert np.linalg.norm(cov - phi) / np.linalg.norm(phi) < 0.05
    iid = np.stack([sample_rician_link(np.zeros(3), 0.0, rng) for _ in range(100000)])
    assert np.mean(np.abs(iid) ** 2) == pytest.approx(1.0, abs=0.02)


def test_realization_seeding_and_mean():
    sc = synthetic_scenario(2, 2, 2)
    model = ChannelModel(sc)
    scsi = model.draw_scsi(np.random.default_rng(1))
    a = model.draw_realization(scsi, np.random.default_rng(5))
    b = model.draw_realization(scsi, np.random.default_rng(5))
    c = model.draw_realization(scsi, np.random.default_rng(6))
    assert a.digest() == b.digest() != c.digest()
    rng = np.random.default_rng(7)
    n = 100000
    hd = np.stack([model.draw_realization(scsi, rng).h_d for _ in range(n)])
    los = model.loss_direct * model.w_au[0] * scsi.v_d
    sd = model.loss_direct * model.w_au[1] / np.sqrt(n)
    assert np.all(np.abs(hd.mean(0) - los) < 5 * sd)


# ---------------------------------------------------------------- network


def test_effective_channel_special_cases():
    rng = np.random.default_rng(2)
    sc, lay, real, theta = network_instance(rng, 2, 3, 1)
    off = theta.copy()
    off[1] = 0.0  # amplitude
    assert np.array_equal(effective_channel(real, off, lay), real.h_d)
    one = np.array([0.0, 1.0])
    ref = real.G[0].conj().T @ real.h_r[0] + real.h_d
    assert np.allclose(effective_channel(real, one, lay), ref, rtol=1e-15)
    shifted = theta.copy()
    shifted[0] += 2 * np.pi
    assert np.allclose(effective_channel(real, shifted, lay), effective_channel(real, theta, lay), rtol=1e-14)
    coefs = [np.full(1, 0.3 + 0.1j)]
    assert np.allclose(compose_channel(real, coefs), (0.3 + 0.1j) * (real.G[0].conj().T @ real.h_r[0]) + real.h_d)


def test_sinr_and_sumrate_examples():
    P = 2.5
    spec1 = UtilitySpec(np.ones(1), np.ones(1))
    h = np.array([[1.0], [0.0]], dtype=complex)
    assert sinr(np.sqrt(P) * h, h, spec1)[0] == pytest.approx(P)
    assert sinr(np.zeros((2, 1)), h, spec1)[0] == 0.0
    H = np.array([[1.0, 0.0], [0.0, 2.0]], dtype=complex)
    W = np.array([[0.5, 0.0], [0.0, 1.5]], dtype=complex)
    spec2 = UtilitySpec(np.ones(2), np.array([1.0, 0.5]))
    assert np.allclose(sinr(W, H, spec2), [0.25, 4 * 2.25 / 0.5])
    spec4 = UtilitySpec(np.ones(4), np.ones(4))
    assert sumrate(np.eye(4, dtype=complex), np.eye(4, dtype=complex), spec4) == pytest.approx(4.0)
    assert sumrate(np.zeros((4, 4)), crandn(np.random.default_rng(0), 4, 4), spec4) == 0.0


def test_scalar_cograd_closed_form():
    rng = np.random.default_rng(3)
    h, w = crandn(rng, 1, 1), crandn(rng, 1, 1)
    alpha, s2 = 1.7, 0.4
    spec = UtilitySpec(np.array([alpha]), np.array([s2]))
    g2 = abs(h[0, 0]) ** 2 * abs(w[0, 0]) ** 2
    ref = alpha / np.log(2) * np.conj(h[0, 0]) * abs(w[0, 0]) ** 2 / (s2 + g2)
    assert sumrate_cograd(w, h, spec)[0, 0] == pytest.approx(ref, rel=1e-13)
    assert np.array_equal(sumrate_cograd(np.zeros((3, 2)), crandn(rng, 3, 2), UtilitySpec(np.ones(2), np.ones(2))), np.zeros((3, 2)))


def test_full_gradient_examples():
    rng = np.random.default_rng(4)
    c = crandn(rng, 3, 2)
    assert np.array_equal(wirtinger_full_gradient(c, np.zeros((5, 3, 2)), np.zeros((5, 3, 2))), np.zeros(5))
    sc, lay, real, theta = network_instance(rng, 1, 1, 1)
    spec = UtilitySpec.from_scenario(sc)
    W = random_precoder(rng, 1, 1, sc.power_budget)
    J = effective_channel_jacobian(real, theta, lay)
    g = wirtinger_full_gradient(sumrate_cograd(W, effective_channel(real, theta, lay), spec), J.real, J.imag)
    h = 1e-3
    for s in range(2):
        e = np.zeros(2)
        e[s] = h
        secant = sumrate(W, effective_channel(real, theta + e, lay), spec) - sumrate(W, effective_channel(real, theta - e, lay), spec)
        assert np.sign(secant) == np.sign(g[s])


# ---------------------------------------------------------------- wmmse


def test_single_user_returns_scaled_matched_filter():
    rng = np.random.default_rng(5)
    h = crandn(rng, 4, 1)
    P = 3.0
    W = wmmse.solve(h, UtilitySpec(np.ones(1), np.ones(1)), P)
    assert np.allclose(W, np.sqrt(P) * h / np.linalg.norm(h), atol=1e-8)


def test_symmetric_users_get_equal_rates():
    Q, _ = np.linalg.qr(crandn(np.random.default_rng(6), 4, 4))
    H = 1.3 * Q[:, :3]
    spec = UtilitySpec(np.ones(3), np.ones(3))
    W = wmmse.solve(H, spec, 2.0, wmmse.WmmseConfig(iterations=100))
    r = np.log2(1 + sinr(W, H, spec))
    assert np.ptp(r) < 1e-6


def test_beats_random_search():
    rng = np.random.default_rng(7)
    H = crandn(rng, 2, 2)
    spec = UtilitySpec(np.ones(2), np.full(2, 0.5))
    P = 1.0
    _, r = wmmse.solve_with_rate(H, spec, P)
    Ws = crandn(rng, 10000, 2, 2)
    Ws *= np.sqrt(P * rng.random(10000))[:, None, None] / np.linalg.norm(Ws, axis=(1, 2))[:, None, None]
    assert r >= sumrate(Ws, H, spec).max()


def test_trace_length_and_final_value():
    rng = np.random.default_rng(8)
    H = crandn(rng, 3, 2)
    spec = UtilitySpec(np.ones(2), np.ones(2))
    assert wmmse.rate_trace(H, spec, 1.0, wmmse.WmmseConfig(iterations=1)).shape == (1,)
    tr = wmmse.rate_trace(H, spec, 1.0)
    assert tr[-1] == wmmse.solve_with_rate(H, spec, 1.0)[1]


# ---------------------------------------------------------------- zosga


def test_direction_moments():
    rng = np.random.default_rng(9)
    U = sample_direction(rng, (100000, 80))
    assert np.all(np.abs(U.mean(0)) < 3 / np.sqrt(100000) * 1.5)
    m4 = np.mean(np.sum(U**2, axis=1) ** 2)
    assert m4 == pytest.approx(80**2 + 2 * 80, rel=0.02)
    assert np.array_equal(sample_direction(np.random.default_rng(1), 5), sample_direction(np.random.default_rng(1), 5))


def test_linear_channel_estimator_mean_and_zero_direction():
    rng = np.random.default_rng(10)
    M, K, S, n = 2, 2, 2, 10000
    A, b = crandn(rng, M, K, S), crandn(rng, M, K)
    spec = UtilitySpec(np.ones(K), np.ones(K))
    W = random_precoder(rng, M, K)

    def channel(t):
        return np.einsum("mks,...s->...mk", A, t) + b

    J = np.moveaxis(A, -1, 0)
    grad = wirtinger_full_gradient(sumrate_cograd(W, b, spec), J.real, J.imag)
    U = rng.standard_normal((n, S))
    D = estimate_gradient(channel, np.zeros((n, S)), np.broadcast_to(W, (n, M, K)), U, 1e-4, spec).D
    assert np.linalg.norm(D.mean(0) - grad) / np.linalg.norm(grad) < 0.02
    D0 = estimate_gradient(channel, np.zeros(S), W, np.zeros(S), 1e-4, spec).D
    assert np.array_equal(D0, np.zeros(S))


def test_projection_examples():
    lay = IrsLayout(synthetic_scenario(1, 1, 1))
    x = np.array([0.3, 0.5])
    assert np.array_equal(lay.project(x), x)
    assert np.array_equal(lay.project(np.array([-7.0, 1.3])), [-2 * np.pi, 1.0])


def test_zero_step_reproduces_baseline():
    sc = synthetic_scenario(2, 2, 3)
    cfg = ZosgaConfig(iterations=40, eta_phase=0.0, eta_amplitude=0.0, eta_capacitance=0.0, seed=4)
    w = wmmse.WmmseConfig(iterations=5)
    z = simulate(sc, cfg, w, [(0, "zosga")])[0]
    r = simulate(sc, cfg, w, [(0, "random-irs")], theta0=IrsLayout(sc).initial())[0]
    assert np.array_equal(z.theta_final, z.theta_initial)
    assert np.array_equal(z.rates, r.rates)
    again = simulate(sc, cfg, w, [(0, "zosga")])[0]
    assert z.rates.tobytes() == again.rates.tobytes()


def test_fixed_irs_trace_has_no_trend():
    exp = load_experiment("fig3a")
    cfg = dataclasses.replace(exp.zosga, iterations=1500)
    tr = simulate(exp.scenario, cfg, wmmse.WmmseConfig(iterations=5), [(r, "random-irs") for r in range(8)])
    y = np.mean([t.rates for t in tr], axis=0)
    from scipy.stats import linregress

    fit = linregress(np.arange(y.size), y)
    assert abs(fit.slope) < 3 * fit.stderr


# ---------------------------------------------------------------- varactor


def test_varactor_impedance_examples():
    ideal = dataclasses.replace(SPEC, resistance=0.0, inductance=0.0)
    assert varactor_impedance(1e-12, ideal).real == 0.0
    w = SPEC.omega
    c_res = 1 / (w**2 * SPEC.inductance)
    assert varactor_impedance(c_res, SPEC) == pytest.approx(SPEC.resistance, abs=1e-9)
    x1 = varactor_impedance(1e-12, ideal).imag
    x2 = varactor_impedance(2e-12, ideal).imag
    assert x2 == pytest.approx(x1 / 2)


def test_parallel_branch_limits():
    assert parallel(50 + 10j, 20 - 5j) == pytest.approx((73250 - 8750j) / 4925)
    open_patch = dataclasses.replace(SPEC, patch_impedance=1e12j)
    c = 1.1e-12
    assert surface_impedance(c, open_patch) == pytest.approx(varactor_impedance(c, SPEC), rel=1e-6)
    open_slab = dataclasses.replace(SPEC, slab_impedance=1e12j)
    assert input_impedance(c, open_slab) == pytest.approx(surface_impedance(c, SPEC), rel=1e-6)


def test_matched_load_reflects_nothing():
    c = 1e-12
    w = 2 * np.pi * SPEC.frequency
    matched = dataclasses.replace(
        SPEC, resistance=SPEC.free_space_impedance, inductance=1 / (w**2 * c), patch_impedance=1e15j, slab_impedance=1e15j
    )
    assert abs(phase_shift_coefficient(c, matched)) < 1e-9


def test_map_irs_vectorization_and_passivity():
    rng = np.random.default_rng(11)
    c = rng.uniform(SPEC.capacitance_min, SPEC.capacitance_max, 200)
    out = map_irs(c, SPEC)
    assert np.array_equal(out, np.array([phase_shift_coefficient(x, SPEC) for x in c]))
    assert np.all(np.abs(out) <= 1)
    u = map_irs(np.full(5, 1e-12), SPEC)
    assert np.all(u == u[0])


# ---------------------------------------------------------------- harness


def test_repeat_same_seed_same_aggregate():
    exp = load_experiment("fig3a").replace(iterations=15, runs=2, wmmse_iterations=3)
    a, b = harness.repeat(exp), harness.repeat(exp)
    for alg in a.algorithms:
        assert np.array_equal(a.aggregates[alg].mean, b.aggregates[alg].mean)
        assert np.array_equal(a.aggregates[alg].smoothed, b.aggregates[alg].smoothed)
