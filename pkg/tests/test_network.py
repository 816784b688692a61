import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from _instances import crandn, finite_difference, network_instance, random_precoder, random_utility

from zosga.catalog import load_experiment
from zosga.channel import ChannelModel
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
from zosga.varactor import CircuitError


def test_utility_spec_validation():
    with pytest.raises(ValueError):
        UtilitySpec(np.ones(2), np.ones(3))
    with pytest.raises(ValueError):
        UtilitySpec(np.zeros(2), np.ones(2))
    with pytest.raises(ValueError):
        UtilitySpec(np.ones(2), np.array([1.0, 0.0]))


def test_layout_sizes_and_box():
    lay = IrsLayout(load_experiment("fig3a").scenario)
    assert lay.size == 80
    assert np.all(lay.lower[:40] == -2 * np.pi) and np.all(lay.upper[40:] == 1.0)
    phys = IrsLayout(load_experiment("fig6a").scenario)
    assert phys.size == 40
    assert phys.lower[0] == pytest.approx(0.2) and phys.upper[0] == pytest.approx(3.0)
    assert lay.contains(lay.initial()) and phys.contains(phys.initial())


@settings(max_examples=50, deadline=None)
@given(x=st.lists(st.floats(-20, 20), min_size=80, max_size=80))
def test_projection_is_idempotent_clamp(x):
    lay = IrsLayout(load_experiment("fig3a").scenario)
    p = lay.project(np.array(x))
    assert lay.contains(p)
    assert np.array_equal(lay.project(p), p)
    inside = (np.array(x) >= lay.lower) & (np.array(x) <= lay.upper)
    assert np.array_equal(p[inside], np.array(x)[inside])


def _loop_channel(real, coefs):
    M, K = real.h_d.shape
    H = real.h_d.copy()
    for G, h_r, rows, c in zip(real.G, real.h_r, real.ap_rows, coefs):
        for k in range(K):
            H[rows, k] += G.conj().T @ np.diag(c) @ h_r[:, k]
    return H


def test_effective_channel_matches_loop_oracle_two_aps():
    sc = load_experiment("fig6bc").scenario.with_irs_mode("ideal")
    rng = np.random.default_rng(0)
    model = ChannelModel(sc)
    real = model.draw_realization(model.draw_scsi(rng), rng)
    lay = IrsLayout(sc)
    theta = lay.random(rng)
    H = effective_channel(real, theta, lay)
    assert np.allclose(H, _loop_channel(real, lay.coefficients(theta)), rtol=1e-13, atol=0)
    zero = compose_channel(real, [np.zeros(n) for _, _, n in lay.blocks])
    assert np.array_equal(zero, real.h_d)


def test_effective_channel_broadcasts_over_theta_batch():
    rng = np.random.default_rng(1)
    _, lay, real, theta = network_instance(rng, 3, 4, 5)
    thetas = np.stack([theta, lay.random(rng)])
    H = effective_channel(real, thetas, lay)
    assert H.shape == (2, 4, 3)
    assert np.allclose(H[1], effective_channel(real, thetas[1], lay))


def test_sinr_and_sumrate_loop_oracle():
    rng = np.random.default_rng(2)
    K, M = 3, 4
    H, W, spec = crandn(rng, M, K), random_precoder(rng, M, K), random_utility(rng, K)
    ref = []
    for k in range(K):
        sig = abs(H[:, k].conj() @ W[:, k]) ** 2
        interf = sum(abs(H[:, k].conj() @ W[:, j]) ** 2 for j in range(K) if j != k)
        ref.append(sig / (interf + spec.noise[k]))
    assert np.allclose(sinr(W, H, spec), ref, rtol=1e-13)
    assert sumrate(W, H, spec) == pytest.approx(np.dot(spec.weights, np.log2(1 + np.array(ref))), rel=1e-13)


def test_cograd_matches_finite_differences():
    rng = np.random.default_rng(3)
    K, M = 4, 6
    H, W, spec = crandn(rng, M, K), random_precoder(rng, M, K, 3.0), random_utility(rng, K)
    c = sumrate_cograd(W, H, spec)
    x = np.concatenate([H.real.ravel(), H.imag.ravel()])

    def f(v):
        return sumrate(W, (v[: M * K] + 1j * v[M * K :]).reshape(M, K), spec)

    g = finite_difference(f, x, 1e-6)
    assert np.allclose(g[: M * K], 2 * c.real.ravel(), rtol=1e-6, atol=1e-9)
    assert np.allclose(g[M * K :], -2 * c.imag.ravel(), rtol=1e-6, atol=1e-9)


@pytest.mark.parametrize("mode", ["ideal", "physical"])
def test_jacobian_and_full_gradient(mode):
    rng = np.random.default_rng(4)
    sc, lay, real, theta = network_instance(rng, 3, 4, 6, mode)
    spec = UtilitySpec.from_scenario(sc)
    J = effective_channel_jacobian(real, theta, lay)
    h = 1e-6
    for s in range(lay.size):
        e = np.zeros(lay.size)
        e[s] = h
        fd = (effective_channel(real, theta + e, lay) - effective_channel(real, theta - e, lay)) / (2 * h)
        assert np.allclose(J[s], fd, rtol=1e-6, atol=1e-8 * np.abs(J).max())
    W = random_precoder(rng, 4, 3, sc.power_budget)
    H = effective_channel(real, theta, lay)
    grad = wirtinger_full_gradient(sumrate_cograd(W, H, spec), J.real, J.imag)
    fd = finite_difference(lambda t: sumrate(W, effective_channel(real, t, lay), spec), theta, h)
    assert np.linalg.norm(grad - fd) <= 1e-5 * np.linalg.norm(grad)


def test_strict_physical_map_rejects_outside_box():
    rng = np.random.default_rng(5)
    _, lay, real, theta = network_instance(rng, 2, 2, 3, "physical")
    theta[0] = 5.0
    with pytest.raises(CircuitError):
        effective_channel(real, theta, lay)
    assert np.all(np.isfinite(effective_channel(real, theta, lay, strict=False)))
