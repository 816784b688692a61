"""Effective channels, SINR, weighted sumrate and its Wirtinger cogradient.

Shapes follow one convention everywhere: an effective channel ``H`` is
``(..., M, K)`` with column ``k`` the channel ``h_k`` of user ``k`` and a
precoder ``W`` is ``(..., M, K)`` with column ``k`` the beam ``w_k``.  Leading
dimensions index independent runs and broadcast.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .varactor import map_irs, phase_shift_coefficient, phase_shift_derivative

LN2 = np.log(2.0)
TWO_PI = 2.0 * np.pi
PF = 1e-12  # physical-mode parameters are capacitances in picofarads


@dataclass(frozen=True)
class UtilitySpec:
    """User weights ``alpha_k`` and noise powers ``sigma_k^2`` (linear)."""

    weights: np.ndarray
    noise: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        n = np.asarray(self.noise, dtype=float)
        if w.shape != n.shape or w.ndim != 1:
            raise ValueError("weights and noise powers must be 1-D arrays of equal length")
        if np.any(w < 0) or not np.any(w > 0):
            raise ValueError("weights must be >= 0 with at least one positive")
        if np.any(n <= 0):
            raise ValueError("noise powers must be strictly positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "noise", n)

    @classmethod
    def from_scenario(cls, scenario):
        return cls(np.array(scenario.weights), np.array(scenario.noise_power))


class IrsLayout:
    """Layout of the real decision vector ``theta`` over all IRSs.

    Ideal IRSs contribute ``[phi_i; A_i]`` (2N entries), physical IRSs their N
    varactor capacitances in pF.  The layout owns the feasible box and the map
    from ``theta`` to complex element coefficients.
    """

    def __init__(self, scenario):
        self.scenario = scenario
        self.varactor = scenario.varactor
        self.blocks = []  # (mode, start, n_elements)
        lo, hi, kind = [], [], []
        start = 0
        for s in scenario.irs:
            n = s.n_elements
            self.blocks.append((s.mode, start, n))
            if s.mode == "ideal":
                lo += [-TWO_PI] * n + [0.0] * n
                hi += [TWO_PI] * n + [1.0] * n
                kind += ["phase"] * n + ["amplitude"] * n
            else:
                lo += [self.varactor.capacitance_min / PF] * n
                hi += [self.varactor.capacitance_max / PF] * n
                kind += ["capacitance"] * n
            start += s.n_params
        self.size = start
        self.lower = np.array(lo)
        self.upper = np.array(hi)
        self.kind = np.array(kind)

    def project(self, theta):
        """Euclidean projection onto the box (elementwise clamp)."""
        return np.clip(theta, self.lower, self.upper)

    def contains(self, theta, slack=0.0):
        return bool(np.all(theta >= self.lower - slack) and np.all(theta <= self.upper + slack))

    def initial(self, batch=()):
        """Unit amplitudes and zero phases; capacitances at the box midpoint."""
        theta = np.empty(self.size)
        for mode, start, n in self.blocks:
            if mode == "ideal":
                theta[start : start + n] = 0.0
                theta[start + n : start + 2 * n] = 1.0
            else:
                theta[start : start + n] = 0.5 * (self.lower[start] + self.upper[start])
        return np.broadcast_to(theta, tuple(batch) + (self.size,)).copy()

    def random(self, rng):
        """Uniform draw from the box."""
        return self.lower + (self.upper - self.lower) * rng.random(self.size)

    def step_scales(self, phase, amplitude, capacitance):
        """Per-entry base step sizes."""
        table = {"phase": phase, "amplitude": amplitude, "capacitance": capacitance}
        return np.array([table[k] for k in self.kind], dtype=float)

    def coefficients(self, theta, strict=True):
        """Complex element coefficients, one ``(..., N_i)`` array per IRS.

        ``strict=False`` lets capacitances sit marginally outside the box,
        which happens for the smoothing probes ``theta +- mu*U`` at a face.
        """
        theta = np.asarray(theta, dtype=float)
        out = []
        for mode, start, n in self.blocks:
            if mode == "ideal":
                phi = theta[..., start : start + n]
                amp = theta[..., start + n : start + 2 * n]
                out.append(amp * np.exp(1j * phi))
            else:
                c = theta[..., start : start + n] * PF
                out.append(map_irs(c, self.varactor) if strict else phase_shift_coefficient(c, self.varactor))
        return out

    def coefficient_derivatives(self, theta):
        """Derivative of each element coefficient w.r.t. its own parameters.

        Returns, per IRS, a list of ``(param_offset, dcoef)`` pairs where
        ``dcoef`` has shape ``(N_i,)``: element ``n`` depends on parameter
        ``param_offset + n``.
        """
        theta = np.asarray(theta, dtype=float)
        out = []
        for mode, start, n in self.blocks:
            if mode == "ideal":
                phi = theta[start : start + n]
                amp = theta[start + n : start + 2 * n]
                e = np.exp(1j * phi)
                out.append([(start, 1j * amp * e), (start + n, e)])
            else:
                c = theta[start : start + n] * PF
                out.append([(start, phase_shift_derivative(c, self.varactor) * PF)])
        return out


def compose_channel(realization, coefs):
    """``h_k = sum_i G_i^H diag(c_i) h_{r,k}^i + h_{d,k}`` for given coefficients."""
    H = np.array(realization.h_d, dtype=complex, copy=True)
    lead = np.broadcast_shapes(H.shape[:-2], *(c.shape[:-1] for c in coefs)) if coefs else H.shape[:-2]
    H = np.broadcast_to(H, lead + H.shape[-2:]).copy()
    for G, h_r, rows, c in zip(realization.G, realization.h_r, realization.ap_rows, coefs):
        H[..., rows, :] += np.conj(np.swapaxes(G, -1, -2)) @ (c[..., :, None] * h_r)
    return H


def effective_channel(realization, theta, layout, strict=True):
    """Effective channel ``H(theta, omega)`` of shape ``(..., M_total, K)``."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != layout.size:
        raise ValueError(f"theta has {theta.shape[-1]} entries, layout expects {layout.size}")
    if len(realization.G) != len(layout.blocks):
        raise ValueError("realization and layout disagree on the IRS count")
    return compose_channel(realization, layout.coefficients(theta, strict))


def effective_channel_jacobian(realization, theta, layout):
    """Analytic ``dH/dtheta`` of shape ``(S, M_total, K)`` (unbatched; tests only)."""
    J = np.zeros((layout.size,) + realization.h_d.shape, dtype=complex)
    for (G, h_r, rows), derivs in zip(
        zip(realization.G, realization.h_r, realization.ap_rows), layout.coefficient_derivatives(theta)
    ):
        # d h_k / d c_n = conj(G[n, :]) * h_r[n, k]
        base = np.conj(G)[:, :, None] * h_r[:, None, :]  # (N, M_ap, K)
        for offset, dc in derivs:
            J[offset : offset + len(dc), rows, :] = dc[:, None, None] * base
    return J


def _gram(W, H):
    """``G[..., k, j] = h_k^H w_j``."""
    return np.conj(np.swapaxes(H, -1, -2)) @ W


def _split(p):
    """Desired and interference power per user; interference summed off-diagonal."""
    k = p.shape[-1]
    sig = np.diagonal(p, axis1=-2, axis2=-1)
    interf = np.where(np.eye(k, dtype=bool), 0.0, p).sum(axis=-1)
    return sig, interf


def sinr(W, H, spec, k=None):
    """Per-user SINR ``|h_k^H w_k|^2 / (sum_{j!=k} |h_k^H w_j|^2 + sigma_k^2)``."""
    p = np.abs(_gram(W, H)) ** 2
    sig, interf = _split(p)
    out = sig / (interf + spec.noise)
    return out if k is None else out[..., k]


def sumrate(W, H, spec):
    """Weighted sumrate ``sum_k alpha_k log2(1 + SINR_k)`` in bits."""
    return np.log2(1.0 + sinr(W, H, spec)) @ spec.weights


def sumrate_cograd(W, H, spec):
    """Wirtinger cogradient of the weighted sumrate with respect to ``H``.

    With ``G[k, j] = h_k^H w_j``, ``T_k = sum_j |G_kj|^2 + sigma_k^2`` and
    ``I_k = T_k - |G_kk|^2`` column ``k`` equals
    ``alpha_k/ln2 * ((1/T_k - 1/I_k) sum_j G_kj conj(w_j) + G_kk conj(w_k)/I_k)``.
    """
    G = _gram(W, H)
    sig, interf = _split(np.abs(G) ** 2)
    I = interf + spec.noise
    T = I + sig
    g_kk = np.diagonal(G, axis1=-2, axis2=-1)
    Wc = np.conj(W)
    total = Wc @ np.swapaxes(G, -1, -2)  # column k: sum_j G_kj conj(w_j)
    scale = spec.weights / LN2
    a = scale * (1.0 / T - 1.0 / I)
    b = scale * g_kk / I
    return a[..., None, :] * total + b[..., None, :] * Wc


def wirtinger_full_gradient(cograd, jac_re, jac_im):
    """Real gradient ``2 J_re . Re(c) + 2 J_im . Re(j c)`` over the parameter axis.

    ``jac_re``/``jac_im`` have shape ``(S, *cograd.shape)``.
    """
    axes = tuple(range(1, jac_re.ndim))
    return 2.0 * np.tensordot(jac_re, cograd.real, axes=(axes, tuple(range(cograd.ndim)))) + 2.0 * np.tensordot(
        jac_im, (1j * cograd).real, axes=(axes, tuple(range(cograd.ndim)))
    )
