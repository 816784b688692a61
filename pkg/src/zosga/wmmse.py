"""Weighted MMSE precoding for the MISO downlink weighted sumrate.

Block-coordinate ascent over (MMSE receivers, MSE weights, precoders) under a
total power budget.  Every function accepts a batch of channels ``(..., M, K)``
and processes it in lockstep; each batch entry is solved independently.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

INIT_POLICIES = ("matched_filter", "regularized_zf")


@dataclass(frozen=True)
class WmmseConfig:
    iterations: int = 20
    multiplier_tol: float = 1e-10
    init: str = "matched_filter"
    max_multiplier_steps: int = 200

    def validate(self):
        if self.iterations < 1:
            raise ValueError("WMMSE needs at least one iteration")
        if not self.multiplier_tol > 0:
            raise ValueError("multiplier tolerance must be positive")
        if self.init not in INIT_POLICIES:
            raise ValueError(f"unknown WMMSE init {self.init!r}; choose from {INIT_POLICIES}")
        return self


def _herm(x):
    return np.conj(np.swapaxes(x, -1, -2))


def _fro2(x):
    return np.sum(x.real**2 + x.imag**2, axis=(-2, -1))


def _scale_to(W, P):
    n2 = _fro2(W)
    s = np.where(n2 > 0, np.sqrt(P / np.where(n2 > 0, n2, 1.0)), 0.0)
    return W * s[..., None, None]


def initial_precoder(H, Hn, P, policy):
    """Matched filter ``w_k ~ h_k`` (default) or regularized zero-forcing, at full power."""
    if policy == "matched_filter":
        return _scale_to(H, P)
    k = Hn.shape[-1]
    gram = _herm(Hn) @ Hn + (k / P) * np.eye(k)
    return _scale_to(Hn @ np.linalg.inv(gram), P)


def solve_multiplier(lam, phi, P, tol=1e-10, max_steps=200):
    """Smallest ``mu >= 0`` with ``sum_m phi_m / (lam_m + mu)^2 <= P``.

    Entries with ``phi_m = 0`` are ignored, so ``lam_m = 0`` there is harmless.
    Uses the ``mu = 0`` shortcut when it is already feasible; otherwise a
    Newton iteration on ``1/sqrt(p(mu)) - 1/sqrt(P)`` (almost linear in
    ``mu``) safeguarded by bisection inside ``[0, sqrt(sum(phi)/P)]``.
    """
    lam = np.asarray(lam, dtype=float)
    phi = np.asarray(phi, dtype=float)
    # dead entries get a harmless denominator; their phi is already zero
    lam = np.where(phi > 0, lam, 1.0)
    mu = np.zeros(lam.shape[:-1])
    p = np.sum(phi / lam**2, axis=-1)
    active = p > P * (1.0 + tol)
    if not np.any(active):
        return mu
    # p(mu) lies between sum(phi)/(lam_max+mu)^2 and sum(phi)/(lam_min+mu)^2
    root = np.sqrt(phi.sum(axis=-1) / P)
    live = phi > 0
    lo = np.maximum(root - np.max(np.where(live, lam, 0.0), axis=-1), 0.0)
    hi = np.maximum(root - np.min(np.where(live, lam, np.inf), axis=-1), lo)
    mu = lo.copy()
    target = 1.0 / np.sqrt(P)
    for _ in range(max_steps):
        inv = 1.0 / (lam + mu[..., None])
        t = phi * inv**2
        p = t.sum(axis=-1)
        active &= np.abs(p - P) > tol * P
        if not active.any():
            break
        dp = -2.0 * np.sum(t * inv, axis=-1)
        g = p**-0.5 - target
        lo = np.where(g < 0, mu, lo)
        hi = np.where(g > 0, mu, hi)
        step = mu - g / (-0.5 * p**-1.5 * dp)
        ok = (step > lo) & (step < hi)
        mu = np.where(active, np.where(ok, step, 0.5 * (lo + hi)), mu)
        # per-entry stop keeps each batch entry independent of its neighbours
        active &= hi - lo > 1e-15 * hi
    return mu


def _transmit_update(Hn, d, b, P, cfg):
    """Power-constrained minimiser of the weighted MSE over the precoders."""
    A = (Hn * d[..., None, :]) @ _herm(Hn)
    lam, Q = np.linalg.eigh(A)
    C = _herm(Q) @ (Hn * b[..., None, :])
    top = np.max(np.abs(lam), axis=-1, keepdims=True)
    null = lam <= lam.shape[-1] * np.finfo(float).eps * top
    C = np.where(null[..., None], 0.0, C)
    phi = np.sum(C.real**2 + C.imag**2, axis=-1)
    mu = solve_multiplier(lam, phi, P, cfg.multiplier_tol, cfg.max_multiplier_steps)
    den = np.where(null, 1.0, lam + mu[..., None])
    W = Q @ (C / den[..., None])
    # numerical overshoot only; the multiplier already meets the budget
    n2 = _fro2(W)
    over = n2 > P
    if np.any(over):
        W = np.where(over[..., None, None], W * np.sqrt(P / np.where(over, n2, 1.0))[..., None, None], W)
    return W


def _stats(Hn, W):
    G = _herm(Hn) @ W
    p = G.real**2 + G.imag**2
    k = p.shape[-1]
    eye = np.eye(k, dtype=bool)
    sig = np.diagonal(p, axis1=-2, axis2=-1)
    interf = np.where(eye, 0.0, p).sum(axis=-1) + 1.0
    return np.diagonal(G, axis1=-2, axis2=-1), sig, interf


def _rate(sig, interf, weights):
    return np.log2(1.0 + sig / interf) @ weights


def _run(H, spec, P, cfg, record):
    cfg.validate()
    H = np.asarray(H, dtype=complex)
    if not np.all(np.isfinite(H)):
        raise ValueError("channel has non-finite entries")
    if not P > 0:
        raise ValueError("power budget must be positive")
    weights = spec.weights
    # normalise by the noise so every user sees unit noise
    Hn = H / np.sqrt(spec.noise)
    W = initial_precoder(H, Hn, P, cfg.init)
    trace = []
    g_kk, sig, interf = _stats(Hn, W)
    for _ in range(cfg.iterations):
        total = sig + interf
        u = g_kk / total
        v = total / interf
        d = weights * v * (u.real**2 + u.imag**2)
        b = weights * v * u
        W = _transmit_update(Hn, d, b, P, cfg)
        g_kk, sig, interf = _stats(Hn, W)
        if record:
            trace.append(_rate(sig, interf, weights))
    return W, (np.stack(trace, axis=-1) if record else _rate(sig, interf, weights))


def solve(H, spec, P, cfg=WmmseConfig()):
    """Precoder ``W`` (same shape as ``H``) with ``||W||_F^2 <= P``."""
    return _run(H, spec, P, cfg, record=False)[0]


def solve_with_rate(H, spec, P, cfg=WmmseConfig()):
    """``(W, achieved sumrate)``."""
    return _run(H, spec, P, cfg, record=False)


def rate_trace(H, spec, P, cfg=WmmseConfig()):
    """Sumrate after each WMMSE iteration, shape ``(..., T2)``."""
    return _run(H, spec, P, cfg, record=True)[1]
