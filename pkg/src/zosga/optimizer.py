"""Zeroth-order stochastic gradient ascent over static IRS parameters.

Each iteration draws a channel realization, solves the precoder problem at the
current IRS parameters, probes the effective channel at ``theta +- mu*U`` and
combines the channel difference with the analytic sumrate cogradient into a
gradient surrogate.  The random-IRS baseline is the same loop with the IRS
frozen at a uniform draw from the box.

Many independent runs advance together as a batch.  Every run owns its own
random streams, so a run's trace does not depend on which batch it sits in.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import wmmse
from .channel import ChannelModel, StatisticalCsi
from .network import IrsLayout, UtilitySpec, effective_channel, sumrate, sumrate_cograd
from .scenario import ConfigError

ALGORITHMS = ("zosga", "random-irs")
RETURN_POLICIES = ("final", "randomized")
STREAMS = ("scsi", "icsi", "direction", "init", "return")


@dataclass(frozen=True)
class ZosgaConfig:
    mu: float = 1e-12
    eta_phase: float = 0.4
    eta_amplitude: float = 0.01
    eta_capacitance: float = 0.1  # pF, i.e. 1e-13 F
    decay: float = 0.9972
    decay_horizon: int = 1000
    iterations: int = 20000
    return_policy: str = "final"
    seed: int = 0

    def validate(self):
        if not self.mu > 0:
            raise ConfigError("smoothing parameter mu must be positive")
        if min(self.eta_phase, self.eta_amplitude, self.eta_capacitance) < 0:
            raise ConfigError("base step sizes must be nonnegative")
        if not 0 < self.decay <= 1:
            raise ConfigError("step decay must lie in (0, 1]")
        if self.decay_horizon < 0 or self.iterations < 1:
            raise ConfigError("need decay_horizon >= 0 and iterations >= 1")
        if self.return_policy not in RETURN_POLICIES:
            raise ConfigError(f"unknown return policy {self.return_policy!r}")
        return self

    def digest(self):
        return _hash(dataclasses.asdict(self))


def _hash(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def decay_factor(t, decay, horizon):
    """``decay**t`` up to ``t = horizon``, frozen afterwards."""
    return decay ** min(int(t), int(horizon))


def step_size(t, eta0, cfg):
    return eta0 * decay_factor(t, cfg.decay, cfg.decay_horizon)


def run_streams(master_seed, run_index):
    """Independent generators per (run, purpose), split from one master seed."""
    return {
        name: np.random.Generator(np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=(run_index, j))))
        for j, name in enumerate(STREAMS)
    }


def sample_direction(rng, size):
    """Gaussian smoothing direction ``U ~ N(0, I)``."""
    return rng.standard_normal(size)


@dataclass
class GradientSample:
    D: np.ndarray
    U: np.ndarray
    H_plus: np.ndarray
    H_minus: np.ndarray


def estimate_gradient(channel, theta, W, U, mu, spec, H=None):
    """Two-point zeroth-order surrogate of the sumrate gradient.

    ``channel`` maps parameters to the effective channel and is the only
    access to ``H``.  The cogradient sits at the unperturbed channel and
    ``D = U * Re(sum(cograd * (H(theta+mu U) - H(theta-mu U)))) / mu``, which
    equals ``Delta^R Re(cograd) + Delta^I Re(j cograd)`` entry by entry.
    Leading batch dimensions of ``theta``/``W``/``U`` broadcast.
    """
    if not mu > 0:
        raise ConfigError("smoothing parameter mu must be positive")
    theta = np.asarray(theta, dtype=float)
    U = np.asarray(U, dtype=float)
    if H is None:
        H = channel(theta)
    c = sumrate_cograd(W, H, spec)
    H_plus = channel(theta + mu * U)
    H_minus = channel(theta - mu * U)
    dH = H_plus - H_minus
    s = np.sum(c.real * dH.real - c.imag * dH.imag, axis=(-2, -1)) / mu
    return GradientSample(D=U * s[..., None], U=U, H_plus=H_plus, H_minus=H_minus)


@dataclass
class RunTrace:
    """Per-iteration sumrate of one run plus provenance."""

    algorithm: str
    run_index: int
    master_seed: int
    rates: np.ndarray
    scenario_hash: str
    config_hash: str
    schedule: dict
    scsi_digest: str
    scsi_digest_end: str
    theta_initial: np.ndarray
    theta_final: np.ndarray
    theta_returned: np.ndarray
    t_star: int
    channel_evaluations: int
    wall_time: np.ndarray = field(repr=False)  # per-iteration wall time of the whole batch
    batch_size: int = 1

    def final_rate(self, frac=0.05):
        return final_rate(self.rates, frac)


def final_rate(rates, frac=0.05):
    """Mean over the last ``frac`` share of a trace (at least one sample)."""
    rates = np.asarray(rates)
    n = max(1, int(round(frac * rates.shape[-1])))
    return rates[..., -n:].mean(axis=-1)


def schedule_record(cfg):
    return {
        "eta_phase": cfg.eta_phase,
        "eta_amplitude": cfg.eta_amplitude,
        "eta_capacitance_pf": cfg.eta_capacitance,
        "decay": cfg.decay,
        "decay_horizon": cfg.decay_horizon,
        "mu": cfg.mu,
    }


def simulate(scenario, zcfg, wcfg, jobs, theta0=None, clock=time.perf_counter):
    """Run a batch of independent jobs in lockstep.

    ``jobs`` is a sequence of ``(run_index, algorithm)`` pairs.  Runs with the
    same index share S-CSI and I-CSI draws whichever algorithm they use, so
    ZoSGA and the baseline see identical channels.  ``theta0`` optionally
    overrides the starting point of every job (shape ``(S,)`` or ``(B, S)``).
    Returns one :class:`RunTrace` per job.
    """
    zcfg.validate()
    wcfg.validate()
    jobs = [(int(r), str(a)) for r, a in jobs]
    for _, a in jobs:
        if a not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {a!r}")
    B = len(jobs)
    T = zcfg.iterations
    model = ChannelModel(scenario)
    layout = IrsLayout(scenario)
    spec = UtilitySpec.from_scenario(scenario)
    P = scenario.power_budget
    S = layout.size

    streams = [run_streams(zcfg.seed, r) for r, _ in jobs]
    per_run = [model.draw_scsi(s["scsi"]) for s in streams]
    scsi_digest = [x.digest() for x in per_run]
    scsi = StatisticalCsi.stack(per_run)

    zo = np.array([a == "zosga" for _, a in jobs])
    theta = np.empty((B, S))
    for b, (s, (_, a)) in enumerate(zip(streams, jobs)):
        theta[b] = layout.initial() if a == "zosga" else layout.random(s["init"])
    if theta0 is not None:
        theta[:] = np.broadcast_to(np.asarray(theta0, dtype=float), (B, S))
    if not layout.contains(theta):
        raise ConfigError("starting point outside the feasible box")
    theta_initial = theta.copy()
    base = layout.step_scales(zcfg.eta_phase, zcfg.eta_amplitude, zcfg.eta_capacitance)
    scales = np.where(zo[:, None], base, 0.0)

    # return index t* in {0..T} with P(t* = t) proportional to eta_t; theta_{t*} is kept
    t_star = np.full(B, T)
    if zcfg.return_policy == "randomized":
        w = np.array([decay_factor(t, zcfg.decay, zcfg.decay_horizon) for t in range(T + 1)])
        w /= w.sum()
        t_star = np.array([s["return"].choice(T + 1, p=w) for s in streams])
    theta_returned = theta.copy()

    icsi = [s["icsi"] for s in streams]
    dirs = [s["direction"] for s in streams]
    rates = np.empty((B, T))
    wall = np.empty(T)
    evaluations = np.zeros(B, dtype=int)

    def probe(th):
        return effective_channel(real, th, layout, strict=False)

    any_zo = bool(zo.any())
    for t in range(T):
        t0 = clock()
        real = model.draw_realization(scsi, icsi)
        H = effective_channel(real, theta, layout)
        evaluations += 1
        W = wmmse.solve(H, spec, P, wcfg)
        rates[:, t] = sumrate(W, H, spec)
        if any_zo:
            U = np.stack([sample_direction(g, S) if z else np.zeros(S) for g, z in zip(dirs, zo)])
            sample = estimate_gradient(probe, theta, W, U, zcfg.mu, spec, H=H)
            evaluations += 2 * zo
            theta = layout.project(theta + decay_factor(t, zcfg.decay, zcfg.decay_horizon) * scales * sample.D)
            if not layout.contains(theta):
                raise AssertionError("iterate left the feasible box")
            hit = t_star == t + 1
            if hit.any():
                theta_returned[hit] = theta[hit]
        wall[t] = clock() - t0
    if zcfg.return_policy == "final":
        theta_returned = theta.copy()

    sched = schedule_record(zcfg)
    cfg_hash = _hash({"zosga": dataclasses.asdict(zcfg), "wmmse": dataclasses.asdict(wcfg)})
    scen_hash = scenario.digest()
    out = []
    for b, (r, a) in enumerate(jobs):
        end = StatisticalCsi(F=tuple(f[b] for f in scsi.F), v_r=tuple(v[b] for v in scsi.v_r), v_d=scsi.v_d[b])
        out.append(
            RunTrace(
                algorithm=a,
                run_index=r,
                master_seed=zcfg.seed,
                rates=rates[b].copy(),
                scenario_hash=scen_hash,
                config_hash=cfg_hash,
                schedule=sched,
                scsi_digest=scsi_digest[b],
                scsi_digest_end=end.digest(),
                theta_initial=theta_initial[b],
                theta_final=theta[b].copy(),
                theta_returned=theta_returned[b].copy() if a == "zosga" else theta[b].copy(),
                t_star=int(t_star[b]) if a == "zosga" else T,
                channel_evaluations=int(evaluations[b]),
                wall_time=wall.copy(),
                batch_size=B,
            )
        )
    return out


def run(scenario, zcfg, wcfg, run_index=0, theta0=None):
    """One ZoSGA run; returns ``(theta, RunTrace)`` with ``theta`` per the return policy."""
    tr = simulate(scenario, zcfg, wcfg, [(run_index, "zosga")], theta0=theta0)[0]
    return tr.theta_returned, tr


def run_baseline_random_irs(scenario, zcfg, wcfg, run_index=0, theta0=None):
    """WMMSE with the IRS frozen at a uniform random draw (or ``theta0``)."""
    return simulate(scenario, zcfg, wcfg, [(run_index, "random-irs")], theta0=theta0)[0]


def expected_sumrate(scenario, theta, realizations, wcfg=wmmse.WmmseConfig()):
    """Sample-average sumrate of fixed IRS parameters over given realizations."""
    layout = IrsLayout(scenario)
    spec = UtilitySpec.from_scenario(scenario)
    H = effective_channel(realizations, theta, layout)
    W = wmmse.solve(H, spec, scenario.power_budget, wcfg)
    return sumrate(W, H, spec).mean(axis=-1)
