"""Experiment files: scenario plus optimizer, oracle and harness settings.

Experiment files are YAML.  Keys carry their unit in the name
(``power_budget_dbm``, ``positions_m``, ...); conversion to linear units
happens once in :func:`parse_scenario`.  The SHA-256 of the raw file text is
kept so every output can be traced back to the exact input.
"""
from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .optimizer import ZosgaConfig
from .scenario import ConfigError, NetworkScenario, parse_scenario
from .wmmse import WmmseConfig

CATALOG = ("fig3a", "fig3c", "fig4", "fig6a", "fig6bc")


@dataclass(frozen=True)
class HarnessConfig:
    runs: int = 40
    master_seed: int = 0
    chunk_size: int = 40
    smoothing_window: int = 500
    smoothing_order: int = 4
    final_fraction: float = 0.05

    def validate(self):
        if self.runs < 1 or self.chunk_size < 1:
            raise ConfigError("runs and chunk_size must be >= 1")
        if self.smoothing_order < 0 or self.smoothing_window < 1:
            raise ConfigError("invalid smoothing settings")
        if not 0 < self.final_fraction <= 1:
            raise ConfigError("final_fraction must lie in (0, 1]")
        return self


@dataclass(frozen=True)
class Experiment:
    name: str
    scenario: NetworkScenario
    zosga: ZosgaConfig = field(default_factory=ZosgaConfig)
    wmmse: WmmseConfig = field(default_factory=WmmseConfig)
    harness: HarnessConfig = field(default_factory=HarnessConfig)
    source_hash: str = ""

    def replace(self, **kw):
        """Copy with overrides; ``iterations``/``seed``/``runs`` etc. route to their section."""
        z = {k: kw.pop(k) for k in list(kw) if k in {f.name for f in dataclasses.fields(ZosgaConfig)}}
        w = {k[len("wmmse_"):]: kw.pop(k) for k in list(kw) if k.startswith("wmmse_")}
        h = {k: kw.pop(k) for k in list(kw) if k in {f.name for f in dataclasses.fields(HarnessConfig)}}
        out = dataclasses.replace(
            self,
            zosga=dataclasses.replace(self.zosga, **z).validate(),
            wmmse=dataclasses.replace(self.wmmse, **w).validate(),
            harness=dataclasses.replace(self.harness, **h).validate(),
        )
        return dataclasses.replace(out, **kw)


def _section(d, key, mapping, cls):
    raw = dict(d.get(key) or {})
    kw = {}
    for src, (dst, conv) in mapping.items():
        if src in raw:
            kw[dst] = conv(raw.pop(src))
    if raw:
        raise ConfigError(f"unknown keys in {key}: {sorted(raw)}")
    return cls(**kw).validate()


def parse_experiment(d, source_hash=""):
    if not isinstance(d, dict):
        raise ConfigError("experiment file must hold a mapping")
    d = dict(d)
    zosga = _section(
        d,
        "zosga",
        {
            "smoothing": ("mu", float),
            "eta_phase": ("eta_phase", float),
            "eta_amplitude": ("eta_amplitude", float),
            "eta_capacitance_pf": ("eta_capacitance", float),
            "decay": ("decay", float),
            "decay_horizon": ("decay_horizon", int),
            "iterations": ("iterations", int),
            "return_policy": ("return_policy", str),
        },
        ZosgaConfig,
    )
    wm = _section(
        d,
        "wmmse",
        {"iterations": ("iterations", int), "multiplier_tol": ("multiplier_tol", float), "init": ("init", str)},
        WmmseConfig,
    )
    harness = _section(
        d,
        "harness",
        {
            "runs": ("runs", int),
            "master_seed": ("master_seed", int),
            "chunk_size": ("chunk_size", int),
            "smoothing_window": ("smoothing_window", int),
            "smoothing_order": ("smoothing_order", int),
            "final_fraction": ("final_fraction", float),
        },
        HarnessConfig,
    )
    zosga = dataclasses.replace(zosga, seed=harness.master_seed)
    for key in ("zosga", "wmmse", "harness"):
        d.pop(key, None)
    scenario = parse_scenario(d)
    return Experiment(scenario.name, scenario, zosga, wm, harness, source_hash)


def parse_text(text):
    data = yaml.safe_load(text)
    return parse_experiment(data, hashlib.sha256(text.encode()).hexdigest())


def load_experiment(ref):
    """Load a catalog name (``fig3a``) or a path to an experiment file."""
    path = Path(ref)
    if path.suffix in (".yaml", ".yml") or path.exists():
        if not path.exists():
            raise ConfigError(f"no such experiment file: {ref}")
        return parse_text(path.read_text())
    if ref not in CATALOG:
        raise ConfigError(f"unknown scenario {ref!r}; catalog has {', '.join(CATALOG)}")
    return parse_text(resources.files("zosga").joinpath("scenarios", f"{ref}.yaml").read_text())


def scenario_catalog():
    """All catalog scenarios by name."""
    return {name: load_experiment(name).scenario for name in CATALOG}


def synthetic_scenario(n_users=4, n_antennas=6, n_elements=40, mode="ideal", base="fig3a"):
    """Scaled variant of a catalog scenario for benchmarks and small tests.

    Users sit on a 1 m ring around the base cluster centre and the IRS becomes
    a single column of ``n_elements``.  Channel constants come from ``base``.
    """
    sc = load_experiment(base).scenario
    cx, cy, cz = np.mean(np.asarray(sc.user_positions, dtype=float), axis=0)
    ang = 2 * np.pi * np.arange(n_users) / n_users + np.pi / 4
    users = tuple((float(cx + np.cos(a)), float(cy + np.sin(a)), float(cz)) for a in ang)
    ap = dataclasses.replace(sc.aps[0], antennas=int(n_antennas))
    irs = dataclasses.replace(sc.irs[0], columns=1, rows=int(n_elements), mode=mode)
    out = dataclasses.replace(
        sc,
        name=f"synthetic-K{n_users}-M{n_antennas}-N{n_elements}",
        user_positions=users,
        weights=(sc.weights[0],) * n_users,
        noise_power=(sc.noise_power[0],) * n_users,
        aps=(ap,),
        irs=(irs,),
    )
    out = dataclasses.replace(out, correlation=dataclasses.replace(out.correlation, r_rk=(sc.correlation.r_rk[0],) * n_users))
    return out.validate()
