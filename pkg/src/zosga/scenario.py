"""Static network descriptions and unit conversion.

A :class:`NetworkScenario` is the full static description of one experiment:
geometry, path-loss exponents, Rician factors, correlation coefficients,
power and noise budgets and the IRS element grids.  Everything is stored in
linear units; dB values only exist in the config text and are converted once
by :func:`parse_scenario`.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .varactor import VaractorCircuitSpec

IRS_MODES = ("ideal", "physical")


class ConfigError(ValueError):
    """Raised for invalid or inconsistent scenario configuration."""


def db_to_linear(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def dbm_to_watts(x_dbm):
    return 10.0 ** ((np.asarray(x_dbm, dtype=float) - 30.0) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(x)


@dataclass(frozen=True)
class PathLossSpec:
    """Distance-based amplitude loss ``sqrt(c0 * d**-alpha)`` per link type."""

    c0: float
    alpha_ap_user: float
    alpha_irs_user: float
    alpha_ap_irs: float

    def validate(self):
        if not self.c0 > 0:
            raise ConfigError("reference path loss must be positive in linear scale")
        for name in ("alpha_ap_user", "alpha_irs_user", "alpha_ap_irs"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"path-loss exponent {name} must be positive")


@dataclass(frozen=True)
class RicianSpec:
    """Rician factors (linear) of the three link types; ``inf`` means pure LOS."""

    beta_ap_user: float
    beta_irs_user: float
    beta_ap_irs: float

    def validate(self):
        for name in ("beta_ap_user", "beta_irs_user", "beta_ap_irs"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"Rician factor {name} must be >= 0")


@dataclass(frozen=True)
class CorrelationSpec:
    """Exponential correlation coefficients.

    ``r_d`` is the AP transmit coefficient, ``r_r`` the IRS receive coefficient
    and ``r_rk`` holds one reflected-channel coefficient per user.
    """

    r_d: float
    r_r: float
    r_rk: tuple

    def validate(self, n_users):
        for r in (self.r_d, self.r_r, *self.r_rk):
            if not 0.0 <= r < 1.0:
                raise ConfigError(f"correlation coefficient {r} outside [0, 1)")
        if len(self.r_rk) != n_users:
            raise ConfigError("need one reflected-channel correlation coefficient per user")


@dataclass(frozen=True)
class ApSite:
    position: tuple
    antennas: int


@dataclass(frozen=True)
class IrsSite:
    position: tuple
    ap: int
    columns: int  # N_h
    rows: int  # N_v
    mode: str = "ideal"

    @property
    def n_elements(self):
        return self.columns * self.rows

    @property
    def n_params(self):
        return 2 * self.n_elements if self.mode == "ideal" else self.n_elements


@dataclass(frozen=True)
class NetworkScenario:
    name: str
    user_positions: tuple  # K x 3, meters
    weights: tuple  # alpha_k
    noise_power: tuple  # sigma_k^2, watts
    power_budget: float  # watts
    aps: tuple
    irs: tuple
    path_loss: PathLossSpec
    rician: RicianSpec
    correlation: CorrelationSpec
    varactor: VaractorCircuitSpec = field(default_factory=VaractorCircuitSpec)
    note: str = ""

    @property
    def n_users(self):
        return len(self.user_positions)

    @property
    def n_antennas(self):
        """Total transmit dimension: antennas stacked over all APs."""
        return sum(ap.antennas for ap in self.aps)

    @property
    def n_params(self):
        return sum(s.n_params for s in self.irs)

    def ap_rows(self):
        """Row slice of each AP inside the stacked effective channel."""
        out, start = [], 0
        for ap in self.aps:
            out.append(slice(start, start + ap.antennas))
            start += ap.antennas
        return tuple(out)

    def distances(self):
        """Return ``(d_ap_user[K, A], d_irs_user[K, I], d_ap_irs[I])`` in meters."""
        users = np.asarray(self.user_positions, dtype=float)
        aps = np.asarray([a.position for a in self.aps], dtype=float)
        irs = np.asarray([s.position for s in self.irs], dtype=float).reshape(-1, 3)
        d_au = np.linalg.norm(users[:, None, :] - aps[None, :, :], axis=-1)
        d_iu = np.linalg.norm(users[:, None, :] - irs[None, :, :], axis=-1)
        d_ai = np.array([np.linalg.norm(np.asarray(s.position, float) - aps[s.ap]) for s in self.irs])
        return d_au, d_iu, d_ai

    def validate(self):
        k = self.n_users
        if k < 1:
            raise ConfigError("scenario needs at least one user")
        if len(self.weights) != k or len(self.noise_power) != k:
            raise ConfigError("weights and noise powers need one entry per user")
        if min(self.weights) < 0 or max(self.weights) <= 0:
            raise ConfigError("user weights must be >= 0 with at least one positive")
        if min(self.noise_power) <= 0:
            raise ConfigError("noise powers must be strictly positive")
        if not self.power_budget > 0:
            raise ConfigError("power budget must be positive")
        if not self.aps:
            raise ConfigError("scenario needs at least one AP")
        for ap in self.aps:
            if ap.antennas < 1:
                raise ConfigError("AP antenna count must be >= 1")
        for s in self.irs:
            if s.mode not in IRS_MODES:
                raise ConfigError(f"unknown IRS mode {s.mode!r}")
            if s.columns < 1 or s.rows < 1:
                raise ConfigError("IRS grid needs positive rows and columns")
            if not 0 <= s.ap < len(self.aps):
                raise ConfigError(f"IRS attached to unknown AP {s.ap}")
        self.path_loss.validate()
        self.rician.validate()
        self.correlation.validate(k)
        d_au, d_iu, d_ai = self.distances()
        if d_au.size and d_au.min() <= 0 or d_iu.size and d_iu.min() <= 0 or d_ai.size and d_ai.min() <= 0:
            raise ConfigError("all link distances must be positive")
        if any(s.mode == "physical" for s in self.irs):
            self.varactor.validate()
        return self

    # convenience overrides used by the experiment designs

    def with_irs_mode(self, mode):
        return dataclasses.replace(
            self, irs=tuple(dataclasses.replace(s, mode=mode) for s in self.irs)
        ).validate()

    def with_rician(self, **kwargs):
        return dataclasses.replace(self, rician=dataclasses.replace(self.rician, **kwargs)).validate()

    def with_correlation(self, r_d=None, r_r=None, r_rk=None):
        c = self.correlation
        if r_rk is not None and np.isscalar(r_rk):
            r_rk = (float(r_rk),) * self.n_users
        c = CorrelationSpec(
            r_d=c.r_d if r_d is None else float(r_d),
            r_r=c.r_r if r_r is None else float(r_r),
            r_rk=c.r_rk if r_rk is None else tuple(float(x) for x in r_rk),
        )
        return dataclasses.replace(self, correlation=c).validate()

    def uncorrelated(self):
        return self.with_correlation(0.0, 0.0, 0.0)

    def digest(self):
        """Stable hash of the parsed (linear-unit) scenario."""
        return _digest(dataclasses.asdict(self))


def _digest(obj):
    text = json.dumps(obj, sort_keys=True, default=_json_default, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _json_default(obj):
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj)}")


def _complex(value):
    if isinstance(value, (list, tuple)):
        re, im = value
        return complex(float(re), float(im))
    return complex(value)


def _per_user(value, k, what):
    if np.isscalar(value):
        return (float(value),) * k
    value = tuple(float(v) for v in value)
    if len(value) != k:
        raise ConfigError(f"{what}: expected {k} entries, got {len(value)}")
    return value


def parse_varactor(d):
    d = dict(d or {})
    kw = {}
    mapping = {
        "resistance_ohm": ("resistance", 1.0),
        "inductance_nh": ("inductance", 1e-9),
        "frequency_ghz": ("frequency", 1e9),
        "capacitance_min_pf": ("capacitance_min", 1e-12),
        "capacitance_max_pf": ("capacitance_max", 1e-12),
        "free_space_impedance_ohm": ("free_space_impedance", 1.0),
        "substrate_permittivity": ("substrate_permittivity", 1.0),
        "substrate_thickness_mm": ("substrate_thickness", 1e-3),
    }
    for key, (attr, scale) in mapping.items():
        if key in d:
            kw[attr] = float(d.pop(key)) * scale
    if "incidence_angle_deg" in d:
        kw["incidence_angle"] = math.radians(float(d.pop("incidence_angle_deg")))
    for key, attr in (("patch_impedance_ohm", "patch_impedance"), ("slab_impedance_ohm", "slab_impedance")):
        if key in d:
            kw[attr] = _complex(d.pop(key))
    for key in ("reactance_sign", "slab_model"):
        if key in d:
            kw[key] = str(d.pop(key))
    if d:
        raise ConfigError(f"unknown varactor keys: {sorted(d)}")
    return VaractorCircuitSpec(**kw)


SCENARIO_KEYS = {
    "name", "note", "power_budget_dbm", "users", "access_points", "irs",
    "path_loss", "rician", "correlation", "varactor",
}


def parse_scenario(d):
    """Build a validated :class:`NetworkScenario` from a parsed config mapping.

    All dB / dBm quantities are converted to linear units here and nowhere else.
    """
    unknown = set(d) - SCENARIO_KEYS
    if unknown:
        raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
    try:
        users = d["users"]
        positions = tuple(tuple(float(x) for x in p) for p in users["positions_m"])
        k = len(positions)
        weights = _per_user(users.get("weights", 1.0), k, "weights")
        noise = tuple(float(x) for x in dbm_to_watts(_per_user(users["noise_power_dbm"], k, "noise_power_dbm")))
        aps = tuple(
            ApSite(position=tuple(float(x) for x in a["position_m"]), antennas=int(a["antennas"]))
            for a in d["access_points"]
        )
        irs = tuple(
            IrsSite(
                position=tuple(float(x) for x in s["position_m"]),
                ap=int(s.get("access_point", 0)),
                columns=int(s["columns"]),
                rows=int(s["rows"]),
                mode=str(s.get("mode", "ideal")),
            )
            for s in d.get("irs", [])
        )
        pl = d["path_loss"]
        path_loss = PathLossSpec(
            c0=float(db_to_linear(pl["reference_loss_db"])),
            alpha_ap_user=float(pl["exponent_ap_user"]),
            alpha_irs_user=float(pl["exponent_irs_user"]),
            alpha_ap_irs=float(pl["exponent_ap_irs"]),
        )
        ri = d["rician"]
        rician = RicianSpec(
            beta_ap_user=float(db_to_linear(ri["ap_user_db"])),
            beta_irs_user=float(db_to_linear(ri["irs_user_db"])),
            beta_ap_irs=float(db_to_linear(ri["ap_irs_db"])),
        )
        co = d.get("correlation", {})
        correlation = CorrelationSpec(
            r_d=float(co.get("ap_transmit", 0.0)),
            r_r=float(co.get("irs_receive", 0.0)),
            r_rk=_per_user(co.get("irs_user", 0.0), k, "correlation.irs_user"),
        )
        scenario = NetworkScenario(
            name=str(d.get("name", "unnamed")),
            user_positions=positions,
            weights=weights,
            noise_power=noise,
            power_budget=float(dbm_to_watts(d["power_budget_dbm"])),
            aps=aps,
            irs=irs,
            path_loss=path_loss,
            rician=rician,
            correlation=correlation,
            varactor=parse_varactor(d.get("varactor")),
            note=str(d.get("note", "")),
        )
    except KeyError as exc:
        raise ConfigError(f"missing scenario key: {exc}") from None
    return scenario.validate()
