"""Transmission-line model of a varactor-loaded IRS element.

The chain is capacitance -> varactor impedance -> surface impedance (patch in
parallel with varactor) -> input impedance (surface in parallel with the
grounded slab) -> reflection coefficient against free space.  TM incidence
only; every element of one IRS shares the same circuit (uniform Floquet cell).

Numeric circuit constants are reconstructions, not measured values.  They put
the parallel resonance near the middle of the capacitance box, so the phase
sweeps about 290 degrees smoothly over the box; a 1 ohm series loss drops the
amplitude to about 0.95 near resonance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FREE_SPACE_IMPEDANCE = 376.730313668
SPEED_OF_LIGHT = 299792458.0


class CircuitError(ValueError):
    """Degenerate circuit (parallel-sum singularity) or out-of-domain input."""


@dataclass(frozen=True)
class VaractorCircuitSpec:
    resistance: float = 1.0  # ohm
    inductance: float = 0.7e-9  # henry
    frequency: float = 1.0e9  # hertz
    patch_impedance: complex = -530.5164769729845j  # 0.3 pF patch grid at 1 GHz
    slab_impedance: complex = 100.0j  # inductive grounded slab
    free_space_impedance: float = FREE_SPACE_IMPEDANCE
    capacitance_min: float = 0.2e-12  # farad
    capacitance_max: float = 3.0e-12
    # "physical": Z = R + jwL - j/(wC); "as_printed": Z = R + jwL + j/(wC)
    reactance_sign: str = "physical"
    # "fixed" uses slab_impedance; "grounded_slab" derives it from the substrate
    slab_model: str = "fixed"
    substrate_permittivity: float = 4.4
    substrate_thickness: float = 11.5e-3  # meter
    incidence_angle: float = 0.0  # radian

    @property
    def omega(self):
        return 2.0 * np.pi * self.frequency

    def validate(self):
        if self.resistance < 0 or self.inductance < 0:
            raise CircuitError("varactor R and L must be nonnegative")
        if not self.frequency > 0 or not self.free_space_impedance > 0:
            raise CircuitError("frequency and free-space impedance must be positive")
        if not 0 < self.capacitance_min < self.capacitance_max:
            raise CircuitError("capacitance box must satisfy 0 < C_min < C_max")
        if self.reactance_sign not in ("physical", "as_printed"):
            raise CircuitError(f"unknown reactance_sign {self.reactance_sign!r}")
        if self.slab_model not in ("fixed", "grounded_slab"):
            raise CircuitError(f"unknown slab_model {self.slab_model!r}")
        return self


def _sign(spec):
    return -1.0 if spec.reactance_sign == "physical" else 1.0


def parallel(za, zb):
    """Impedance of two branches in parallel, ``za*zb/(za+zb)``."""
    za = np.asarray(za, dtype=complex)
    zb = np.asarray(zb, dtype=complex)
    den = za + zb
    if np.any(den == 0):
        raise CircuitError("parallel combination is singular (za + zb == 0)")
    return za * zb / den


def grounded_slab_impedance(spec):
    """TM input impedance of a short-circuited dielectric slab."""
    er = spec.substrate_permittivity
    s2 = np.sin(spec.incidence_angle) ** 2
    k0 = spec.omega / SPEED_OF_LIGHT
    kz = k0 * np.sqrt(er - s2)
    z_tm = spec.free_space_impedance * np.sqrt(er - s2) / er
    return 1j * z_tm * np.tan(kz * spec.substrate_thickness)


def slab_impedance(spec):
    if spec.slab_model == "grounded_slab":
        return complex(grounded_slab_impedance(spec))
    return complex(spec.slab_impedance)


def varactor_impedance(c, spec):
    """Series RLC impedance of the varactor at the operating frequency."""
    c = np.asarray(c, dtype=float)
    if np.any(c <= 0):
        raise CircuitError("capacitance must be positive")
    w = spec.omega
    return spec.resistance + 1j * w * spec.inductance + _sign(spec) * 1j / (w * c)


def surface_impedance(c, spec):
    return parallel(spec.patch_impedance, varactor_impedance(c, spec))


def input_impedance(c, spec):
    return parallel(surface_impedance(c, spec), slab_impedance(spec))


def phase_shift_coefficient(c, spec):
    """Complex reflection coefficient ``(Zv - z0)/(Zv + z0)`` of one element."""
    zv = input_impedance(c, spec)
    z0 = spec.free_space_impedance
    den = zv + z0
    if np.any(den == 0):
        raise CircuitError("input impedance equals -z0")
    return (zv - z0) / den


def phase_shift_derivative(c, spec):
    """Derivative of :func:`phase_shift_coefficient` with respect to ``c`` (per farad)."""
    c = np.asarray(c, dtype=float)
    w = spec.omega
    z_var = varactor_impedance(c, spec)
    zp = spec.patch_impedance
    zd = slab_impedance(spec)
    z_s = parallel(zp, z_var)
    z_v = parallel(z_s, zd)
    z0 = spec.free_space_impedance
    d_var = -_sign(spec) * 1j / (w * c**2)
    d_s = zp**2 / (zp + z_var) ** 2 * d_var
    d_v = zd**2 / (z_s + zd) ** 2 * d_s
    return 2.0 * z0 / (z_v + z0) ** 2 * d_v


def map_irs(c_var, spec):
    """Element-wise reflection coefficients for a vector of capacitances (farads)."""
    c_var = np.asarray(c_var, dtype=float)
    # small relative slack so a projected box edge never trips the check
    slack = 1e-12 * spec.capacitance_max
    if np.any(c_var < spec.capacitance_min - slack) or np.any(c_var > spec.capacitance_max + slack):
        raise CircuitError("capacitance outside the varactor box; project before mapping")
    return phase_shift_coefficient(c_var, spec)


def sweep(spec, n=1000):
    """Sample the coefficient over the capacitance box.

    Returns an array with columns ``C, Re, Im, |theta|, arg(theta)``.
    """
    c = np.linspace(spec.capacitance_min, spec.capacitance_max, n)
    g = phase_shift_coefficient(c, spec)
    return np.column_stack([c, g.real, g.imag, np.abs(g), np.angle(g)])
