"""Two-slit fringes with bath-induced loss of visibility.

Two waves leaving slits at +-d reach a screen at distance L with transverse
momenta differing by kappa = 2 k d / L after a flight time tau = m L / k.
Their interference term is an off-diagonal density-matrix element at
momentum transfer kappa, damped by exp(-Theta kappa^2 tau).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .density_matrix import GridDensityMatrix, MomentumGrid, ir_decoherence_factor, propagate
from .observables import charge_density
from .units import ALPHA, ELECTRON_MASS_EV, LabQuantity, PhysicalParams, to_natural, unit_factor

PARAXIAL_FRACTION = 0.1
NONREL_FRACTION = 0.1


@dataclass(frozen=True)
class TwoSlitGeometry:
    """Slit half-spacing ``d`` and screen distance ``L`` (eV^-1), incident momentum ``k`` (eV)."""

    d: float
    L: float
    k: float

    def __post_init__(self):
        for name in ("d", "L", "k"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite")
        if self.L < 100 * self.d:
            raise ValueError("far-field geometry requires L >= 100 d")

    @property
    def kappa(self) -> float:
        """Fringe wavenumber 2 k d / L."""
        return 2 * self.k * self.d / self.L

    def flight_time(self, m: float) -> float:
        return m * self.L / self.k

    @classmethod
    def from_energy(cls, d: float, L: float, energy: float, m: float) -> "TwoSlitGeometry":
        """Geometry for a nonrelativistic kinetic energy ``energy``: k = sqrt(2 m energy)."""
        return cls(d, L, math.sqrt(2 * m * energy))


def _check_nonrel(geom: TwoSlitGeometry, params: PhysicalParams):
    if geom.k > NONREL_FRACTION * params.m:
        raise ValueError("incident momentum must satisfy k <= 0.1 m")


def visibility_exponent(geom: TwoSlitGeometry, params: PhysicalParams) -> float:
    """(2 alpha T L / (3 m k)) kappa^2."""
    return 2 * params.alpha * params.T * geom.L / (3 * params.m * geom.k) * geom.kappa ** 2


def visibility(geom: TwoSlitGeometry, params: PhysicalParams) -> float:
    """V = exp(-(2 alpha T L / 3 m k) kappa^2), taken from the density-matrix damping factor."""
    _check_nonrel(geom, params)
    v = float(ir_decoherence_factor(geom.kappa ** 2, geom.flight_time(params.m), params))
    direct = math.exp(-visibility_exponent(geom, params))
    if abs(v - direct) > 1e-12 * max(direct, 1e-300):
        raise ArithmeticError("damping factor and visibility formula disagree")
    return v


def pattern(geom: TwoSlitGeometry, params: PhysicalParams, x):
    """Screen intensity 1 + V cos(kappa x), normalised to unit mean."""
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > PARAXIAL_FRACTION * geom.L):
        raise ValueError("x outside the paraxial window |x| <= L/10")
    out = 1.0 + visibility(geom, params) * np.cos(geom.kappa * x)
    return out if out.ndim else float(out)


def fringe_visibility(samples) -> float:
    """(max - min) / (max + min) of intensity samples."""
    s = np.asarray(samples, dtype=float)
    hi, lo = float(np.max(s)), float(np.min(s))
    if hi + lo <= 0:
        raise ValueError("intensity samples must have positive mean")
    return (hi - lo) / (hi + lo)


def period_samples(kappa: float, n: int = 1024) -> np.ndarray:
    """``n`` points covering one fringe period [0, 2 pi / kappa)."""
    return np.arange(n) * (2 * math.pi / kappa / n)


def two_wave_state(kappa: float) -> GridDensityMatrix:
    """Equal-weight superposition of plane waves with transverse momenta -kappa/2 and +kappa/2 (1-D comb)."""
    two_pi = 2 * math.pi
    q_grid = MomentumGrid((np.array([-kappa / 2, kappa / 2]),), (np.full(2, two_pi),), discrete=True)
    p_grid = MomentumGrid((np.array([-kappa, 0.0, kappa]),), (np.full(3, two_pi),), discrete=True)
    values = np.array([[0.0, 0.5, 0.5],
                       [0.5, 0.5, 0.0]], dtype=complex)
    return GridDensityMatrix(q_grid, p_grid, values=values)


def pipeline_visibility(geom: TwoSlitGeometry, params: PhysicalParams, n_samples: int = 1024) -> float:
    """Visibility from the full state pipeline: superposition -> propagate -> charge density -> max/min."""
    _check_nonrel(geom, params)
    rho = propagate(two_wave_state(geom.kappa), geom.flight_time(params.m), params)
    x = period_samples(geom.kappa, n_samples)
    return fringe_visibility(charge_density(rho, x[:, None]))


# ---------------------------------------------------------------------------
# laboratory threshold


def threshold_variable(T_K: float, L_cm: float, eps_eV: float, r_cm: float) -> float:
    """X = T L / (sqrt(eps) r^2) in K / (cm eV^{1/2})."""
    for v in (T_K, L_cm, eps_eV, r_cm):
        if not (v > 0 and math.isfinite(v)):
            raise ValueError("threshold inputs must be positive and finite")
    return T_K * L_cm / (math.sqrt(eps_eV) * r_cm ** 2)


def threshold_constant(T_K: float, L_cm: float, eps_eV: float, r_cm: float,
                       m: float = ELECTRON_MASS_EV, alpha: float = ALPHA) -> float:
    """Visibility exponent (2 alpha T L / 3 m k) kappa^2 for laboratory inputs, with kappa = 1/r and k = sqrt(2 m eps)."""
    threshold_variable(T_K, L_cm, eps_eV, r_cm)
    T = to_natural(LabQuantity(T_K, "kelvin"))
    L = to_natural(LabQuantity(L_cm, "cm"))
    r = to_natural(LabQuantity(r_cm, "cm"))
    k = math.sqrt(2 * m * eps_eV)
    return 2 * alpha * T * L / (3 * m * k) / r ** 2


def exponent_per_unit_x(m: float = ELECTRON_MASS_EV, alpha: float = ALPHA) -> float:
    """Exponent divided by X, from the conversion constants alone."""
    return 2 * alpha * unit_factor("kelvin") / (3 * m ** 1.5 * math.sqrt(2) * unit_factor("cm"))


def threshold_x_at(exponent: float = 1.0, m: float = ELECTRON_MASS_EV, alpha: float = ALPHA) -> float:
    """Value of X at which the visibility exponent equals ``exponent``."""
    return exponent / exponent_per_unit_x(m, alpha)


def resolution_for(exponent: float, T_K: float, L_cm: float, eps_eV: float,
                   m: float = ELECTRON_MASS_EV, alpha: float = ALPHA) -> float:
    """Fringe spacing r (cm) at which the exponent reaches ``exponent``."""
    x = threshold_x_at(exponent, m, alpha)
    return math.sqrt(T_K * L_cm / (math.sqrt(eps_eV) * x))
