"""Natural-unit bookkeeping (hbar = c = 1, energies in eV) and time scales."""

from __future__ import annotations

import math
from dataclasses import dataclass

import scipy.constants as const

# CODATA values expressed in eV
KB_EV_PER_K = const.k / const.e                  # 8.617333262e-5 eV/K
HBARC_EV_M = const.hbar * const.c / const.e      # 1.973269804e-7 eV m
HBAR_EV_S = const.hbar / const.e                 # 6.582119569e-16 eV s

ELECTRON_MASS_EV = 510998.95
ALPHA = 1.0 / 137.035999

# length -> eV^-1 and time -> eV^-1
_PER_EV = {
    "meter": 1.0 / HBARC_EV_M,
    "cm": 1e-2 / HBARC_EV_M,
    "angstrom": 1e-10 / HBARC_EV_M,
    "second": 1.0 / HBAR_EV_S,
}
# energy-like -> eV
_EV = {
    "eV": 1.0,
    "kelvin": KB_EV_PER_K,
}

UNITS = ("kelvin", "eV", "cm", "meter", "angstrom", "second", "natural")


def unit_factor(unit: str) -> float:
    """Multiplicative factor taking a value in ``unit`` to its natural-unit value."""
    if unit in _EV:
        return _EV[unit]
    if unit in _PER_EV:
        return _PER_EV[unit]
    if unit == "natural":
        return 1.0
    raise ValueError(f"unsupported unit tag {unit!r}; expected one of {UNITS}")


@dataclass(frozen=True)
class LabQuantity:
    """A real number tagged with a laboratory unit."""

    value: float
    unit: str

    def __post_init__(self):
        unit_factor(self.unit)
        if not math.isfinite(self.value):
            raise ValueError("LabQuantity value must be finite")


def to_natural(q: LabQuantity) -> float:
    """Express ``q`` in powers of eV (energies as eV, lengths and times as 1/eV).

    Examples
    --------
    >>> round(to_natural(LabQuantity(1.0, "kelvin")) * 1e5, 6)
    8.617333
    """
    if not isinstance(q, LabQuantity):
        raise TypeError("to_natural expects a LabQuantity")
    return q.value * unit_factor(q.unit)


def from_natural(value: float, unit: str) -> LabQuantity:
    """Inverse of :func:`to_natural`."""
    return LabQuantity(value / unit_factor(unit), unit)


@dataclass(frozen=True)
class PhysicalParams:
    """Electron mass, bath temperature, coupling and soft threshold in eV.

    The ordering ``T < Lambda < m`` is enforced; ``T = 0`` is the vacuum case.
    """

    m: float
    T: float
    alpha: float
    Lambda: float

    def __post_init__(self):
        for name in ("m", "T", "alpha", "Lambda"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite")
        if self.m <= 0:
            raise ValueError("m must be positive")
        if self.T < 0:
            raise ValueError("T must be non-negative")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not self.T < self.Lambda < self.m:
            raise ValueError("soft threshold must satisfy T < Lambda < m")

    @property
    def e2(self) -> float:
        """Squared charge, e^2 = 4 pi alpha."""
        return 4.0 * math.pi * self.alpha

    @property
    def charge(self) -> float:
        return math.sqrt(self.e2)

    @property
    def theta(self) -> float:
        """Irreversible spreading coefficient 2 alpha T / (3 m^2)."""
        return 2.0 * self.alpha * self.T / (3.0 * self.m ** 2)

    def replace(self, **kw) -> "PhysicalParams":
        d = dict(m=self.m, T=self.T, alpha=self.alpha, Lambda=self.Lambda)
        d.update(kw)
        return PhysicalParams(**d)

    def as_dict(self) -> dict:
        return dict(m=self.m, T=self.T, alpha=self.alpha, Lambda=self.Lambda)


def _require_thermal(params: PhysicalParams) -> None:
    if params.T <= 0:
        raise ValueError("vacuum: no finite thermal time scale (T = 0)")


def tau_ir(r: float, params: PhysicalParams) -> float:
    """Infrared decoherence time m^2 r^2 / (alpha T) for a separation ``r`` (1/eV)."""
    if r <= 0:
        raise ValueError("r must be positive")
    _require_thermal(params)
    return params.m ** 2 * r ** 2 / (params.alpha * params.T)


def tau_kinetic(params: PhysicalParams) -> float:
    """Mean free time m^2 / (alpha^2 T^3)."""
    _require_thermal(params)
    return params.m ** 2 / (params.alpha ** 2 * params.T ** 3)


STAGE_COEFF = 4.36


def stage_ratio(r_cm: float, T_K: float) -> float:
    """Ratio of the decoherence to the kinetic time, (1/137) (4.36 r T)^2.

    ``r_cm`` in centimetres and ``T_K`` in kelvin.
    """
    if r_cm <= 0 or T_K <= 0:
        raise ValueError("r_cm and T_K must be positive")
    return (STAGE_COEFF * r_cm * T_K) ** 2 / 137.0


def stage_coefficient() -> float:
    """The product (1 cm in 1/eV) * (1 K in eV), which the 4.36 above approximates."""
    return unit_factor("cm") * unit_factor("kelvin")
