"""Tree-level mean field of a static charge switched on at t = 0, in Lorentz gauge.

For a static source with Fourier image J0(p) (and no current), the field on
the finite interval [0, t] is

    A_0(t, p) = e J0(p) (1 - cos |p| t) / |p|^2,

identical with and without the non-covariant vertex term.  That term adds the
pure-gradient spatial part

    A_i(t, p) = i p^i e J0(p) sin(|p| t) / |p|^3,

which makes d^mu A_mu vanish identically.  Without it A = 0 and

    d^mu A_mu = e int d^3p/(2 pi)^3 J0(p) e^{-i p.x} sin(|p| t) / |p|,

so the Gauss law holds only inside the light cone t > r.  Point sources are
always smeared into Gaussians J0(p) = exp(-sigma^2 p^2 / 2).

Components are covariant (lower index), metric (+, -, -, -), Fourier
convention f(x) = int d^3p/(2 pi)^3 e^{-i p.x} f(p).  The overall coupling is
the source ``charge``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import erf

from .parallel import ordered_map
from .quadrature import panel_rule, panels_for_phase

GAUSS_TAIL = 40.0          # J0(p_max) = e^{-40}
DEFAULT_SMEAR_FRACTION = 1 / 50
SMEAR_LADDER = (1 / 25, 1 / 50, 1 / 100)


@dataclass(frozen=True)
class SourceProfile:
    """Static charge distribution: ``kind`` is "point" or "gaussian"."""

    kind: str = "gaussian"
    sigma: Optional[float] = None
    charge: float = 1.0
    static: bool = True

    def __post_init__(self):
        if self.kind not in ("point", "gaussian"):
            raise ValueError("kind must be 'point' or 'gaussian'")
        if self.kind == "gaussian" and not (self.sigma is not None and self.sigma > 0):
            raise ValueError("gaussian source needs sigma > 0")
        if not self.static:
            raise ValueError("only static sources are supported")
        if not math.isfinite(self.charge):
            raise ValueError("charge must be finite")

    def smeared(self, sigma: float) -> "SourceProfile":
        """Gaussian stand-in used for every numerical evaluation of a point source."""
        return SourceProfile("gaussian", sigma, self.charge)

    def resolve(self, r: float) -> "SourceProfile":
        """Point sources are smeared with sigma = r/50 at probe radius ``r``."""
        if self.kind == "gaussian":
            return self
        if r <= 0:
            raise ValueError("a point source needs a smearing width at r = 0")
        return self.smeared(DEFAULT_SMEAR_FRACTION * r)

    def fourier(self, p):
        p = np.asarray(p, dtype=float)
        if self.kind == "point":
            return np.ones_like(p)
        return np.exp(-0.5 * self.sigma ** 2 * p * p)


def _radial(x):
    x = np.asarray(x, dtype=float)
    if x.shape != (3,):
        raise ValueError("x must be a 3-vector")
    return float(np.linalg.norm(x))


def _check_time(t):
    if not (t >= 0 and math.isfinite(t)):
        raise ValueError("t must be finite and non-negative")


def _radial_integral(kernel, src: SourceProfile, r: float, t: float, tol: float):
    """int_0^p_max J0(p) kernel(p) dp with panels of at most pi/2 phase."""
    p_max = math.sqrt(2 * GAUSS_TAIL) / src.sigma
    span = p_max * (r + t)
    edges = panels_for_phase(0.0, p_max, span, min_panels=16)
    x, wk, wg = panel_rule(edges)
    fx = src.fourier(x) * kernel(x)
    val = float(fx @ wk)
    err = float(abs(val - fx @ wg))
    scale = float(np.abs(fx) @ wk)
    # |K - G| bounds the 7-point Gauss error; the Kronrod value is far more accurate
    if err > max(tol * scale, 1e-300):
        raise ArithmeticError(f"radial quadrature failed to converge (error {err:.2e})")
    return val


def _sin_over_r(p, r):
    """sin(p r) / r with the r -> 0 limit p."""
    return p * np.sinc(p * r / math.pi)


def scalar_potential(source: SourceProfile, r: float, t: float, tol: float = 1e-6) -> float:
    """A_0(t, r) = (e / 2 pi^2) int J0(p)(1 - cos p t) sin(p r)/(p r) dp by panel quadrature."""
    _check_time(t)
    src = source.resolve(r)
    val = _radial_integral(lambda p: (1 - np.cos(p * t)) * _sin_over_r(p, r) / p, src, r, t, tol)
    return src.charge * val / (2 * math.pi ** 2)


def gauge_gradient(source: SourceProfile, r: float, t: float, tol: float = 1e-6) -> float:
    """d Lambda / d r for Lambda = (e / 2 pi^2 r) int J0 sin(p t) sin(p r) / p^2 dp (A_i = -x_i/r dLambda/dr)."""
    _check_time(t)
    if r == 0:
        return 0.0
    src = source.resolve(r)

    def kern(p):
        return np.sin(p * t) / (p * p) * (p * r * np.cos(p * r) - np.sin(p * r)) / (r * r)

    return src.charge * _radial_integral(kern, src, r, t, tol) / (2 * math.pi ** 2)


def tree_field(source: SourceProfile, x, t: float, include_noncov: bool = True, tol: float = 1e-6) -> np.ndarray:
    """Covariant potential (A_0, A_1, A_2, A_3) at position ``x`` and time ``t > 0``."""
    if not t > 0:
        raise ValueError("t must be positive")
    r = _radial(x)
    a = np.zeros(4)
    a[0] = scalar_potential(source, r, t, tol)
    if include_noncov and r > 0:
        a[1:] = -np.asarray(x, dtype=float) / r * gauge_gradient(source, r, t, tol)
    return a


def divergence_residual(source: SourceProfile, x, t: float, include_noncov: bool = False,
                        tol: float = 1e-6) -> float:
    """d^mu A_mu at (t, x); identically 0 with the non-covariant term."""
    _check_time(t)
    if include_noncov or t == 0:
        return 0.0
    r = _radial(x)
    src = source.resolve(r)
    val = _radial_integral(lambda p: np.sin(p * t) * _sin_over_r(p, r), src, r, t, tol)
    return src.charge * val / (2 * math.pi ** 2)


def field_table(source: SourceProfile, radii: Sequence[float], times: Sequence[float], include_noncov: bool = False):
    """Rows (r, t, A0, residual) over the product of radii and times, computed in parallel."""
    pairs = [(float(r), float(t)) for r in radii for t in times]

    def row(rt):
        r, t = rt
        x = np.array([0.0, 0.0, r])
        return (r, t, scalar_potential(source, r, t), divergence_residual(source, x, t, include_noncov))

    return ordered_map(row, pairs)


# ---------------------------------------------------------------------------
# closed forms for Gaussian sources


def _s(sigma):
    return math.sqrt(2) * sigma


def scalar_potential_closed(r: float, t: float, sigma: float, charge: float = 1.0) -> float:
    """e/(4 pi r) [erf(r/s) - erf((r+t)/s)/2 - erf((r-t)/s)/2], s = sqrt(2) sigma."""
    s = _s(sigma)
    if r == 0:
        return charge / (2 * math.pi ** 1.5 * s) * (1 - math.exp(-(t / s) ** 2))
    return charge / (4 * math.pi * r) * (erf(r / s) - 0.5 * erf((r + t) / s) - 0.5 * erf((r - t) / s))


def _h(b, s):
    """int_0^inf e^{-s^2 p^2 / 4}(1 - cos b p)/p^2 dp."""
    return 0.5 * math.pi * (b * erf(b / s) + s / math.sqrt(math.pi) * (math.exp(-(b / s) ** 2) - 1))


def gauge_gradient_closed(r: float, t: float, sigma: float, charge: float = 1.0) -> float:
    s = _s(sigma)
    hp = lambda b: 0.5 * math.pi * erf(b / s)
    diff = _h(r + t, s) - _h(r - t, s)
    dd = hp(r + t) - hp(r - t)
    return charge / (4 * math.pi ** 2) * (dd / r - diff / r ** 2)


def divergence_closed(r: float, t: float, sigma: float, charge: float = 1.0) -> float:
    """d^mu A_mu without the non-covariant term for a Gaussian source."""
    s = _s(sigma)
    if 4 * r * t < 1e-8 * s * s:   # r -> 0 limit, relative error O(r^2 / s^2)
        return charge / (2 * math.pi ** 2) * math.sqrt(math.pi / 2) * t / sigma ** 3 * math.exp(-t * t / (2 * sigma ** 2))
    pref = charge / (4 * math.pi ** 2 * r) * math.sqrt(math.pi) / s
    # e^{-(r-t)^2/s^2} - e^{-(r+t)^2/s^2} without cancellation at small r t
    return -pref * math.exp(-((r - t) / s) ** 2) * math.expm1(-4 * r * t / s ** 2)


def coulomb_front(r: float, t: float, charge: float = 1.0) -> float:
    """Unsmeared limit (e / 4 pi r) theta(t - r)."""
    return charge / (4 * math.pi * r) if t > r else 0.0


# ---------------------------------------------------------------------------
# diagnostics


def front_limit(r: float, t: float, charge: float = 1.0, ladder: Sequence[float] = SMEAR_LADDER) -> float:
    """Zero-width limit of A_0 by polynomial extrapolation in sigma over sigma = r * ladder."""
    sig = np.array([f * r for f in ladder])
    vals = np.array([scalar_potential(SourceProfile("gaussian", s, charge), r, t) for s in sig])
    coeff = np.polyfit(sig, vals, len(sig) - 1)
    return float(coeff[-1])


def decay_exponent(sigma: float, times: Sequence[float], charge: float = 1.0) -> float:
    """Fit ln(residual / t) = c + slope t^2 at x = 0; returns the slope (expected -1/(2 sigma^2))."""
    t = np.asarray(times, dtype=float)
    src = SourceProfile("gaussian", sigma, charge)
    res = np.array([divergence_residual(src, np.zeros(3), ti) for ti in t])
    if np.any(res <= 0):
        raise ArithmeticError("residual not positive over the fit window")
    slope, _ = np.polyfit(t * t, np.log(res / t), 1)
    return float(slope)


def spectral_modes(source: SourceProfile, p_vectors, t: float, include_noncov: bool = True):
    """Fourier modes of A_mu and their first two time derivatives.

    Returns arrays of shape (n, 4) for A, dA/dt and d^2A/dt^2, and J0(p).
    """
    if source.kind == "point":
        raise ValueError("smear the point source first")
    p = np.atleast_2d(np.asarray(p_vectors, dtype=float))
    pn = np.linalg.norm(p, axis=1)
    if np.any(pn == 0):
        raise ValueError("p = 0 mode is excluded")
    e = source.charge
    j0 = source.fourier(pn)
    c, s = np.cos(pn * t), np.sin(pn * t)
    a = np.zeros((p.shape[0], 4), dtype=complex)
    da = np.zeros_like(a)
    dda = np.zeros_like(a)
    a[:, 0] = e * j0 * (1 - c) / pn ** 2
    da[:, 0] = e * j0 * s / pn
    dda[:, 0] = e * j0 * c
    if include_noncov:
        g = 1j * e * j0 / pn ** 3
        a[:, 1:] = (g * s)[:, None] * p
        da[:, 1:] = (g * pn * c)[:, None] * p
        dda[:, 1:] = (-g * pn * pn * s)[:, None] * p
    return a, da, dda, j0


def spectral_residuals(source: SourceProfile, p_vectors, t: float, include_noncov: bool = True) -> dict:
    """Relative residuals of d^mu A_mu = 0 (or its stated value) and box A_mu = e J_mu per mode."""
    p = np.atleast_2d(np.asarray(p_vectors, dtype=float))
    pn = np.linalg.norm(p, axis=1)
    a, da, dda, j0 = spectral_modes(source, p, t, include_noncov)
    e = source.charge
    # d^0 = d_t; d^i = -d_i and d_i -> -i p^i under e^{-i p.x}
    div = da[:, 0] + 1j * np.sum(p * a[:, 1:], axis=1)
    expected_div = np.zeros_like(div) if include_noncov else e * j0 * np.sin(pn * t) / pn
    source_term = np.zeros_like(a)
    source_term[:, 0] = e * j0
    box = dda + (pn ** 2)[:, None] * a
    scale = np.abs(e * j0) + 1e-300
    return {
        "divergence": float(np.max(np.abs(div - expected_div) / scale)),
        "divergence_value": div,
        "box": float(np.max(np.abs(box - source_term) / scale[:, None])),
    }
