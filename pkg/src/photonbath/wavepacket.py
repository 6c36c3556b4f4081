"""Closed-form spreading of a Gaussian packet in the photon bath.

The squared width grows as l_t^2 = l^2 + t^2/(m^2 l^2) + 4 Theta t with
Theta = 2 alpha T / (3 m^2).  The first two terms are ordinary quantum
spreading and can be undone by preparing a packet that focuses at time tau;
the last one cannot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .density_matrix import GaussianPure, MomentumGrid
from .units import PhysicalParams


@dataclass(frozen=True)
class SpreadLaw:
    """Initial width ``l``, spreading coefficient ``Theta`` and mass ``m`` (natural units)."""

    l: float
    Theta: float
    m: float

    def __post_init__(self):
        if not (self.l > 0 and math.isfinite(self.l)):
            raise ValueError("l must be positive and finite")
        if not (self.Theta >= 0 and math.isfinite(self.Theta)):
            raise ValueError("Theta must be non-negative and finite")
        if not (self.m > 0 and math.isfinite(self.m)):
            raise ValueError("m must be positive and finite")

    @classmethod
    def from_params(cls, l: float, params: PhysicalParams) -> "SpreadLaw":
        return cls(l, params.theta, params.m)


def _check_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or not np.all(np.isfinite(t)):
        raise ValueError("t must be finite and non-negative")
    return t


def spread_width2(law: SpreadLaw, t):
    """l_t^2 = l^2 + t^2/(m^2 l^2) + 4 Theta t."""
    t = _check_time(t)
    out = law.l ** 2 + t ** 2 / (law.m ** 2 * law.l ** 2) + 4 * law.Theta * t
    return out if out.ndim else float(out)


def spread_width(law: SpreadLaw, t):
    """Packet width l_t at time t."""
    return np.sqrt(spread_width2(law, t)) if np.ndim(t) else math.sqrt(spread_width2(law, t))


def _gaussian(x, w2):
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1)
    out = np.exp(-r2 / w2) / (math.pi * w2) ** 1.5
    return out if np.ndim(out) else float(out)


def gaussian_density(law: SpreadLaw, x, t):
    """J0(x, t) = pi^{-3/2} l_t^{-3} exp(-x^2 / l_t^2)."""
    return _gaussian(x, spread_width2(law, t))


def focused_width2(l: float, Theta: float, tau):
    """Squared width l^2 + 4 Theta tau of a packet prepared to focus at tau."""
    if l <= 0 or Theta < 0:
        raise ValueError("need l > 0 and Theta >= 0")
    tau = _check_time(tau)
    out = l * l + 4 * Theta * tau
    return out if out.ndim else float(out)


def focused_density(l: float, Theta: float, tau, x):
    """exp(-x^2/(l^2 + 4 Theta tau)) / (pi (l^2 + 4 Theta tau))^{3/2}."""
    return _gaussian(x, focused_width2(l, Theta, tau))


def focused_packet(l: float, tau: float, m: float) -> GaussianPure:
    """A packet that, absent the bath, would shrink to width ``l`` at time ``tau``."""
    return GaussianPure(l=l, tau=tau, m=m)


# ---------------------------------------------------------------------------
# minimal widths


def optimal_initial_width(m: float, t: float, Theta: float = 0.0, tol: float = 1e-14, max_iter: int = 100):
    """Minimise l_t over the initial width by Newton iteration in u = ln l.

    d(l_t^2)/du = 2 l^2 - 2 t^2/(m^2 l^2); the Theta term does not depend on l.
    Returns ``(l_opt, l_t_min)``.
    """
    if t <= 0 or m <= 0:
        raise ValueError("need t > 0 and m > 0")
    c = t / m
    u = 0.0 if c == 1 else 0.25 * math.log(max(c, 1e-300)) + 0.5  # deliberately off the optimum
    for _ in range(max_iter):
        l2 = math.exp(2 * u)
        grad = 2 * l2 - 2 * c * c / l2
        hess = 4 * l2 + 4 * c * c / l2
        step = grad / hess
        u -= step
        if abs(step) < tol:
            break
    else:
        raise ArithmeticError("width minimisation did not converge")
    l_opt = math.exp(u)
    return l_opt, spread_width(SpreadLaw(l_opt, Theta, m), t)


def minimal_focused_width(Theta: float, tau: float, l_values=None) -> tuple:
    """Smallest focused width over a decreasing sequence of preparation widths.

    The infimum sqrt(4 Theta tau) is approached as l -> 0; returns the
    sequence of widths and the limit.
    """
    if l_values is None:
        scale = math.sqrt(max(4 * Theta * tau, 1e-300))
        l_values = scale * np.logspace(0, -6, 13)
    widths = np.sqrt(np.array([focused_width2(l, Theta, tau) for l in l_values]))
    return widths, math.sqrt(4 * Theta * tau)


# ---------------------------------------------------------------------------
# grid representation


def packet_grids(l: float, n: int = 19, q_span: float = 6.0, p_span: float = 8.0):
    """Uniform 3-D (q, p) grids for a packet of width ``l``: q in [-q_span/l, q_span/l], p in [-p_span/l, p_span/l]."""
    return MomentumGrid.uniform(n, q_span / l), MomentumGrid.uniform(n, p_span / l)


def packet_on_grid(l: float, m: float, n: int = 19, q_span: float = 6.0, p_span: float = 8.0, tau: float = 0.0):
    """Sampled density matrix of a Gaussian packet (lazy; evaluated in chunks)."""
    qg, pg = packet_grids(l, n, q_span, p_span)
    return GaussianPure(l=l, tau=tau, m=m).to_grid(qg, pg, m)
