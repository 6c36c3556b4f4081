"""Infrared exponent integrals g_rs for an electron in a photon bath.

The on-shell photon measure splits into branches k0 = s|k| (s = +1, -1).  The
vacuum weight theta(k0) feeds only s = +1; the thermal weight n(|k|) feeds
both.  With the Coulomb projector the numerator reduces on shell to
-(q_r,perp . q_s,perp), transverse to the photon direction n, and

    g_rs = eta_r eta_s / (2 (2 pi)^3) * sum_s int dOmega A_s(n) int_0^Lambda dk w(k)/k B(k),
    A_s(n) = -(q_r,perp . q_s,perp) / ((s q_r0 - n.q_r)(s q_s0 - n.q_s)),

with the four-exponential bracket B = 1 + e^{i(phi_r - phi_s)} - e^{-i eta_r phi_r}
- e^{-i eta_s phi_s}, phi_r = k t (s - n.v_r).  Writing
E_w(a) = int_0^Lambda w(k) (1 - e^{i a k}) / k dk, the bracket integral is
-E(phi_r - phi_s) + E(-eta_r phi_r) + E(-eta_s phi_s) (phases per unit k).

The vacuum radial integral is exact in terms of sine and cosine integrals.
The thermal one is done by Gauss-Kronrod panels, each spanning at most pi/2
of phase.  Its imaginary part diverges logarithmically at k -> 0 for each
direction separately; the divergence is linear in the phase and cancels in
every physical combination, so it is removed by a finite-part subtraction
of T a / (k (1 + k/T)).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import sici

from . import quadrature as quad
from .parallel import ordered_map
from .units import PhysicalParams

ETA = {1: 1.0, 2: -1.0}
METRIC = np.diag([1.0, -1.0, -1.0, -1.0])
THERMAL_CUTOFF = 50.0      # thermal photons truncated at min(Lambda, 50 T)
NONREL_LIMIT = 0.01        # |q|, |p| <= 0.01 m
DIRECTION_CHUNK = 200_000
EULER_GAMMA = 0.57721566490153286061


class QuadratureError(ArithmeticError):
    """Requested tolerance not reached; ``achieved`` holds the error estimate."""

    def __init__(self, msg, achieved):
        super().__init__(f"{msg} (achieved error {achieved:.3e})")
        self.achieved = achieved


# --------------------------------------------------------------------------
# tensors


def coulomb_projector(k) -> np.ndarray:
    """d_{mu nu}(k) = eta_{mu nu} - (k0 k_mu e_nu + k0 k_nu e_mu - k_mu k_nu)/|k|^2.

    ``k`` is a contravariant 4-vector (k0, kx, ky, kz); e_mu = (1, 0, 0, 0).
    """
    k = np.asarray(k, dtype=float)
    kk = float(k[1:] @ k[1:])
    if kk == 0.0:
        raise ValueError("spatial |k| must be non-zero")
    k_low = METRIC @ k
    e = np.array([1.0, 0.0, 0.0, 0.0])
    k0 = k[0]
    return METRIC - (k0 * np.outer(k_low, e) + k0 * np.outer(e, k_low) - np.outer(k_low, k_low)) / kk


def lorentz_to_coulomb(k) -> np.ndarray:
    """g^mu_alpha(k) = delta^mu_alpha + k_alpha (k^mu - e^mu k0)/|k|^2, indexed [mu, alpha]."""
    k = np.asarray(k, dtype=float)
    kk = float(k[1:] @ k[1:])
    if kk == 0.0:
        raise ValueError("spatial |k| must be non-zero")
    k_low = METRIC @ k
    e_up = np.array([1.0, 0.0, 0.0, 0.0])
    return np.eye(4) + np.outer(k - e_up * k[0], k_low) / kk


def projected_metric(k) -> np.ndarray:
    """g^mu_alpha eta_{mu nu} g^nu_beta."""
    g = lorentz_to_coulomb(k)
    return g.T @ METRIC @ g


def minkowski(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    return a[..., 0] * b[..., 0] - np.sum(a[..., 1:] * b[..., 1:], axis=-1)


def integrand_weight(k, q_r, q_s, tensor=None) -> float:
    """d_{mu nu} q_r^mu q_s^nu / ((k q_r)(k q_s)) for one photon 4-momentum."""
    d = coulomb_projector(k) if tensor is None else tensor
    return float(q_r @ d @ q_s) / (minkowski(k, q_r) * minkowski(k, q_s))


# --------------------------------------------------------------------------
# inputs and results


@dataclass(frozen=True)
class KernelInput:
    """Electron momenta q and q + p (eV), elapsed time t (1/eV) and bath parameters."""

    q: tuple
    p: tuple
    t: float
    params: PhysicalParams

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(3)
        p = np.asarray(self.p, dtype=float).reshape(3)
        object.__setattr__(self, "q", tuple(q))
        object.__setattr__(self, "p", tuple(p))
        if not (self.t >= 0 and math.isfinite(self.t)):
            raise ValueError("t must be finite and non-negative")
        lim = NONREL_LIMIT * self.params.m * (1 + 1e-12)
        if np.linalg.norm(q) > lim or np.linalg.norm(p) > lim:
            raise ValueError("|q| and |p| must not exceed 0.01 m")

    def four_momenta(self):
        m = self.params.m
        q = np.asarray(self.q)
        q2 = q + np.asarray(self.p)
        return (np.concatenate([[math.sqrt(m * m + q @ q)], q]),
                np.concatenate([[math.sqrt(m * m + q2 @ q2)], q2]))

    def with_time(self, t: float) -> "KernelInput":
        return KernelInput(self.q, self.p, t, self.params)


@dataclass(frozen=True)
class ExponentResult:
    g11: complex
    g22: complex
    g21: complex
    error: float
    vacuum: Optional[complex] = None
    thermal: Optional[complex] = None

    @property
    def g(self) -> complex:
        return self.g11 + self.g22 + 2.0 * self.g21

    def __post_init__(self):
        if not math.isfinite(self.error):
            raise ValueError("error estimate must be finite")


# --------------------------------------------------------------------------
# radial integrals


def cin(x):
    """Cin(x) = int_0^x (1 - cos u)/u du for x >= 0."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x < 1e-2
    xs = x[small]
    x2 = xs * xs
    out[small] = x2 / 4 - x2 * x2 / 96 + x2 ** 3 / 4320
    xl = x[~small]
    _, ci = sici(xl)
    out[~small] = EULER_GAMMA + np.log(xl) - ci
    return out


def vacuum_radial(a, cutoff: float):
    """int_0^cutoff (1 - e^{i a k})/k dk = Cin(|a| L) - i sgn(a) Si(|a| L)."""
    a = np.asarray(a, dtype=float)
    x = np.abs(a) * cutoff
    si, _ = sici(x)
    return cin(x) - 1j * np.sign(a) * si


def thermal_cutoff(params: PhysicalParams) -> float:
    return min(params.Lambda, THERMAL_CUTOFF * params.T)


def thermal_radial(a, params: PhysicalParams, panel_scale: float = 1.0, chunk: int = 32):
    """Finite-part value of int_0^cutoff n(k) (1 - e^{i a k})/k dk.

    The subtracted counterterm T a / (k (1 + k/T)) is integrated analytically
    with the k -> 0 logarithm dropped; the dropped piece is linear in ``a``.

    Returns
    -------
    value : complex ndarray
    error : float ndarray
        Gauss-Kronrod difference per node plus the truncation bound.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    T = params.T
    out = np.zeros(a.shape, dtype=complex)
    err = np.zeros(a.shape)
    if T == 0:
        return out, err
    kc = thermal_cutoff(params)
    order = np.argsort(np.abs(a), kind="stable")
    min_panels = int(math.ceil(kc / T * panel_scale))
    # beyond the cutoff |integrand| <= 2 n(k)/k, with n(k) <= e^{-k/T}/(1 - e^{-kc/T})
    tail = 4.0 * math.exp(-kc / T) * max(1.0, math.log(params.Lambda / kc)) if kc < params.Lambda else 0.0
    log_term = T * math.log(kc * T / (kc + T))
    for start in range(0, a.size, chunk):
        idx = order[start:start + chunk]
        aa = a[idx][:, None]
        amax = float(np.max(np.abs(aa)))
        edges = quad.panels_for_phase(0.0, kc, amax * kc * panel_scale, min_panels=min_panels)
        x, wk, wg = quad.panel_rule(edges)
        n = 1.0 / np.expm1(x / T)
        re = n * 2.0 * np.sin(0.5 * aa * x) ** 2 / x
        im = -(n * np.sin(aa * x) - T * aa / (1.0 + x / T)) / x
        f = re + 1j * im
        k_val = f @ wk
        g_val = f @ wg
        out[idx] = k_val - 1j * a[idx] * log_term
        err[idx] = np.abs(k_val - g_val)
    return out, err + tail


# --------------------------------------------------------------------------
# angular integration


def _frame(inp: KernelInput):
    """Orthonormal frame with z along p (or q); flags whether both velocities are axial."""
    q1, q2 = inp.four_momenta()
    v1 = q1[1:] / q1[0]
    v2 = q2[1:] / q2[0]
    p = np.asarray(inp.p)
    q = np.asarray(inp.q)
    ref = p if np.any(p) else q
    if not np.any(ref):
        ref = np.array([0.0, 0.0, 1.0])
    z = ref / np.linalg.norm(ref)
    helper = np.array([1.0, 0.0, 0.0]) if abs(z[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    x = helper - (helper @ z) * z
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    basis = np.stack([x, y, z])
    axial = all(np.linalg.norm(np.cross(v, z)) <= 1e-14 * max(np.linalg.norm(v), 1e-300) for v in (v1, v2))
    return basis, axial, q1, q2, v1, v2


def _directions(basis, axial, c_edges, n_phi):
    c, wk, wg = quad.panel_rule(c_edges)
    s = np.sqrt(np.clip(1.0 - c * c, 0.0, None))
    if axial:
        dirs = np.stack([s, np.zeros_like(c), c], axis=-1) @ basis
        return dirs, 2 * math.pi * wk, 2 * math.pi * wg
    phi = 2 * math.pi * np.arange(n_phi) / n_phi
    local = np.stack([
        (s[:, None] * np.cos(phi)[None, :]).ravel(),
        (s[:, None] * np.sin(phi)[None, :]).ravel(),
        np.repeat(c, n_phi),
    ], axis=-1)
    dw = 2 * math.pi / n_phi
    return local @ basis, np.repeat(wk, n_phi) * dw, np.repeat(wg, n_phi) * dw


def _prefactors(dirs, sgn, q_r, q_s):
    """A_s(n) for unit directions ``dirs`` on branch ``sgn``."""
    vr = q_r[1:]
    vs = q_s[1:]
    pr = vr - (dirs @ vr)[:, None] * dirs
    ps = vs - (dirs @ vs)[:, None] * dirs
    num = -np.sum(pr * ps, axis=-1)
    return num / ((sgn * q_r[0] - dirs @ vr) * (sgn * q_s[0] - dirs @ vs))


def _branch_terms(inp: KernelInput, weights: str, panel_scale: float):
    """Angular integrals of the three g_rs for one weight family; returns values and errors."""
    params = inp.params
    t = inp.t
    basis, axial, q1, q2, v1, v2 = _frame(inp)
    if weights == "vacuum":
        branches = (1.0,)
        kmax = params.Lambda
    else:
        branches = (1.0, -1.0)
        kmax = thermal_cutoff(params)
    vmax = max(np.linalg.norm(v1), np.linalg.norm(v2), np.linalg.norm(v1 - v2))
    span = 2.0 * t * kmax * vmax * panel_scale
    c_edges = quad.panels_for_phase(-1.0, 1.0, span, min_panels=max(4, int(4 * panel_scale)))
    n_phi = 0
    if not axial:
        n_phi = max(16, 2 * int(math.ceil(t * kmax * vmax * panel_scale / (0.25 * math.pi))))
        n_phi += n_phi % 2
    vals = np.zeros(3, dtype=complex)
    vals_g = np.zeros(3, dtype=complex)
    rad_err = np.zeros(3)
    # fixed chunks of polar panels keep memory bounded; summed in order
    n_pan = c_edges.size - 1
    per_chunk = max(1, DIRECTION_CHUNK // (15 * max(n_phi, 1)))
    for lo in range(0, n_pan, per_chunk):
        dirs, wk, wg = _directions(basis, axial, c_edges[lo:lo + per_chunk + 1], n_phi)
        for sgn in branches:
            ph1 = t * (sgn - dirs @ v1)
            ph2 = t * (sgn - dirs @ v2)
            alphas = np.concatenate([-ph1, ph2, ph2 - ph1])
            if weights == "vacuum":
                e_all = vacuum_radial(alphas, params.Lambda)
                e_err = np.zeros(alphas.shape)
            else:
                e_all, e_err = thermal_radial(alphas, params, panel_scale)
            nd = dirs.shape[0]
            e1, e2, e21 = e_all[:nd], e_all[nd:2 * nd], e_all[2 * nd:]
            r1, r2, r21 = e_err[:nd], e_err[nd:2 * nd], e_err[2 * nd:]
            a11 = _prefactors(dirs, sgn, q1, q1)
            a22 = _prefactors(dirs, sgn, q2, q2)
            a21 = _prefactors(dirs, sgn, q2, q1)
            f11 = a11 * 2.0 * e1
            f22 = a22 * 2.0 * e2
            f21 = a21 * (-e21 + e2 + e1)
            for i, f in enumerate((f11, f22, f21)):
                vals[i] += f @ wk
                vals_g[i] += f @ wg
            rad_err += np.array([
                np.abs(a11 * wk) @ (2 * r1),
                np.abs(a22 * wk) @ (2 * r2),
                np.abs(a21 * wk) @ (r21 + r1 + r2),
            ])
    norm = 1.0 / (2.0 * (2 * math.pi) ** 3)
    signs = np.array([ETA[1] * ETA[1], ETA[2] * ETA[2], ETA[2] * ETA[1]])
    vals = vals * norm * signs
    errs = (np.abs(vals_g * norm * signs - vals) + rad_err * norm)
    return vals, errs


def exponent(inp: KernelInput, tol: float = 1e-6, branch: str = "full", max_refine: int = 3) -> ExponentResult:
    """Evaluate g11, g22, g21 and g = g11 + g22 + 2 g21.

    Parameters
    ----------
    branch : {"full", "vacuum", "thermal"}
        "vacuum" sets n = 0; "thermal" keeps only the n-weighted part.
    tol : float
        Relative tolerance on the combined error estimate.
    """
    if branch not in ("full", "vacuum", "thermal"):
        raise ValueError("branch must be 'full', 'vacuum' or 'thermal'")
    if inp.t == 0:
        return ExponentResult(0j, 0j, 0j, 0.0, 0j, 0j)
    scale = 1.0
    for _ in range(max_refine + 1):
        vac = np.zeros(3, dtype=complex)
        th = np.zeros(3, dtype=complex)
        err = 0.0
        if branch in ("full", "vacuum"):
            vac, e = _branch_terms(inp, "vacuum", scale)
            err += float(np.sum(e))
        if branch in ("full", "thermal") and inp.params.T > 0:
            th, e = _branch_terms(inp, "thermal", scale)
            err += float(np.sum(e))
        tot = vac + th
        size = float(np.sum(np.abs(tot)))
        if err <= tol * size or size == 0.0:
            break
        scale *= 2.0
    else:
        raise QuadratureError("g_rs quadrature did not converge", err)
    gv = vac[0] + vac[1] + 2 * vac[2]
    gt = th[0] + th[1] + 2 * th[2]
    return ExponentResult(complex(tot[0]), complex(tot[1]), complex(tot[2]), err, complex(gv), complex(gt))


def g_rs(r: int, s: int, inp: KernelInput, tol: float = 1e-6, branch: str = "full") -> complex:
    """Single component g_rs (r, s in {1, 2}); g_12 = g_21."""
    if r not in (1, 2) or s not in (1, 2):
        raise ValueError("r and s must be 1 or 2")
    res = exponent(inp, tol=tol, branch=branch)
    return {(1, 1): res.g11, (2, 2): res.g22, (1, 2): res.g21, (2, 1): res.g21}[(r, s)]


def exponent_series(inp: KernelInput, times: Sequence[float], tol: float = 1e-6, branch: str = "full"):
    """Evaluate the exponent at each time; order-preserving and worker-count independent."""
    return ordered_map(lambda t: exponent(inp.with_time(float(t)), tol=tol, branch=branch), list(times))


# --------------------------------------------------------------------------
# fits


@dataclass(frozen=True)
class FitResult:
    linear_coeff: float
    log_coeff: float
    const: float
    residual: float


def asymptotic_fit(times, values) -> FitResult:
    """Least-squares fit Re g(t) = a t + b ln t + c with column scaling."""
    t = np.asarray(times, dtype=float)
    y = np.real(np.asarray(values))
    if t.size < 4 or np.any(t <= 0):
        raise ValueError("need at least four positive sample times")
    if t.max() / t.min() < 2.0:
        raise ValueError("ill-conditioned fit: t-range spans less than a factor 2")
    cols = np.stack([t, np.log(t), np.ones_like(t)], axis=1)
    norms = np.linalg.norm(cols, axis=0)
    scaled = cols / norms
    if np.linalg.cond(scaled) > 1e8:
        raise ValueError("ill-conditioned fit")
    coef, *_ = np.linalg.lstsq(scaled, y, rcond=None)
    coef = coef / norms
    resid = float(np.sqrt(np.mean((cols @ coef - y) ** 2)))
    return FitResult(float(coef[0]), float(coef[1]), float(coef[2]), resid)


def thermal_slope_target(p, params: PhysicalParams) -> float:
    p = np.asarray(p, dtype=float)
    return -(p @ p) * params.T / (3 * math.pi * params.m ** 2)


def vacuum_log_target(q, p, params: PhysicalParams, large_pt: bool) -> float:
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    num = p @ p + (q @ q + p @ q if large_pt else 0.0)
    return -num / (3 * math.pi ** 2 * params.m ** 2)


# --------------------------------------------------------------------------
# identities


def eikonal_factorization_check(q, w_list, epsilon: float = 1e-3):
    """Both sides of the permutation-sum identity with i0 -> i epsilon.

    Each denominator (w_k q) carries + i epsilon, so a partial sum of j
    momenta carries + i j epsilon and the identity is exact.
    """
    w_list = [np.asarray(w, dtype=float) for w in w_list]
    if not 2 <= len(w_list) <= 6:
        raise ValueError("between 2 and 6 momenta required")
    y = np.array([minkowski(w, q) for w in w_list]) + 1j * epsilon
    if np.any(np.abs(y) < 1e-12):
        raise ValueError("degenerate denominator")
    lhs = 0j
    for perm in itertools.permutations(range(len(y))):
        partial = np.cumsum(y[list(perm)])
        if np.any(np.abs(partial) < 1e-12):
            raise ValueError("degenerate partial-sum denominator")
        lhs += 1.0 / np.prod(partial)
    rhs = 1.0 / np.prod(y)
    return {"lhs": complex(lhs), "rhs": complex(rhs)}


def delta_identity_check(t: float, periods: int = 200, tol: float = 1e-9) -> float:
    """int_R (1 - e^{i z t})(1 - e^{-i z t}) / z^2 dz, expected 2 pi t.

    Panels of pi/2 phase up to Z = 2 pi periods / t; the tail beyond Z is
    4/Z - 4 int_Z^inf cos(t z)/z^2 dz, done in closed form.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    z_max = 2 * math.pi * periods / t
    edges = quad.panels_for_phase(0.0, z_max, t * z_max)
    val, err = quad.integrate(lambda z: 8.0 * np.sin(0.5 * z * t) ** 2 / z ** 2, edges)
    si, _ = sici(t * z_max)
    cos_tail = math.cos(t * z_max) / z_max - t * (0.5 * math.pi - si)
    total = float(val) + 4.0 / z_max - 4.0 * cos_tail
    if err > tol * abs(total):
        raise QuadratureError("delta identity quadrature", float(err))
    return total
