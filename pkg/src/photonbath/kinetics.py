"""Kinetic relaxation of the electron momentum distribution in a photon bath.

Transition kernel
-----------------
C(q, k) is the rate for the electron to go from q + k to q.  With the energy
released by the electron, D = eps_{q+k} - eps_q, the delta function fixes the
angle between the incoming photon p and k, and with the nonrelativistic
scattering weight the azimuth and angle integrals are done in closed form:

    C(q, k) = F(|k|, D),
    F(k, D) = e^4 / (8 pi m^2 k) * int ds [1 + cos^2 psi] occ(s),

where s is the lower of the two photon energies, s >= (k - |D|)/2, and
occ(s) = n(s) [1 + n(s + D)] for D >= 0 and n(s + |D|) [1 + n(s)] for D < 0.
Both signs of D share the same nodes, so detailed balance
F(k, D) = F(k, -D) e^{beta D} holds to rounding.

Radial master equation
----------------------
For isotropic rho(|q|) on cells q_i with widths w_i, the populations
P_i = q_i^2 w_i rho_i / (2 pi^2) obey dP_i/dt = sum_j (K_ij rho_j - K_ji rho_i) with
K_ij = S_ij G(i, j), S_ij = q_i^2 w_i q_j^2 w_j / (8 pi^4) symmetric and
G(i, j) = (1 / (q_i q_j)) int_{|q_i - q_j|}^{q_i + q_j} dk k F(k, eps_j - eps_i).
The total population is conserved exactly and rho ~ e^{-beta eps} is
stationary to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate
from scipy.special import zeta

from .parallel import ordered_map
from .units import PhysicalParams

S_CUTOFF = 60.0    # photon energies beyond s0 + 60 T are dropped (e^-60)
K_CUTOFF = 100.0   # momentum transfers beyond |dq| + 100 T are dropped


# --------------------------------------------------------------------------
# photons and scattering weights


def planck_n(k, T):
    """Bose-Einstein occupation 1/(e^{k/T} - 1)."""
    k = np.asarray(k, dtype=float)
    if np.any(k <= 0):
        raise ValueError("photon energy must be positive")
    if T <= 0:
        raise ValueError("temperature must be positive")
    out = 1.0 / np.expm1(k / T)
    return out if out.ndim else float(out)


def photon_density(T: float) -> float:
    """Photon number density, both polarizations: 2 zeta(3) T^3 / pi^2."""
    return 2 * zeta(3) * T ** 3 / math.pi ** 2


def thomson_cross_section(params: PhysicalParams) -> float:
    return 8 * math.pi * params.alpha ** 2 / (3 * params.m ** 2)


def w_nonrel(k1, k2, params: PhysicalParams) -> float:
    """pi e^4 / (2 m^2 |k1||k2|) [1 + cos^2(k1, k2)]."""
    k1 = np.asarray(k1, dtype=float)
    k2 = np.asarray(k2, dtype=float)
    a = np.linalg.norm(k1, axis=-1)
    b = np.linalg.norm(k2, axis=-1)
    if np.any(a == 0) or np.any(b == 0):
        raise ValueError("photon momenta must be non-zero")
    cos = np.sum(k1 * k2, axis=-1) / (a * b)
    out = math.pi * params.e2 ** 2 / (2 * params.m ** 2 * a * b) * (1 + cos ** 2)
    return out if np.ndim(out) else float(out)


# Dirac representation
_SIGMA = [np.array([[0, 1], [1, 0]], dtype=complex),
          np.array([[0, -1j], [1j, 0]], dtype=complex),
          np.array([[1, 0], [0, -1]], dtype=complex)]
GAMMA = np.zeros((4, 4, 4), dtype=complex)
GAMMA[0] = np.diag([1, 1, -1, -1]).astype(complex)
for _i, _s in enumerate(_SIGMA):
    GAMMA[_i + 1][:2, 2:] = _s
    GAMMA[_i + 1][2:, :2] = -_s
_METRIC = np.diag([1.0, -1.0, -1.0, -1.0])


def slash(a) -> np.ndarray:
    """a_mu gamma^mu for a contravariant 4-vector."""
    a_low = _METRIC @ np.asarray(a, dtype=float)
    return np.einsum("m,mij->ij", a_low, GAMMA)


def _mdot(a, b):
    return a[0] * b[0] - np.dot(a[1:], b[1:])


def _coulomb_projector(k):
    from .ir_kernel import coulomb_projector
    return coulomb_projector(k)


def w_trace(q, k, k1, k2, params: PhysicalParams, tol: float = 1e-9) -> float:
    """Scattering weight for electron(q) + photon(k2) -> electron(q + k) + photon(k1).

    The squared amplitude is the Dirac trace with Coulomb-gauge projectors on
    both photon lines and the two tree-level propagators (q - k1) and (q + k2);
    normalised by 2 eps_q 2 eps_{q+k} 2|k1| 2|k2|.
    """
    m = params.m
    q, k, k1, k2 = (np.asarray(v, dtype=float) for v in (q, k, k1, k2))
    scale = max(m * m, 1e-300)
    if abs(_mdot(q, q) - m * m) > tol * scale:
        raise ValueError("electron momentum off shell")
    for kk in (k1, k2):
        if abs(_mdot(kk, kk)) > tol * max(kk[0] ** 2, 1e-300) or kk[0] <= 0:
            raise ValueError("photon momenta must be light-like with positive energy")
    qf = q + k
    if np.max(np.abs(k - (k2 - k1))) > tol * max(np.max(np.abs(k2)), 1e-300):
        raise ValueError("k must equal k2 - k1")
    if abs(_mdot(qf, qf) - m * m) > tol * scale:
        raise ValueError("final electron off shell (energy not conserved)")
    den1 = m * m - _mdot(q - k1, q - k1)
    den2 = m * m - _mdot(q + k2, q + k2)
    if min(abs(den1), abs(den2)) < 1e-8 * m * m:
        raise ValueError("near-collinear configuration: propagator denominator too small")
    eye = np.eye(4)
    s1 = (slash(q - k1) + m * eye) / den1
    s2 = (slash(q + k2) + m * eye) / den2
    # M[b, a] = g^b S1 g^a + g^a S2 g^b
    M = np.einsum("bij,jk,akl->bail", GAMMA, s1, GAMMA) + np.einsum("aij,jk,bkl->bail", GAMMA, s2, GAMMA)
    pf = slash(qf) + m * eye
    pi_ = slash(q) + m * eye
    d1 = _coulomb_projector(k1)
    d2 = _coulomb_projector(k2)
    # tr{pf M[b,a] pi N[mu,nu]} with N[mu,nu] = M[nu,mu] structure
    N = np.einsum("mij,jk,nkl->mnil", GAMMA, s1, GAMMA) + np.einsum("nij,jk,mkl->mnil", GAMMA, s2, GAMMA)
    left = np.einsum("ij,bajk,kl->bail", pf, M, pi_)
    tr = np.einsum("bail,mnli->bamn", left, N)
    total = np.einsum("ma,nb,bamn->", d1, d2, tr)
    pref = math.pi * params.e2 ** 2 / (16 * q[0] * qf[0] * k1[0] * k2[0])
    val = pref * total
    if abs(val.imag) > 1e-8 * max(abs(val.real), 1e-300):
        raise ArithmeticError("trace has a non-negligible imaginary part")
    return float(val.real)


def compton_kinematics(q3, k2_3, k1_dir, m: float):
    """On-shell 4-vectors for electron(q) + photon(k2) -> electron(q + k) + photon(k1).

    The outgoing photon direction ``k1_dir`` is given; its energy is solved
    from energy conservation by Newton iteration.
    """
    q3 = np.asarray(q3, dtype=float)
    k2_3 = np.asarray(k2_3, dtype=float)
    nd = np.asarray(k1_dir, dtype=float)
    nd = nd / np.linalg.norm(nd)
    eq = math.sqrt(m * m + q3 @ q3)
    k2m = math.sqrt(k2_3 @ k2_3)
    x = k2m
    for _ in range(100):
        pf = q3 + k2_3 - x * nd
        ef = math.sqrt(m * m + pf @ pf)
        f = ef + x - eq - k2m
        df = 1.0 - (pf @ nd) / ef
        step = f / df
        x -= step
        if abs(step) <= 1e-16 * max(abs(x), 1e-300):
            break
    k1 = np.concatenate([[x], x * nd])
    k2 = np.concatenate([[k2m], k2_3])
    q = np.concatenate([[eq], q3])
    return q, k2 - k1, k1, k2


# --------------------------------------------------------------------------
# collision kernel F(k, D)


def _cos_psi(s, delta, k):
    lo = s
    hi = s + delta
    return (lo * lo + hi * hi - k * k) / (2 * lo * hi)


def _occupation(s, delta, T, stimulated):
    """Occupation factor in the lower-photon-energy variable s (delta >= 0 here)."""
    n_lo = 1.0 / np.expm1(s / T)
    n_hi = 1.0 / np.expm1((s + delta) / T)
    return n_lo, n_hi


def kernel_f(k, D, params: PhysicalParams, stimulated: bool = True, n_nodes: int = 32):
    """F(k, D) on fixed Gauss-Legendre nodes in ln s (vectorised over k and D).

    The same nodes serve D and -D, which keeps detailed balance exact.
    """
    k = np.asarray(k, dtype=float)
    D = np.asarray(D, dtype=float)
    k, D = np.broadcast_arrays(k, D)
    T = params.T
    ad = np.abs(D)
    out = np.zeros(k.shape)
    ok = (ad < k) & (k > 0)
    if not np.any(ok):
        return out
    kk = k[ok]
    dd = ad[ok]
    sign = np.sign(D[ok])
    s0 = 0.5 * (kk - dd)
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    total = np.zeros(kk.shape)
    # two segments in ln s: [s0, s0 + T] and [s0 + T, s0 + S_CUTOFF T]
    for a_, b_ in ((s0, s0 + T), (s0 + T, s0 + S_CUTOFF * T)):
        la = np.log(a_)
        lb = np.log(b_)
        half = 0.5 * (lb - la)
        y = 0.5 * (la + lb)[:, None] + half[:, None] * x[None, :]
        s = np.exp(y)
        jac = half[:, None] * w[None, :] * s
        n_lo = 1.0 / np.expm1(s / T)
        n_hi = 1.0 / np.expm1((s + dd[:, None]) / T)
        if stimulated:
            occ = np.where(sign[:, None] >= 0, n_lo * (1 + n_hi), n_hi * (1 + n_lo))
        else:
            occ = np.where(sign[:, None] >= 0, n_lo, n_hi)
        c = _cos_psi(s, dd[:, None], kk[:, None])
        total += np.sum(jac * (1 + c * c) * occ, axis=1)
    out[ok] = params.e2 ** 2 / (8 * math.pi * params.m ** 2 * kk) * total
    return out


def _energy(q, m):
    q = np.asarray(q, dtype=float)
    return np.sqrt(m * m + np.sum(q * q, axis=-1))


def collision_rate(q, k, params: PhysicalParams, tol: float = 1e-10, stimulated: bool = True) -> float:
    """C(q, k): rate of the transition q + k -> q, by adaptive quadrature over the photon energy.

    Returns 0 for k = 0 (the elastic limit: gain and loss coincide) and for
    kinematically forbidden transfers.
    """
    q = np.asarray(q, dtype=float)
    k = np.asarray(k, dtype=float)
    T = params.T
    if T <= 0:
        raise ValueError("collision rate needs T > 0")
    kn = float(np.linalg.norm(k))
    if kn == 0.0:
        return 0.0
    m = params.m
    e_q = float(_energy(q, m))
    e_qk = float(_energy(q + k, m))
    D = (e_qk - e_q)
    # cancellation-free energy difference
    D = float((2 * q @ k + k @ k) / (e_qk + e_q))
    dd = abs(D)
    if dd >= kn:
        return 0.0
    s0 = 0.5 * (kn - dd)

    def f(s):
        n_lo = 1.0 / math.expm1(s / T)
        n_hi = 1.0 / math.expm1((s + dd) / T)
        if stimulated:
            occ = n_lo * (1 + n_hi) if D >= 0 else n_hi * (1 + n_lo)
        else:
            occ = n_lo if D >= 0 else n_hi
        c = _cos_psi(s, dd, kn)
        return (1 + c * c) * occ

    # integrate in ln s for the 1/s behaviour near small s0
    g = lambda y: f(math.exp(y)) * math.exp(y)
    pts = [math.log(s0), math.log(s0 + T), math.log(s0 + S_CUTOFF * T)]
    total = 0.0
    for a_, b_ in zip(pts[:-1], pts[1:]):
        val, err = integrate.quad(g, a_, b_, epsabs=0.0, epsrel=tol, limit=200)
        if not math.isfinite(val) or err > max(10 * tol * abs(val), 1e-300):
            raise ArithmeticError(f"collision-rate quadrature failed (error {err:.2e})")
        total += val
    return params.e2 ** 2 / (8 * math.pi * params.m ** 2 * kn) * total


def detailed_balance_pointwise(s, D, T):
    """Both sides of n(p)(1 + n(p'))e^{-beta D} = n(p')(1 + n(p)) with p' = p + D, on the shell."""
    n_p = 1.0 / np.expm1(s / T)
    n_pp = 1.0 / np.expm1((s + D) / T)
    return n_p * (1 + n_pp) * np.exp(-D / T), n_pp * (1 + n_p)


def _transfer_integral(q, params, weight_fn, stimulated=True, n_k=48, n_chi=48):
    """int d^3k/(2 pi)^3 C(q + k, -k) weight(k) for an electron at |q| (axis z)."""
    qn = float(np.linalg.norm(q))
    m = params.m
    T = params.T
    e_q = math.sqrt(m * m + qn * qn)
    chi, wchi = np.polynomial.legendre.leggauss(n_chi)
    total = 0.0
    # ln k grid: soft transfers matter through F ~ ln(1/k)
    edges = [1e-6 * T, 0.1 * T, T, 10 * T, K_CUTOFF * T]
    for a_, b_ in zip(edges[:-1], edges[1:]):
        x, w = np.polynomial.legendre.leggauss(n_k)
        la, lb = math.log(a_), math.log(b_)
        y = 0.5 * (la + lb) + 0.5 * (lb - la) * x
        kk = np.exp(y)
        wk = 0.5 * (lb - la) * w * kk
        K, C = np.meshgrid(kk, chi, indexing="ij")
        qk2 = qn * qn + K * K + 2 * qn * K * C
        e_qk = np.sqrt(m * m + qk2)
        D = -(2 * qn * K * C + K * K) / (e_qk + e_q)   # eps_q - eps_{q+k}
        F = kernel_f(K, D, params, stimulated=stimulated, n_nodes=48)
        integrand = F * weight_fn(e_qk - e_q) * K * K
        total += np.sum(integrand * wk[:, None] * wchi[None, :])
    return total * 2 * math.pi / (2 * math.pi) ** 3


def loss_rate(q, params: PhysicalParams, stimulated: bool = True) -> float:
    """Total out-scattering rate int d^3k/(2 pi)^3 C(q + k, -k)."""
    return _transfer_integral(q, params, lambda de: np.ones_like(de), stimulated)


def energy_drift(q, params: PhysicalParams, stimulated: bool = True) -> float:
    """Mean energy gain rate of an electron at q: int d^3k/(2 pi)^3 C(q + k, -k)(eps_{q+k} - eps_q)."""
    return _transfer_integral(q, params, lambda de: de, stimulated)


# --------------------------------------------------------------------------
# distributions and the radial master equation


@dataclass(frozen=True, eq=False)
class MomentumDistribution:
    """Isotropic rho(|q|) on cell centres ``grid`` with widths ``widths``."""

    grid: np.ndarray
    values: np.ndarray
    widths: Optional[np.ndarray] = None
    isotropic: bool = True
    t: float = 0.0

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.ndim != 1 or v.shape != g.shape:
            raise ValueError("grid and values must be 1-D of equal length")
        if np.any(g <= 0) or np.any(np.diff(g) <= 0):
            raise ValueError("grid must be positive and increasing")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("distribution must be finite and non-negative")
        if not self.isotropic:
            raise ValueError("only isotropic distributions are supported")
        w = self.widths
        if w is None:
            w = _cell_widths(g)
        w = np.asarray(w, dtype=float)
        for name, arr in (("grid", g), ("values", v), ("widths", w)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def measure(self) -> np.ndarray:
        """4 pi q^2 dq / (2 pi)^3 per cell."""
        return self.grid ** 2 * self.widths / (2 * math.pi ** 2)

    def trace(self) -> float:
        return float(self.measure @ self.values)

    def mean_energy(self, m: float) -> float:
        return float(self.measure @ (self.values * np.sqrt(m * m + self.grid ** 2))) / self.trace()

    def normalized(self) -> "MomentumDistribution":
        return MomentumDistribution(self.grid, self.values / self.trace(), self.widths, t=self.t)

    @classmethod
    def boltzmann(cls, grid, temperature: float, m: float, widths=None) -> "MomentumDistribution":
        g = np.asarray(grid, dtype=float)
        eps = np.sqrt(m * m + g * g)
        d = cls(g, np.exp(-(eps - m) / temperature), widths)
        return d.normalized()

    @classmethod
    def shell(cls, grid, q0: float, width: float, widths=None) -> "MomentumDistribution":
        g = np.asarray(grid, dtype=float)
        d = cls(g, (np.abs(g - q0) <= width).astype(float), widths)
        if d.trace() == 0:
            raise ValueError("shell contains no grid cell")
        return d.normalized()


def _cell_widths(g):
    edges = np.concatenate([[0.0], 0.5 * (g[1:] + g[:-1]), [g[-1] + 0.5 * (g[-1] - g[-2]) if g.size > 1 else 2 * g[0]]])
    return np.diff(edges)


def radial_grid(q_max: float, n: int):
    """Midpoint cells on (0, q_max]."""
    h = q_max / n
    return (np.arange(n) + 0.5) * h, np.full(n, h)


def _pair_block(args):
    qi, qj, ei, ej, params, n_k = args
    x, w = np.polynomial.legendre.leggauss(n_k)
    dq = np.abs(qi - qj)
    D = ej - ei                                  # energy released going j -> i
    ad = np.abs(D)
    k_hi = np.minimum(qi + qj, dq + K_CUTOFF * params.T)
    # ln(k - |D|) variable resolves the soft end
    la = np.log(dq - ad)
    lb = np.log(k_hi - ad)
    half = 0.5 * (lb - la)
    y = 0.5 * (la + lb)[:, None] + half[:, None] * x[None, :]
    u = np.exp(y)
    kk = ad[:, None] + u
    wk = half[:, None] * w[None, :] * u
    f_fwd = kernel_f(kk, np.broadcast_to(D[:, None], kk.shape), params)
    f_bwd = kernel_f(kk, np.broadcast_to(-D[:, None], kk.shape), params)
    norm = 1.0 / (qi * qj)
    return norm * np.sum(wk * kk * f_fwd, axis=1), norm * np.sum(wk * kk * f_bwd, axis=1)


@dataclass(frozen=True, eq=False)
class CollisionOperator:
    """Discrete gain/loss operator on a radial grid (built once per grid and bath)."""

    grid: np.ndarray
    widths: np.ndarray
    params: PhysicalParams
    n_k: int = 32
    transfer: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        w = np.asarray(self.widths, dtype=float)
        if self.params.T <= 0:
            raise ValueError("kinetics needs a thermal bath (T > 0)")
        m = self.params.m
        eps = np.sqrt(m * m + g * g)
        n = g.size
        iu, ju = np.triu_indices(n, k=1)
        G = np.zeros((n, n))
        rows = 4096
        chunks = [(iu[a:a + rows], ju[a:a + rows]) for a in range(0, iu.size, rows)]
        results = ordered_map(
            lambda c: _pair_block((g[c[0]], g[c[1]], eps[c[0]], eps[c[1]], self.params, self.n_k)), chunks)
        for (ii, jj), (fwd, bwd) in zip(chunks, results):
            G[ii, jj] = fwd      # j -> i
            G[jj, ii] = bwd      # i -> j
        S = np.outer(g * g * w, g * g * w) / (8 * math.pi ** 4)
        K = S * G
        K.setflags(write=False)
        object.__setattr__(self, "transfer", K)

    @property
    def measure(self):
        return self.grid ** 2 * self.widths / (2 * math.pi ** 2)

    def gain(self, rho: np.ndarray) -> np.ndarray:
        return (self.transfer @ rho) / self.measure

    def loss_rates(self) -> np.ndarray:
        """Per-cell out-rate: the coefficient of -rho_i in d rho_i / dt."""
        return self.transfer.sum(axis=0) / self.measure

    def rhs(self, rho: np.ndarray) -> np.ndarray:
        return self.gain(rho) - self.loss_rates() * rho

    def max_rate(self) -> float:
        return float(np.max(self.loss_rates()))


_OPERATORS: dict = {}


def collision_operator(grid, widths, params: PhysicalParams) -> CollisionOperator:
    key = (np.asarray(grid).tobytes(), np.asarray(widths).tobytes(), params)
    op = _OPERATORS.get(key)
    if op is None:
        if len(_OPERATORS) > 8:
            _OPERATORS.clear()
        op = _OPERATORS[key] = CollisionOperator(np.asarray(grid), np.asarray(widths), params)
    return op


class StepRejected(ArithmeticError):
    def __init__(self, msg, suggested_dt):
        super().__init__(f"{msg}; suggested dt = {suggested_dt:.6e}")
        self.suggested_dt = suggested_dt


def step(rho: MomentumDistribution, dt: float, params: PhysicalParams) -> MomentumDistribution:
    """One explicit Euler step of the collision equation."""
    op = collision_operator(rho.grid, rho.widths, params)
    limit = 0.01 / op.max_rate()
    if dt > limit * (1 + 1e-12):
        raise StepRejected("dt exceeds the explicit stability bound", limit)
    new = rho.values + dt * op.rhs(rho.values)
    if np.any(new < 0):
        raise StepRejected("negative density produced", 0.5 * dt)
    return MomentumDistribution(rho.grid, new, rho.widths, t=rho.t + dt)


def equilibrium_residual(rho: MomentumDistribution, params: PhysicalParams) -> float:
    """sup |collision integral| / sup gain term."""
    op = collision_operator(rho.grid, rho.widths, params)
    gain = op.gain(rho.values)
    return float(np.max(np.abs(op.rhs(rho.values))) / np.max(np.abs(gain)))


@dataclass
class Relaxation:
    times: np.ndarray
    mean_energy: np.ndarray
    residual: np.ndarray
    final: MomentumDistribution


def relax(rho: MomentumDistribution, params: PhysicalParams, t_end: float, dt: Optional[float] = None,
          record_every: int = 1) -> Relaxation:
    """Repeated steps up to ``t_end``; dt defaults to the stability bound."""
    op = collision_operator(rho.grid, rho.widths, params)
    dt = dt if dt is not None else 0.01 / op.max_rate()
    n_steps = int(math.ceil(t_end / dt))
    times, energies, residuals = [rho.t], [rho.mean_energy(params.m)], [equilibrium_residual(rho, params)]
    cur = rho
    for i in range(n_steps):
        cur = step(cur, dt, params)
        if (i + 1) % record_every == 0 or i + 1 == n_steps:
            times.append(cur.t)
            energies.append(cur.mean_energy(params.m))
            residuals.append(equilibrium_residual(cur, params))
    return Relaxation(np.array(times), np.array(energies), np.array(residuals), cur)


def relaxation_rate(times, energies, e_eq: float, window=(0.2, 1.0)) -> float:
    """Fit <eps>(t) - eps_eq ~ e^{-rate t} over a fractional window of the record."""
    t = np.asarray(times)
    y = np.asarray(energies) - e_eq
    lo = int(window[0] * (t.size - 1))
    hi = int(window[1] * (t.size - 1)) + 1
    sel = slice(lo, hi)
    if np.any(y[sel] <= 0):
        raise ValueError("mean energy not above equilibrium in the fit window")
    slope, _ = np.polyfit(t[sel], np.log(y[sel]), 1)
    return float(-slope)


# --------------------------------------------------------------------------
# Monte-Carlo oracle


def _stream(seed: int, index: int):
    """Counter-based generator for chunk ``index``; independent of how chunks are scheduled."""
    return np.random.Generator(np.random.Philox(key=int(seed)).jumped(int(index)))


def _planck_table(T, n=4096, x_max=60.0):
    x = np.linspace(0.0, x_max, n)
    pdf = np.zeros_like(x)
    pdf[1:] = x[1:] ** 2 / np.expm1(x[1:])
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(x))])
    cdf /= cdf[-1]
    return x * T, cdf


def sample_planck(rng, T, size, table=None):
    """Photon energies with pdf ~ p^2 n(p), by inverse CDF on a tabulated spectrum."""
    grid, cdf = table if table is not None else _planck_table(T)
    return np.interp(rng.random(size), cdf, grid)


def sample_dipole_cos(rng, size):
    """cos(psi) with pdf 3(1 + c^2)/8 on [-1, 1] (closed-form inverse of the cubic CDF)."""
    u = rng.random(size)
    # c^3 + 3c = 8u - 4 ; Cardano
    r = 4.0 * u - 2.0
    d = np.sqrt(r * r + 1.0)
    return np.cbrt(r + d) + np.cbrt(r - d)


def _orthonormal(v):
    a = np.where(np.abs(v[:, :1]) < 0.9, np.array([[1.0, 0, 0]]), np.array([[0, 1.0, 0]]))
    e1 = a - np.sum(a * v, axis=1, keepdims=True) * v
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(v, e1)
    return e1, e2


def mc_transfer(q, params: PhysicalParams, n_samples: int, seed: int, chunk: int = 65536,
                stimulated: bool = True):
    """Monte-Carlo estimate of the out-rate and energy drift of an electron at ``q``.

    Returns dict with ``rate``, ``rate_err``, ``drift``, ``drift_err``.
    """
    q = np.asarray(q, dtype=float)
    m = params.m
    T = params.T
    e_q = math.sqrt(m * m + q @ q)
    table = _planck_table(T)
    n0 = photon_density(T) / 2
    pref = n0 * params.e2 ** 2 / (3 * math.pi * m * m)
    n_chunks = int(math.ceil(n_samples / chunk))

    def run(ci):
        size = min(chunk, n_samples - ci * chunk)
        rng = _stream(seed, ci)
        p = sample_planck(rng, T, size, table)
        p = np.maximum(p, 1e-300)
        pdir = rng.normal(size=(size, 3))
        pdir /= np.linalg.norm(pdir, axis=1, keepdims=True)
        c = sample_dipole_cos(rng, size)
        phi = 2 * math.pi * rng.random(size)
        e1, e2 = _orthonormal(pdir)
        sn = np.sqrt(np.clip(1 - c * c, 0, None))
        out = c[:, None] * pdir + sn[:, None] * (np.cos(phi)[:, None] * e1 + np.sin(phi)[:, None] * e2)
        tot = q[None, :] + p[:, None] * pdir
        x = p.copy()
        for _ in range(60):
            pf = tot - x[:, None] * out
            ef = np.sqrt(m * m + np.sum(pf * pf, axis=1))
            f = ef + x - e_q - p
            df = 1.0 - np.sum(pf * out, axis=1) / ef
            dx = f / df
            x = x - dx
            if np.max(np.abs(dx) / np.maximum(x, 1e-300)) < 1e-15:
                break
        pf = tot - x[:, None] * out
        ef = np.sqrt(m * m + np.sum(pf * pf, axis=1))
        df = 1.0 - np.sum(pf * out, axis=1) / ef
        occ = 1 + 1.0 / np.expm1(x / T) if stimulated else 1.0
        wgt = pref * x / (p * np.abs(df)) * occ
        de = ef - e_q
        return np.array([wgt.sum(), (wgt ** 2).sum(), (wgt * de).sum(), ((wgt * de) ** 2).sum(), size])

    acc = np.zeros(5)
    for part in ordered_map(run, range(n_chunks)):
        acc += part
    n = acc[4]
    rate = acc[0] / n
    drift = acc[2] / n
    rate_err = math.sqrt(max(acc[1] / n - rate ** 2, 0.0) / n)
    drift_err = math.sqrt(max(acc[3] / n - drift ** 2, 0.0) / n)
    return dict(rate=rate, rate_err=rate_err, drift=drift, drift_err=drift_err)


def mc_mean_energy_rate(dist: MomentumDistribution, params: PhysicalParams, n_samples: int, seed: int,
                        chunk: int = 65536):
    """Monte-Carlo d<eps>/dt for an isotropic distribution: electrons drawn from the cells."""
    prob = dist.measure * dist.values
    prob = prob / prob.sum()
    cdf = np.cumsum(prob)
    m = params.m
    n_chunks = int(math.ceil(n_samples / chunk))
    table = _planck_table(params.T)
    n0 = photon_density(params.T) / 2
    pref = n0 * params.e2 ** 2 / (3 * math.pi * m * m)
    T = params.T

    def run(ci):
        size = min(chunk, n_samples - ci * chunk)
        rng = _stream(seed, ci)
        cell = np.minimum(np.searchsorted(cdf, rng.random(size)), cdf.size - 1)
        qm = dist.grid[cell]
        qdir = rng.normal(size=(size, 3))
        qdir /= np.linalg.norm(qdir, axis=1, keepdims=True)
        qv = qm[:, None] * qdir
        e_q = np.sqrt(m * m + qm * qm)
        p = np.maximum(sample_planck(rng, T, size, table), 1e-300)
        pdir = rng.normal(size=(size, 3))
        pdir /= np.linalg.norm(pdir, axis=1, keepdims=True)
        c = sample_dipole_cos(rng, size)
        phi = 2 * math.pi * rng.random(size)
        e1, e2 = _orthonormal(pdir)
        sn = np.sqrt(np.clip(1 - c * c, 0, None))
        out = c[:, None] * pdir + sn[:, None] * (np.cos(phi)[:, None] * e1 + np.sin(phi)[:, None] * e2)
        tot = qv + p[:, None] * pdir
        x = p.copy()
        for _ in range(60):
            pf = tot - x[:, None] * out
            ef = np.sqrt(m * m + np.sum(pf * pf, axis=1))
            dx = (ef + x - e_q - p) / (1.0 - np.sum(pf * out, axis=1) / ef)
            x = x - dx
            if np.max(np.abs(dx) / np.maximum(x, 1e-300)) < 1e-15:
                break
        pf = tot - x[:, None] * out
        ef = np.sqrt(m * m + np.sum(pf * pf, axis=1))
        df = 1.0 - np.sum(pf * out, axis=1) / ef
        wgt = pref * x / (p * np.abs(df)) * (1 + 1.0 / np.expm1(x / T))
        val = wgt * (ef - e_q)
        return np.array([val.sum(), (val ** 2).sum(), size])

    acc = np.zeros(3)
    for part in ordered_map(run, range(n_chunks)):
        acc += part
    mean = acc[0] / acc[2]
    err = math.sqrt(max(acc[1] / acc[2] - mean ** 2, 0.0) / acc[2])
    return mean, err
