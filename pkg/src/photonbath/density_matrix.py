"""Momentum-space density matrix of an unpolarized electron and its
closed-form infrared propagator.

Grid states are stored as rho(q, q + p) on a (q-grid x p-grid) pair.  Large
grids are never materialised: a state keeps a generating function of (q, p)
together with the accumulated free-phase time and damping coefficient, and
evaluates rows in fixed-size chunks on demand.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator, Optional, Union

import numpy as np

from .parallel import ordered_map
from .units import PhysicalParams

CHUNK_ROWS = 256
NONREL_FRACTION = 0.1
_MAX_DENSE = 60_000_000


def ir_decoherence_factor(p2, t, params: PhysicalParams):
    """Damping of the off-diagonal element with momentum transfer squared ``p2``.

    exp(-2 alpha p2 T t / (3 m^2)); equals 1 on the diagonal and at t = 0.
    """
    p2 = np.asarray(p2, dtype=float)
    if np.any(p2 < 0):
        raise ValueError("p2 must be non-negative")
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be non-negative")
    out = np.exp(-params.theta * p2 * np.asarray(t, dtype=float))
    return out if out.ndim else float(out)


def energy(q2, m):
    return np.sqrt(m * m + q2)


def _dot(a, b):
    """Broadcasting dot product over the last axis."""
    out = a[..., 0] * b[..., 0]
    for i in range(1, a.shape[-1]):
        out = out + a[..., i] * b[..., i]
    return out


def energy_difference(q, p, m):
    """eps(q + p) - eps(q) without cancellation; ``q`` and ``p`` broadcast over the last axis."""
    q2 = _dot(q, q)
    num = 2.0 * _dot(q, p) + _dot(p, p)
    return num / (energy(q2 + num, m) + energy(q2, m))


# --------------------------------------------------------------------------
# grids


def _trapezoid_weights(axis):
    if axis.size == 1:
        return np.array([2.0 * math.pi])
    w = np.empty_like(axis)
    d = np.diff(axis)
    w[0] = 0.5 * d[0]
    w[-1] = 0.5 * d[-1]
    w[1:-1] = 0.5 * (d[1:] + d[:-1])
    return w


@dataclass(frozen=True, eq=False)
class MomentumGrid:
    """Tensor-product momentum grid in 1 or 3 dimensions.

    Parameters
    ----------
    axes : tuple of 1-D arrays
        Strictly increasing points along each axis (eV).
    weights : tuple of 1-D arrays, optional
        Quadrature weights per axis; trapezoidal by default.  A single-point
        axis gets weight 2 pi so that it acts as a Kronecker delta.
    discrete : bool
        Marks a comb of isolated momenta (plane-wave superpositions).  Such
        grids represent exactly periodic densities, so no Nyquist check applies.
    """

    axes: tuple
    weights: tuple = None
    discrete: bool = False

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float).ravel() for a in self.axes)
        if len(axes) not in (1, 3):
            raise ValueError("grid dimensionality must be 1 or 3")
        for a in axes:
            if a.size == 0 or not np.all(np.isfinite(a)):
                raise ValueError("grid axes must be non-empty and finite")
            if np.any(np.diff(a) <= 0):
                raise ValueError("grid axes must be strictly increasing")
        if self.weights is None:
            weights = tuple(_trapezoid_weights(a) for a in axes)
        else:
            weights = tuple(np.asarray(w, dtype=float).ravel() for w in self.weights)
            if len(weights) != len(axes) or any(w.shape != a.shape for w, a in zip(weights, axes)):
                raise ValueError("weights must match the axes")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, n: int, half_width: float, dim: int = 3) -> "MomentumGrid":
        """``n`` equally spaced points on [-half_width, half_width] per axis."""
        ax = np.linspace(-half_width, half_width, n)
        return cls(tuple(ax for _ in range(dim)))

    @classmethod
    def single(cls, point, discrete=True) -> "MomentumGrid":
        point = np.atleast_1d(np.asarray(point, dtype=float))
        return cls(tuple(np.array([v]) for v in point), discrete=discrete)

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(a.size for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)

    def flat_weights(self) -> np.ndarray:
        w = self.weights[0]
        for wi in self.weights[1:]:
            w = np.multiply.outer(w, wi)
        return np.asarray(w).ravel()

    def max_norm(self) -> float:
        return float(np.sqrt(sum(np.max(a ** 2) for a in self.axes)))

    def zero_index(self) -> Optional[int]:
        idx = []
        for a in self.axes:
            hit = np.nonzero(a == 0.0)[0]
            if hit.size == 0:
                return None
            idx.append(int(hit[0]))
        return int(np.ravel_multi_index(tuple(idx), self.shape))

    def nyquist_limits(self) -> np.ndarray:
        """Largest |x_i| resolvable without aliasing (inf for single-point axes)."""
        out = []
        for a in self.axes:
            out.append(np.inf if a.size < 2 else math.pi / float(np.max(np.diff(a))))
        return np.array(out)

    def same_as(self, other: "MomentumGrid") -> bool:
        return (
            self.dim == other.dim
            and all(a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self.axes, other.axes))
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
        )


# --------------------------------------------------------------------------
# states


@dataclass(frozen=True)
class GaussianPure:
    """Pure Gaussian packet phi(q) = (4 pi l^2)^{d/4} e^{-l^2 q^2/2} e^{-i q.x0 + i eps_q tau}.

    ``tau`` is the back-focus time: the packet was prepared by evolving a
    minimal packet backwards by ``tau``.  ``elapsed`` and ``damping`` record the
    propagation applied so far (``damping`` = sum of Theta_i t_i).
    """

    l: float
    x0: tuple = (0.0, 0.0, 0.0)
    tau: float = 0.0
    m: Optional[float] = None
    elapsed: float = 0.0
    damping: float = 0.0

    def __post_init__(self):
        if not self.l > 0:
            raise ValueError("l must be positive")
        x0 = tuple(float(v) for v in np.ravel(self.x0))
        if len(x0) not in (1, 3):
            raise ValueError("x0 must have 1 or 3 components")
        object.__setattr__(self, "x0", x0)
        if self.tau < 0 or self.elapsed < 0 or self.damping < 0:
            raise ValueError("times and damping must be non-negative")

    @property
    def t(self) -> float:
        return self.elapsed

    def width2(self) -> float:
        """Squared width of the charge density at the current time."""
        quantum = 0.0
        if self.elapsed != self.tau:
            if self.m is None:
                raise ValueError("mass unknown: propagate the packet or pass m")
            quantum = (self.elapsed - self.tau) ** 2 / (self.m * self.l) ** 2
        return self.l ** 2 + quantum + 4.0 * self.damping

    def amplitude(self, q: np.ndarray, m: float) -> np.ndarray:
        """phi(q) at t = 0 for points ``q`` of shape (..., d)."""
        d = q.shape[-1]
        x0 = np.asarray(self.x0[:d])
        q2 = _dot(q, q)
        phase = -q @ x0
        if self.tau:
            phase = phase + energy(q2, m) * self.tau
        return (4 * math.pi * self.l ** 2) ** (d / 4) * np.exp(-0.5 * self.l ** 2 * q2 + 1j * phase)

    def to_grid(self, q_grid: MomentumGrid, p_grid: MomentumGrid, m: Optional[float] = None) -> "GridDensityMatrix":
        """Sample the current state on a grid (lazily)."""
        m = m if m is not None else self.m
        if m is None:
            raise ValueError("mass required to sample the packet")
        if q_grid.dim != p_grid.dim:
            raise ValueError("q and p grids must share dimensionality")
        if q_grid.dim == 1 and len(self.x0) == 3 and any(self.x0[1:]):
            raise ValueError("1-D sampling needs x0 along the first axis")

        return GridDensityMatrix(
            q_grid, p_grid, source=_GaussianSource(self, m), phase_time=self.elapsed,
            damping=self.damping, mass=m,
        )


class _GaussianSource:
    """rho0(q, q + p) = phi(q) conj(phi(q + p)) for a :class:`GaussianPure`."""

    def __init__(self, packet: GaussianPure, m: float):
        self.packet = packet
        self.m = m

    def log(self, q, p):
        g = self.packet
        d = q.shape[-1]
        x0 = np.asarray(g.x0[:d])
        qp = q + p
        re = d / 2 * math.log(4 * math.pi * g.l ** 2) - 0.5 * g.l ** 2 * (_dot(q, q) + _dot(qp, qp))
        im = p @ x0
        if g.tau:
            im = im - g.tau * energy_difference(q, p, self.m)
        return re + 1j * im

    def __call__(self, q, p):
        return np.exp(self.log(q, p))


@dataclass(frozen=True, eq=False)
class GridDensityMatrix:
    """rho(q, q + p) on a q-grid times p-grid.

    Either ``values`` (array of shape (q_grid.size, p_grid.size)) or ``source``
    (callable of broadcastable q and p arrays of shape (..., d) returning
    rho(q, q + p)) describes the initial data; ``phase_time`` and ``damping``
    are the accumulated propagation, applied on evaluation.

    For source-backed states the q-sum in :meth:`column_sums` runs over the
    midpoint variable, rho(Q - p/2, Q + p/2).  In the continuum this is the
    same integral; on a symmetric grid it keeps the sum exactly Hermitian,
    so a truncated window cannot leak an imaginary part into the density.
    """

    q_grid: MomentumGrid
    p_grid: MomentumGrid
    values: Optional[np.ndarray] = None
    source: Optional[Callable] = None
    phase_time: float = 0.0
    damping: float = 0.0
    mass: Optional[float] = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.q_grid.dim != self.p_grid.dim:
            raise ValueError("q and p grids must share dimensionality")
        if (self.values is None) == (self.source is None):
            raise ValueError("give exactly one of values or source")
        if self.values is not None:
            v = np.asarray(self.values, dtype=complex)
            if v.shape != (self.q_grid.size, self.p_grid.size):
                raise ValueError("values shape does not match the grids")
            v = v.copy()
            v.setflags(write=False)
            object.__setattr__(self, "values", v)
        if self.phase_time and self.mass is None:
            raise ValueError("mass required once a free phase has accumulated")

    @property
    def t(self) -> float:
        return self.phase_time

    @property
    def dim(self) -> int:
        return self.q_grid.dim

    # evaluation -----------------------------------------------------------

    def _chunks(self):
        n = self.q_grid.size
        return [(i, min(i + CHUNK_ROWS, n)) for i in range(0, n, CHUNK_ROWS)]

    def _qpoints(self):
        pts = self._cache.get("q")
        if pts is None:
            pts = self._cache["q"] = self.q_grid.points()
        return pts

    def _ppoints(self):
        pts = self._cache.get("p")
        if pts is None:
            pts = self._cache["p"] = self.p_grid.points()
        return pts

    def block(self, lo: int, hi: int, centered: bool = False) -> np.ndarray:
        """Rows ``lo:hi`` of the current rho(q, q + p).

        With ``centered`` (source-backed states only) row Q holds
        rho(Q - p/2, Q + p/2) instead.
        """
        q = self._qpoints()[lo:hi][:, None, :]
        p = self._ppoints()[None, :, :]
        if self.values is not None:
            if centered:
                raise ValueError("centred rows need a source-backed state")
            base = self.values[lo:hi]
        else:
            if centered:
                q = q - 0.5 * p
            if hasattr(self.source, "log"):
                expo = self.source.log(q, p)
                if self.phase_time:
                    expo = expo + 1j * self.phase_time * energy_difference(q, p, self.mass)
                if self.damping:
                    expo = expo - self.damping * _dot(p, p)
                return np.broadcast_to(np.exp(expo), (hi - lo, p.shape[1])).copy()
            base = np.broadcast_to(self.source(q, p), (hi - lo, p.shape[1]))
        out = np.array(base, dtype=complex)
        if self.phase_time:
            out *= np.exp(1j * self.phase_time * energy_difference(q, p, self.mass))
        if self.damping:
            out *= np.exp(-self.damping * _dot(p, p))
        return out

    def blocks(self) -> Iterator[tuple]:
        for lo, hi in self._chunks():
            yield lo, hi, self.block(lo, hi)

    def dense(self) -> np.ndarray:
        """Materialise the full (q, p) array."""
        if self.q_grid.size * self.p_grid.size > _MAX_DENSE:
            raise MemoryError("grid too large to materialise; use blocks()")
        return np.concatenate([b for _, _, b in self.blocks()], axis=0)

    def evaluate(self, q: np.ndarray, p: np.ndarray) -> np.ndarray:
        """rho(q, q + p) at arbitrary points (source-backed states only)."""
        if self.source is None:
            raise ValueError("off-grid evaluation needs a source-backed state")
        q = np.atleast_2d(q)[:, None, :]
        p = np.atleast_2d(p)[None, :, :]
        out = np.array(np.broadcast_to(self.source(q, p), (q.shape[0], p.shape[1])), dtype=complex)
        if self.phase_time:
            out *= np.exp(1j * self.phase_time * energy_difference(q, p, self.mass))
        if self.damping:
            out *= np.exp(-self.damping * _dot(p, p))
        return out

    def column_sums(self) -> np.ndarray:
        """S(p) = sum_q w_q rho(q, q + p), reduced in fixed chunk order."""
        s = self._cache.get("S")
        if s is None:
            wq = self.q_grid.flat_weights()
            centered = self.source is not None

            def part(bounds):
                lo, hi = bounds
                return wq[lo:hi] @ self.block(lo, hi, centered=centered)

            s = np.zeros(self.p_grid.size, dtype=complex)
            for piece in ordered_map(part, self._chunks()):
                s = s + piece
            self._cache["S"] = s
        return s

    def diagonal(self) -> np.ndarray:
        j = self.p_grid.zero_index()
        if j is None:
            raise ValueError("p-grid has no p = 0 point; diagonal unavailable")
        if self.values is not None:
            return np.asarray(self.values[:, j], dtype=complex)
        q = self._qpoints()[:, None, :]
        p = self._ppoints()[None, j:j + 1, :]
        return np.asarray(np.broadcast_to(self.source(q, p), (q.shape[0], 1))[:, 0], dtype=complex)

    # construction helpers ------------------------------------------------

    @classmethod
    def from_matrix(cls, axis, matrix) -> "GridDensityMatrix":
        """1-D state from a full matrix rho[i, j] = rho(q_i, q_j) on a uniform axis."""
        axis = np.asarray(axis, dtype=float)
        matrix = np.asarray(matrix, dtype=complex)
        n = axis.size
        if matrix.shape != (n, n):
            raise ValueError("matrix must be square and match the axis")
        h = np.diff(axis)
        if n > 1 and not np.allclose(h, h[0], rtol=1e-12, atol=0):
            raise ValueError("from_matrix needs a uniform axis")
        step = h[0] if n > 1 else 1.0
        shifts = np.arange(-(n - 1), n)
        values = np.zeros((n, shifts.size), dtype=complex)
        for j, s in enumerate(shifts):
            i = np.arange(max(0, -s), min(n, n - s))
            values[i, j] = matrix[i, i + s]
        q_grid = MomentumGrid((axis,), (np.full(n, step),))
        p_grid = MomentumGrid((shifts * step,), (np.full(shifts.size, step),))
        return cls(q_grid, p_grid, values=values)

    def with_propagation(self, t: float, params: PhysicalParams) -> "GridDensityMatrix":
        if self.mass is not None and self.mass != params.m:
            raise ValueError("state was propagated with a different mass")
        return replace(
            self, phase_time=self.phase_time + t,
            damping=self.damping + params.theta * t, mass=params.m, _cache={},
        )

    # io -------------------------------------------------------------------

    def to_csv(self, path) -> None:
        """Write columns q1,q2,q3,p1,p2,p3,Re,Im with 17 significant digits."""
        q = self._qpoints()
        p = self._ppoints()
        d = self.dim
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["q1", "q2", "q3", "p1", "p2", "p3", "Re", "Im"])
            for lo, hi, blk in self.blocks():
                for a in range(lo, hi):
                    qa = list(q[a]) + [0.0] * (3 - d)
                    for b in range(p.shape[0]):
                        pb = list(p[b]) + [0.0] * (3 - d)
                        v = blk[a - lo, b]
                        w.writerow([f"{x:.17g}" for x in (*qa, *pb, v.real, v.imag)])

    @classmethod
    def from_csv(cls, path, dim: int = 3, discrete: bool = False) -> "GridDensityMatrix":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        q = data[:, :dim]
        p = data[:, 3:3 + dim]
        qaxes = tuple(np.unique(q[:, i]) for i in range(dim))
        paxes = tuple(np.unique(p[:, i]) for i in range(dim))
        qg = MomentumGrid(qaxes, discrete=discrete)
        pg = MomentumGrid(paxes, discrete=discrete)
        qi = np.ravel_multi_index(tuple(np.searchsorted(qaxes[i], q[:, i]) for i in range(dim)), qg.shape)
        pi = np.ravel_multi_index(tuple(np.searchsorted(paxes[i], p[:, i]) for i in range(dim)), pg.shape)
        values = np.zeros((qg.size, pg.size), dtype=complex)
        values[qi, pi] = data[:, 6] + 1j * data[:, 7]
        return cls(qg, pg, values=values)


DensityMatrix = Union[GaussianPure, GridDensityMatrix]


# --------------------------------------------------------------------------
# propagation


@dataclass(frozen=True)
class IRPropagator:
    """Closed-form infrared propagator over a time ``t``.

    The flags record whether the long-time (T t >> 1) and weak-coupling
    (e^2 T t << 1) conditions behind the closed form hold.
    """

    params: PhysicalParams
    t: float

    def __post_init__(self):
        if not (self.t >= 0 and math.isfinite(self.t)):
            raise ValueError("t must be finite and non-negative")

    @property
    def long_time(self) -> bool:
        return self.params.T * self.t >= 10.0

    @property
    def weak_coupling(self) -> bool:
        return self.params.e2 * self.params.T * self.t <= 0.1

    def factor(self, p2):
        return ir_decoherence_factor(p2, self.t, self.params)

    def apply(self, rho: DensityMatrix, grid: Optional[tuple] = None) -> DensityMatrix:
        params = self.params
        if isinstance(rho, GaussianPure):
            if rho.m is not None and rho.m != params.m:
                raise ValueError("state was prepared with a different mass")
            return replace(rho, m=params.m, elapsed=rho.elapsed + self.t,
                           damping=rho.damping + params.theta * self.t)
        if isinstance(rho, GridDensityMatrix):
            if grid is not None:
                qg, pg = grid
                if not (qg.same_as(rho.q_grid) and pg.same_as(rho.p_grid)):
                    raise ValueError("requested output grid does not match the state's grid")
            lim = NONREL_FRACTION * params.m
            if rho.q_grid.max_norm() > lim or rho.p_grid.max_norm() > lim:
                raise ValueError("grid leaves the nonrelativistic window |q| <= 0.1 m")
            return rho.with_propagation(self.t, params)
        raise TypeError("unsupported density-matrix type")


def propagate(rho0: DensityMatrix, t: float, params: PhysicalParams, grid: Optional[tuple] = None) -> DensityMatrix:
    """rho(t; q, q+p) = exp(i p0 t) * damping(p^2, t) * rho(0; q, q+p), p0 = eps_{q+p} - eps_q."""
    return IRPropagator(params, t).apply(rho0, grid=grid)


def trace_norm(rho: DensityMatrix) -> float:
    """sum_q rho(q, q) d^dq / (2 pi)^d; exactly 1 for the Gaussian family."""
    if isinstance(rho, GaussianPure):
        return 1.0
    diag = rho.diagonal()
    if not np.all(np.isfinite(diag)):
        raise ValueError("non-finite entries in the density matrix")
    w = rho.q_grid.flat_weights()
    return float(np.real(w @ diag)) / (2 * math.pi) ** rho.dim
