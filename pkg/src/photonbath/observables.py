"""Effective charge density, scalar potential and spectral Gauss-law residual."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import erf

from .density_matrix import DensityMatrix, GaussianPure, GridDensityMatrix, propagate
from .units import PhysicalParams

IMAG_TOL = 1e-10


@dataclass(frozen=True)
class FieldSample:
    x: tuple
    t: float
    value: float

    def __post_init__(self):
        if not (math.isfinite(self.value) and math.isfinite(self.t)):
            raise ValueError("field samples must be finite")


def _at_time(rho, t, params):
    if t is None or t == rho.t:
        return rho
    if t < rho.t:
        raise ValueError("cannot evaluate before the state's current time")
    if params is None:
        raise ValueError("params needed to advance the state to the requested time")
    return propagate(rho, t - rho.t, params)


def _positions(x, dim):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[-1] == dim:
        return x, single
    if dim == 1:
        return x[:, :1], single
    raise ValueError("position dimensionality does not match the state")


def _modes(rho: GridDensityMatrix, x, check_nyquist=True):
    pts, single = _positions(x, rho.dim)
    if check_nyquist and not rho.p_grid.discrete:
        lim = rho.p_grid.nyquist_limits()
        if np.any(np.abs(pts) >= lim[None, :]):
            raise ValueError("grid too coarse for the requested position (Nyquist check)")
    return pts, single


def _fourier(rho: GridDensityMatrix, pts, kernel):
    p = rho.p_grid.points()
    wp = rho.p_grid.flat_weights()
    coeff = wp * rho.column_sums() * kernel / (2 * math.pi) ** (2 * rho.dim)
    out = np.exp(-1j * (pts @ p.T)) @ coeff
    scale = np.sum(np.abs(coeff))
    if np.any(np.abs(out.imag) > IMAG_TOL * max(scale, np.finfo(float).tiny)):
        raise ArithmeticError("imaginary residue exceeds tolerance: state is not Hermitian on this grid")
    return out.real


def charge_density(rho: DensityMatrix, x, t: Optional[float] = None, params: Optional[PhysicalParams] = None):
    """J0(x) = sum over q, p of rho(q, q+p) e^{-i p.x} / (2 pi)^{2d} with unit vertex factor.

    Parameters
    ----------
    rho : DensityMatrix
    x : array_like, shape (d,) or (n, d)
    t : float, optional
        Evaluation time; the state is advanced from its own time if needed.
    """
    rho = _at_time(rho, t, params)
    if isinstance(rho, GaussianPure):
        pts, single = _positions(x, len(rho.x0))
        w2 = rho.width2()
        dim = pts.shape[-1]
        r2 = np.sum((pts - np.asarray(rho.x0[:dim])) ** 2, axis=-1)
        out = np.exp(-r2 / w2) / (math.pi * w2) ** (dim / 2)
    else:
        pts, single = _modes(rho, x)
        out = _fourier(rho, pts, 1.0)
    return float(out[0]) if single else out


def coulomb_potential(rho: DensityMatrix, x, t: Optional[float] = None, params: Optional[PhysicalParams] = None,
                      *, e: Optional[float] = None, exclude_zero: bool = False):
    """Scalar potential A0 = e * sum rho e^{-i p.x} / p^2 (the p = 0 mode excluded on grids)."""
    if e is None:
        if params is None:
            raise ValueError("give params or the charge e")
        e = params.charge
    rho = _at_time(rho, t, params)
    if isinstance(rho, GaussianPure):
        pts, single = _positions(x, 3)
        w = math.sqrt(rho.width2())
        r = np.linalg.norm(pts - np.asarray(rho.x0), axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(r > 0, e * erf(r / w) / (4 * math.pi * np.where(r > 0, r, 1.0)),
                           e / (2 * math.pi ** 1.5 * w))
    else:
        p = rho.p_grid.points()
        p2 = np.einsum("ij,ij->i", p, p)
        zero = p2 == 0
        if np.any(zero) and not exclude_zero:
            raise ValueError("p-grid contains p = 0; pass exclude_zero=True")
        kernel = np.zeros_like(p2)
        kernel[~zero] = e / p2[~zero]
        pts, single = _modes(rho, x)
        out = _fourier(rho, pts, kernel)
    return float(np.asarray(out).ravel()[0]) if single else out


def spectral_modes(rho: DensityMatrix, params: Optional[PhysicalParams] = None, p=None):
    """Momenta and Fourier coefficients J0(p) of the charge density."""
    if isinstance(rho, GaussianPure):
        if p is None:
            w = math.sqrt(rho.width2())
            ax = np.linspace(-6 / w, 6 / w, 13)
            p = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), -1).reshape(-1, 3)
        p = np.atleast_2d(p)
        p2 = np.einsum("ij,ij->i", p, p)
        jhat = np.exp(-0.25 * rho.width2() * p2 + 1j * (p @ np.asarray(rho.x0)))
        return p, jhat
    p = rho.p_grid.points()
    jhat = rho.p_grid.flat_weights() * rho.column_sums() / (2 * math.pi) ** rho.dim
    return p, jhat


def gauss_residual(rho: DensityMatrix, t: Optional[float] = None, params: Optional[PhysicalParams] = None,
                   *, e: Optional[float] = None, eps: float = 1e-300) -> float:
    """max_p |p^2 A0(p) - e J0(p)| / (|e J0(p)| + eps) over the nonzero modes."""
    if e is None:
        e = params.charge if params is not None else 1.0
    rho = _at_time(rho, t, params)
    p, jhat = spectral_modes(rho)
    p2 = np.einsum("ij,ij->i", p, p)
    keep = p2 > 0
    if not np.any(keep):
        return 0.0
    p2, jhat = p2[keep], jhat[keep]
    ahat = e * jhat / p2
    res = np.abs(p2 * ahat - e * jhat) / (np.abs(e * jhat) + eps)
    return float(np.max(res))


def write_field_csv(path, x, t, j0, a0) -> None:
    """Rows x1,x2,x3,t,J0,A0."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x1", "x2", "x3", "t", "J0", "A0"])
        for xi, ti, ji, ai in zip(x, t, np.ravel(j0), np.ravel(a0)):
            xi = list(xi) + [0.0] * (3 - len(xi))
            w.writerow([f"{v:.17g}" for v in (*xi, ti, ji, ai)])
