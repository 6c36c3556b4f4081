"""Fixed-panel Gauss-Kronrod (7/15) rules used by the oscillatory integrals."""

from __future__ import annotations

import numpy as np

_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

# nodes on [-1, 1] in increasing order, with Kronrod and embedded Gauss weights
NODES = np.concatenate([-_XGK[:-1], [0.0], _XGK[:-1][::-1]])
W_KRONROD = np.concatenate([_WGK[:-1], [_WGK[-1]], _WGK[:-1][::-1]])
W_GAUSS = np.zeros(15)
_gauss_idx = [1, 3, 5]
for _j, _i in enumerate(_gauss_idx):
    W_GAUSS[_i] = _WG[_j]
    W_GAUSS[14 - _i] = _WG[_j]
W_GAUSS[7] = _WG[3]


def panel_rule(edges):
    """Composite G7K15 rule on the panels delimited by ``edges``.

    Returns
    -------
    x : ndarray, shape (n_panels * 15,)
        Nodes.
    wk, wg : ndarray
        Kronrod and Gauss weights (Gauss weights vanish on Kronrod-only nodes).
    """
    edges = np.asarray(edges, dtype=float)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = (mid[:, None] + half[:, None] * NODES[None, :]).ravel()
    wk = (half[:, None] * W_KRONROD[None, :]).ravel()
    wg = (half[:, None] * W_GAUSS[None, :]).ravel()
    return x, wk, wg


def panels_for_phase(a: float, b: float, phase_span: float, max_phase=0.5 * np.pi, min_panels=1):
    """Uniform panel edges on [a, b] with at most ``max_phase`` radians per panel."""
    n = max(min_panels, int(np.ceil(abs(phase_span) / max_phase)))
    return np.linspace(a, b, n + 1)


def integrate(f, edges, axis=-1):
    """Integrate a vectorised ``f`` over panel ``edges``; returns (value, error estimate)."""
    x, wk, wg = panel_rule(edges)
    fx = f(x)
    k = np.tensordot(fx, wk, axes=([axis], [0]))
    g = np.tensordot(fx, wg, axes=([axis], [0]))
    return k, np.abs(k - g)


def gauss_legendre(a, b, n):
    """Gauss-Legendre nodes and weights on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return 0.5 * (a + b) + half * x, half * w
