import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from photonbath.density_matrix import ir_decoherence_factor
from photonbath.twoslit import (
    TwoSlitGeometry, fringe_visibility, pattern, period_samples, pipeline_visibility, resolution_for,
    threshold_constant, threshold_variable, threshold_x_at, visibility, visibility_exponent,
)
from photonbath.units import PhysicalParams

P = PhysicalParams(m=1.0, T=0.05, alpha=1 / 137.035999, Lambda=0.5)
VAC = P.replace(T=0.0)
# kappa = k/50, tau = L/k, exponent ~ 0.7
GEOM = TwoSlitGeometry(d=1.44e6, L=1.44e8, k=0.05)
# leaves room to widen the slits inside the far-field bound
ROOMY = TwoSlitGeometry(d=3.6e5, L=1.44e8, k=0.05)


def test_geometry():
    assert GEOM.kappa == pytest.approx(2 * 0.05 * 1.44e6 / 1.44e8)
    assert GEOM.flight_time(1.0) == pytest.approx(1.44e8 / 0.05)
    with pytest.raises(ValueError):
        TwoSlitGeometry(d=1.0, L=99.0, k=0.1)
    with pytest.raises(ValueError):
        TwoSlitGeometry(d=1.0, L=100.0, k=0.0)
    g = TwoSlitGeometry.from_energy(1.0, 1e3, 2e-4, 1.0)
    assert g.k == pytest.approx(0.02)


def test_vacuum_visibility_is_one():
    assert visibility(GEOM, VAC) == 1.0


def test_unit_exponent():
    target = 1.0 / visibility_exponent(GEOM, P) * P.T
    hot = P.replace(T=target, Lambda=max(0.5, 2 * target))
    assert visibility(GEOM, hot) == pytest.approx(math.exp(-1), rel=1e-12)


def test_consistent_with_damping_factor():
    v = visibility(GEOM, P)
    assert v == ir_decoherence_factor(GEOM.kappa ** 2, GEOM.flight_time(P.m), P)
    assert 0.2 < v < 0.8


def test_pipeline_matches_formula():
    v = visibility(GEOM, P)
    assert pipeline_visibility(GEOM, P) == pytest.approx(v, rel=1e-6, abs=1e-6)
    assert pipeline_visibility(GEOM, VAC) == pytest.approx(1.0, abs=1e-12)


def test_nonrelativistic_check():
    with pytest.raises(ValueError):
        visibility(TwoSlitGeometry(d=1.0, L=1e3, k=0.2), P)


def test_pattern_examples():
    k = GEOM.kappa
    assert pattern(GEOM, VAC, 0.0) == 2.0
    assert pattern(GEOM, VAC, math.pi / k) == pytest.approx(0.0, abs=1e-15)
    x = period_samples(k)
    s = pattern(GEOM, P, x)
    v = visibility(GEOM, P)
    assert np.max(s) - np.min(s) == pytest.approx(2 * v, rel=1e-12)
    assert fringe_visibility(s) == pytest.approx(v, abs=1e-10)
    with pytest.raises(ValueError):
        pattern(GEOM, P, 0.2 * GEOM.L)


@settings(max_examples=50)
@given(st.floats(-1.0, 1.0))
def test_pattern_period(frac):
    x = frac * 0.05 * GEOM.L
    period = 2 * math.pi / GEOM.kappa
    if abs(x + period) <= 0.1 * GEOM.L:
        assert pattern(GEOM, P, x + period) == pytest.approx(pattern(GEOM, P, x), abs=1e-9)


@given(st.floats(1e-3, 0.4), st.floats(1.01, 2.0))
def test_monotone_in_temperature_and_spacing(T, f):
    base = P.replace(T=T, Lambda=0.5)
    hotter = P.replace(T=min(T * f, 0.49), Lambda=0.5)
    assert visibility(ROOMY, hotter) <= visibility(ROOMY, base)
    wider = TwoSlitGeometry(ROOMY.d * f, ROOMY.L, ROOMY.k)
    assert visibility(wider, base) <= visibility(ROOMY, base)


@given(st.floats(1.01, 3.0))
def test_monotone_at_fixed_kappa(f):
    kappa = ROOMY.kappa

    def geom(L, k):
        return TwoSlitGeometry(kappa * L / (2 * k), L, k)

    base = geom(ROOMY.L, ROOMY.k)
    assert visibility(geom(ROOMY.L * f, ROOMY.k), P) <= visibility(base, P)
    assert visibility(geom(ROOMY.L, min(ROOMY.k * f, 0.1)), P) >= visibility(base, P)


def test_threshold_order_unity():
    T, L, eps = 100.0, 100.0, 10.0
    r = math.sqrt(T * L / (math.sqrt(eps) * 1e20))
    assert threshold_variable(T, L, eps, r) == pytest.approx(1e20)
    assert 0.5 <= threshold_constant(T, L, eps, r) <= 2.0
    assert 0.5e-8 <= r <= 1e-8
    assert 5e19 <= threshold_x_at(1.0) <= 2e20


def test_worked_laboratory_point():
    r_star = resolution_for(0.3, 100.0, 100.0, 10.0)
    assert r_star < 10e-8
    assert threshold_constant(100.0, 100.0, 10.0, r_star) >= 0.3 * (1 - 1e-12)


@given(st.floats(1e-2, 1e4), st.floats(1e-1, 1e4), st.floats(1e-1, 1e3), st.floats(1e-9, 1e-5))
def test_two_unit_paths_agree(T, L, eps, r):
    x = threshold_variable(T, L, eps, r)
    assert threshold_constant(T, L, eps, r) == pytest.approx(x / threshold_x_at(1.0), rel=1e-6)


def test_cold_limit():
    assert threshold_constant(1e-12, 100.0, 10.0, 1e-8) < 1e-12
