import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from photonbath.density_matrix import (
    GaussianPure, GridDensityMatrix, IRPropagator, MomentumGrid, ir_decoherence_factor, propagate, trace_norm,
)
from photonbath.units import PhysicalParams

P = PhysicalParams(m=1.0, T=0.1, alpha=0.5, Lambda=0.5)


def small_packet_grid(n=7, l=100.0, m=1.0):
    qg = MomentumGrid.uniform(n, 4 / l, dim=1)
    pg = MomentumGrid.uniform(2 * n - 1, 8 / l, dim=1)
    return GaussianPure(l=l, x0=(3.0, 0.0, 0.0)).to_grid(qg, pg, m)


class TestDecoherenceFactor:
    def test_trivial_points(self):
        assert ir_decoherence_factor(0.0, 1e9, P) == 1.0
        assert ir_decoherence_factor(1e-3, 0.0, P) == 1.0

    def test_unit_exponent(self):
        p2 = 1e-4
        t = 1 / (P.theta * p2)
        assert ir_decoherence_factor(p2, t, P) == pytest.approx(math.exp(-1), rel=1e-14)
        assert math.exp(-1) == pytest.approx(0.36788, abs=1e-5)

    @given(st.floats(0, 1e-2), st.floats(0, 1e6))
    def test_equals_coupling_form(self, p2, t):
        alt = math.exp(-(P.e2 / (6 * math.pi)) * p2 * P.T / P.m ** 2 * t)
        assert ir_decoherence_factor(p2, t, P) == pytest.approx(alt, rel=1e-12)

    @given(st.floats(0, 1e-2), st.floats(0, 1e6), st.floats(1.0, 3.0))
    def test_monotone(self, p2, t, f):
        base = ir_decoherence_factor(p2, t, P)
        assert ir_decoherence_factor(p2 * f, t, P) <= base
        assert ir_decoherence_factor(p2, t * f, P) <= base
        hotter = P.replace(T=min(P.T * f, 0.49))
        assert ir_decoherence_factor(p2, t, hotter) <= base
        assert ir_decoherence_factor(p2, t, P.replace(alpha=min(P.alpha * f, 0.99))) <= base

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            ir_decoherence_factor(-1.0, 1.0, P)


class TestGrid:
    def test_trapezoid_and_single_weights(self):
        g = MomentumGrid((np.array([0.0, 1.0, 3.0]),))
        assert np.allclose(g.weights[0], [0.5, 1.5, 1.0])
        s = MomentumGrid.single([0.0, 0.0, 0.0])
        assert np.allclose(s.flat_weights(), (2 * math.pi) ** 3)

    def test_invalid_axes(self):
        with pytest.raises(ValueError):
            MomentumGrid((np.array([0.0, 0.0]),))
        with pytest.raises(ValueError):
            MomentumGrid((np.array([0.0]), np.array([1.0])))


class TestPropagate:
    def test_diagonal_untouched_and_trace_preserved(self):
        rho = small_packet_grid()
        out = propagate(rho, 1e5, P)
        assert np.allclose(out.diagonal(), rho.diagonal(), rtol=1e-14, atol=0)
        assert trace_norm(out) == trace_norm(rho)

    def test_vacuum_is_pure_phase(self):
        rho = small_packet_grid()
        vac = PhysicalParams(m=1.0, T=0.0, alpha=0.5, Lambda=0.5)
        out = propagate(rho, 3e4, vac)
        assert np.allclose(np.abs(out.dense()), np.abs(rho.dense()), rtol=1e-13, atol=0)
        assert not np.allclose(out.dense(), rho.dense())

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0, 1e5), st.floats(0, 1e5))
    def test_semigroup(self, t1, t2):
        rho = small_packet_grid()
        a = propagate(propagate(rho, t1, P), t2, P).dense()
        b = propagate(rho, t1 + t2, P).dense()
        assert np.allclose(a, b, rtol=1e-10, atol=1e-14 * np.max(np.abs(b)))

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0, 1e6))
    def test_hermitian(self, t):
        rho = propagate(small_packet_grid(), t, P)
        rng = np.random.default_rng(0)
        q = rng.normal(scale=0.02, size=(5, 1))
        p = rng.normal(scale=0.02, size=(5, 1))
        for qi, pi in zip(q, p):
            a = rho.evaluate(qi[None], pi[None])[0, 0]
            b = rho.evaluate((qi + pi)[None], (-pi)[None])[0, 0]
            assert a == pytest.approx(np.conj(b), rel=1e-12, abs=1e-300)

    def test_array_state_against_formula(self):
        rng = np.random.default_rng(3)
        axis = np.linspace(-0.02, 0.02, 5)
        a = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
        mat = a @ a.conj().T
        rho = GridDensityMatrix.from_matrix(axis, mat)
        t = 2e4
        out = propagate(rho, t, P).dense()
        p_axis = rho.p_grid.axes[0]
        for i, q in enumerate(axis):
            for j, p in enumerate(p_axis):
                k = i + int(round(p / (axis[1] - axis[0])))
                if 0 <= k < 5:
                    phase = math.sqrt(1 + (q + p) ** 2) - math.sqrt(1 + q * q)
                    want = mat[i, k] * np.exp(1j * phase * t) * ir_decoherence_factor(p * p, t, P)
                    assert out[i, j] == pytest.approx(want, rel=1e-10)

    def test_grid_mismatch_rejected(self):
        rho = small_packet_grid()
        other = (MomentumGrid.uniform(5, 0.01, dim=1), rho.p_grid)
        with pytest.raises(ValueError):
            propagate(rho, 1.0, P, grid=other)
        assert propagate(rho, 1.0, P, grid=(rho.q_grid, rho.p_grid)).t == 1.0

    def test_nonrelativistic_window(self):
        rho = GaussianPure(l=1.0).to_grid(MomentumGrid.uniform(5, 1.0, 1), MomentumGrid.uniform(5, 1.0, 1), 1.0)
        with pytest.raises(ValueError):
            propagate(rho, 1.0, P)

    def test_flags(self):
        prop = IRPropagator(P, 200.0)
        assert prop.long_time
        assert not prop.weak_coupling or P.e2 * P.T * 200 <= 0.1
        with pytest.raises(ValueError):
            IRPropagator(P, -1.0)

    def test_gaussian_family(self):
        g = GaussianPure(l=2.0)
        out = propagate(g, 10.0, P)
        assert out.elapsed == 10.0 and out.m == P.m
        assert out.width2() == pytest.approx(4.0 + 100 / 4.0 + 4 * P.theta * 10.0)
        with pytest.raises(ValueError):
            propagate(out, 1.0, P.replace(m=2.0))


class TestTraceNorm:
    def test_gaussian_pure(self):
        assert trace_norm(GaussianPure(l=0.3)) == 1.0

    def test_sampled_packet_64(self):
        qg = MomentumGrid.uniform(64, 6.0)
        pg = MomentumGrid.single([0.0, 0.0, 0.0], discrete=False)
        rho = GaussianPure(l=1.0).to_grid(qg, pg, m=1e3)
        assert trace_norm(rho) == pytest.approx(1.0, abs=1e-6)

    def test_zero_matrix(self):
        rho = GridDensityMatrix.from_matrix(np.linspace(0, 1, 3), np.zeros((3, 3)))
        assert trace_norm(rho) == 0.0

    def test_non_finite_rejected(self):
        m = np.eye(3) * np.nan
        with pytest.raises(ValueError):
            trace_norm(GridDensityMatrix.from_matrix(np.linspace(0, 1, 3), m))


def test_csv_round_trip(tmp_path):
    rho = propagate(small_packet_grid(n=4), 1e4, P)
    path = tmp_path / "rho.csv"
    rho.to_csv(path)
    back = GridDensityMatrix.from_csv(path, dim=1)
    assert np.array_equal(back.dense(), rho.dense())
    header = path.read_text().splitlines()[0]
    assert header == "q1,q2,q3,p1,p2,p3,Re,Im"


def test_chunked_sum_independent_of_threads():
    from photonbath.parallel import threads
    qg, pg = MomentumGrid.uniform(9, 0.04), MomentumGrid.uniform(5, 0.05)
    rho = GaussianPure(l=100.0).to_grid(qg, pg, 1.0)
    with threads(1):
        a = propagate(rho, 1e4, P).column_sums()
    with threads(4):
        b = propagate(rho, 1e4, P).column_sums()
    assert np.array_equal(a, b)
