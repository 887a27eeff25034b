import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nstaylor import oracle
from nstaylor import trigpoly as tp
from nstaylor.errors import IncompatibleSourceError, ResolutionError
from nstaylor.field import GridSpec
from nstaylor.trigpoly import TrigPoly

COS_X = TrigPoly.cos((1, 0, 0))
SIN_X = TrigPoly.sin((1, 0, 0))
SIN_Y = TrigPoly.sin((0, 1, 0))
COS_Y = TrigPoly.cos((0, 1, 0))


def random_poly(seed, k0=2, density=0.5):
    rng = np.random.default_rng(seed)
    terms = {}
    for k in np.ndindex(2 * k0 + 1, 2 * k0 + 1, 2 * k0 + 1):
        k = tuple(int(i) - k0 for i in k)
        if k > (0, 0, 0) and rng.random() < density:
            terms[k] = complex(rng.normal(), rng.normal())
    return TrigPoly.from_terms(terms, complete=True)


seeds = st.integers(0, 2**32 - 1)


class TestConstruction:
    def test_cos_and_sin_terms(self):
        assert COS_X.terms == {(-1, 0, 0): 0.5, (1, 0, 0): 0.5}
        assert SIN_X.coefficient((1, 0, 0)) == pytest.approx(-0.5j)

    def test_from_terms_requires_hermitian(self):
        with pytest.raises(ValueError):
            TrigPoly.from_terms({(1, 0, 0): 1.0})

    def test_complete_rejects_complex_mean(self):
        with pytest.raises(ValueError):
            TrigPoly.from_terms({(0, 0, 0): 1j}, complete=True)

    def test_zero(self):
        z = TrigPoly.zero()
        assert z.is_zero() and len(z) == 0 and z.mean() == 0.0


class TestAddScale:
    def test_cancellation(self):
        assert tp.tp_add(COS_X, tp.tp_scale(COS_X, -1.0)).is_zero()

    def test_scale(self):
        assert tp.tp_scale(SIN_Y, 2.0).terms == {(0, -1, 0): 1j, (0, 1, 0): -1j}

    def test_doubling(self):
        assert tp.tp_add(COS_X, COS_X).terms == tp.tp_scale(COS_X, 2.0).terms

    def test_prune_is_relative(self):
        tiny = tp.tp_scale(COS_Y, 1e-16)
        assert tp.tp_add(COS_X, tiny).terms == COS_X.terms
        assert tp.tp_add(tiny, tiny).terms == tp.tp_scale(tiny, 2.0).terms


class TestMul:
    def test_cos_squared(self):
        assert tp.tp_mul(COS_X, COS_X).terms == (TrigPoly.constant(0.5) + TrigPoly.cos((2, 0, 0), 0.5)).terms

    def test_cos_sin(self):
        got = tp.tp_mul(COS_X, SIN_X)
        assert tp.tp_max_abs(got - TrigPoly.sin((2, 0, 0), 0.5)) <= 1e-15

    def test_square_of_cos_x_sin_y(self):
        a = tp.tp_mul(COS_X, SIN_Y)
        sq = tp.tp_mul(a, a)
        support = {k for k in sq.terms}
        assert support == {
            (0, 0, 0), (2, 0, 0), (-2, 0, 0), (0, 2, 0), (0, -2, 0),
            (2, 2, 0), (2, -2, 0), (-2, 2, 0), (-2, -2, 0),
        }
        assert tp.tp_eval(sq, (0.0, math.pi / 2, 0.0)) == pytest.approx(1.0, abs=1e-15)

    @settings(max_examples=20, deadline=None)
    @given(seeds, seeds)
    def test_support_is_minkowski_sum(self, s1, s2):
        a, b = random_poly(s1, 1), random_poly(s2, 1)
        prod = tp.tp_mul(a, b, eps_prune=0.0)
        minkowski = {tuple(np.add(k1, k2)) for k1 in a.terms for k2 in b.terms}
        assert set(prod.terms) <= minkowski

    def test_dense_path_matches_direct(self, monkeypatch):
        a, b = random_poly(1, 3, 0.8), random_poly(2, 3, 0.8)
        direct = tp.tp_mul(a, b)
        monkeypatch.setattr(tp, "DIRECT_PRODUCT_LIMIT", 0)
        dense = tp.tp_mul(a, b)
        assert tp.tp_max_abs(direct - dense) <= 1e-12 * tp.tp_max_abs(direct)
        assert dense.is_hermitian(0.0)

    @settings(max_examples=20, deadline=None)
    @given(seeds, seeds)
    def test_hermitian_preserved(self, s1, s2):
        a, b = random_poly(s1), random_poly(s2)
        for out in (tp.tp_mul(a, b), tp.tp_add(a, b), tp.tp_derivative(a, 2), tp.tp_laplacian(b)):
            assert out.is_hermitian(0.0)

    @settings(max_examples=20, deadline=None)
    @given(seeds, seeds, st.sampled_from([0, 1, 2]))
    def test_leibniz(self, s1, s2, axis):
        a, b = random_poly(s1), random_poly(s2)
        lhs = tp.tp_derivative(tp.tp_mul(a, b), axis)
        rhs = tp.tp_add(
            tp.tp_mul(tp.tp_derivative(a, axis), b), tp.tp_mul(a, tp.tp_derivative(b, axis))
        )
        assert tp.tp_max_abs(lhs - rhs) <= 1e-12 * max(1.0, tp.tp_max_abs(lhs))

    def test_pointwise_product(self):
        a, b = random_poly(3), random_poly(4)
        pts = np.random.default_rng(0).uniform(0, 2 * math.pi, (20, 3))
        want = tp.tp_eval(a, pts) * tp.tp_eval(b, pts)
        assert np.allclose(tp.tp_eval(tp.tp_mul(a, b), pts), want, atol=1e-12)


class TestCalculus:
    def test_derivative_sin(self):
        assert tp.tp_derivative(SIN_X, "x").terms == COS_X.terms

    def test_laplacian_cos_2y(self):
        assert tp.tp_laplacian(TrigPoly.cos((0, 2, 0))).terms == TrigPoly.cos((0, 2, 0), -4.0).terms

    def test_laplacian_abc(self):
        ux = oracle.initial_velocity(oracle.abc_beltrami(1.0, 0.3, 0.7, 1.9))[0]
        assert tp.tp_max_abs(tp.tp_laplacian(ux) + ux) <= 1e-15

    def test_poisson_single_mode(self):
        assert tp.tp_poisson_inverse(TrigPoly.cos((2, 0, 0))).terms == TrigPoly.cos((2, 0, 0), -0.25).terms

    def test_poisson_zero(self):
        assert tp.tp_poisson_inverse(TrigPoly.zero()).is_zero()

    def test_poisson_taylor_green(self):
        g = TrigPoly.cos((2, 0, 0)) + TrigPoly.cos((0, 2, 0))
        p = tp.tp_poisson_inverse(g)
        assert p.terms == oracle.initial_pressure(oracle.taylor_green(0.3)).terms

    def test_poisson_rejects_mean(self):
        with pytest.raises(IncompatibleSourceError):
            tp.tp_poisson_inverse(TrigPoly.constant(1.0) + COS_X)

    @settings(max_examples=20, deadline=None)
    @given(seeds)
    def test_laplacian_inverts_poisson(self, seed):
        g = random_poly(seed)
        back = tp.tp_laplacian(tp.tp_poisson_inverse(g))
        assert tp.tp_max_abs(back - g) <= 1e-14 * max(1.0, tp.tp_max_abs(g))


class TestEvalAndGrid:
    def test_eval_points(self):
        assert tp.tp_eval(COS_X, (0.0, 0.0, 0.0)) == pytest.approx(1.0)
        assert tp.tp_eval(TrigPoly.sin((0, 2, 0)), (0.0, math.pi / 4, 0.0)) == pytest.approx(1.0)

    def test_resolution_error(self):
        with pytest.raises(ResolutionError):
            tp.tp_to_grid(TrigPoly.cos((4, 0, 0)), GridSpec.cube(8))

    @settings(max_examples=20, deadline=None)
    @given(seeds)
    def test_grid_round_trip(self, seed):
        a = random_poly(seed)
        back = tp.tp_from_grid(tp.tp_to_grid(a, GridSpec.cube(8)))
        assert set(back.terms) == set(a.terms)
        assert max(abs(back.terms[k] - c) for k, c in a.terms.items()) <= 1e-12

    def test_to_grid_matches_eval(self):
        a = random_poly(5)
        g = tp.tp_to_grid(a, GridSpec.cube(8))
        x, y, z = g.spec.mesh()
        pts = np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)
        assert np.allclose(g.values.ravel(), tp.tp_eval(a, pts), atol=1e-13)

    def test_energy_density(self):
        u = oracle.initial_velocity(oracle.abc_beltrami(0.0))
        assert sum(tp.tp_energy_density(c) for c in u) == pytest.approx(3.0)


class TestDumps:
    def test_format_and_order(self):
        text = tp.tp_dumps(COS_X)
        assert text == "-1 0 0 0.5 0.0\n1 0 0 0.5 0.0\n"

    @settings(max_examples=20, deadline=None)
    @given(seeds)
    def test_round_trip_bit_exact(self, seed):
        a = random_poly(seed)
        b = tp.tp_loads(tp.tp_dumps(a))
        assert np.array_equal(a.keys, b.keys) and np.array_equal(a.coeffs, b.coeffs)

    def test_malformed(self):
        with pytest.raises(ValueError):
            tp.tp_loads("1 0 0 0.5\n")
