import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import eigh_tridiagonal

from sumrule_lab.errors import ValidationError
from sumrule_lab.jacobi import (JacobiSequence, boundary_coupling, coupling_constant,
                                free_tail_m, jacobi_to_measure, lanczos, m_plus,
                                measure_to_jacobi, perturbed_free_measure, trace_poly,
                                tridiagonal_spectrum)
from sumrule_lab.measures import MeasureModel
from sumrule_lab.poly import Polynomial

from conftest import GAUSS

QUARTIC = Polynomial([0, 0, 0, 0, 0.25])


def random_sequence(rng, N, blo=-1.0, bhi=1.0, alo=0.2, ahi=2.0):
    return JacobiSequence(rng.uniform(blo, bhi, N), rng.uniform(alo, ahi, N - 1))


def dense_trace(r, N, V):
    T = r.truncate(N).matrix()
    return float(sum(c * np.trace(np.linalg.matrix_power(T, j)) for j, c in enumerate(V.coeffs)))


def test_sequence_validation_and_json():
    r = JacobiSequence([0.0, 1.0], [0.5])
    assert len(r) == 2
    assert JacobiSequence.from_json(json.loads(json.dumps(r.to_json()))).a.tolist() == [0.5]
    with pytest.raises(ValidationError):
        JacobiSequence([0.0, 1.0], [0.5, 0.5])
    with pytest.raises(ValidationError):
        JacobiSequence([0.0, 1.0], [-0.5])
    with pytest.raises(ValueError):
        r.b[0] = 3.0


def test_sc_coefficients(gauss_eq):
    r = measure_to_jacobi(gauss_eq.measure, 50)
    assert len(r) == 50
    assert np.max(np.abs(r.b)) <= 1e-8
    assert np.max(np.abs(r.a - 1)) <= 1e-8


def test_quartic_coefficients_period_two(quartic3):
    r = measure_to_jacobi(quartic3.measure, 402)
    l1, l2 = quartic3.ell
    odd, even = r.a[2 * 200 - 2], r.a[2 * 200 - 1]      # a_399, a_400
    assert np.max(np.abs(r.b)) <= 1e-3
    pair = sorted([odd, even])
    assert abs(pair[0] - math.sqrt(l1)) <= 1e-3 and abs(pair[1] - math.sqrt(l2)) <= 1e-3


def test_single_atom():
    r = measure_to_jacobi(MeasureModel(None, [(5.0, 1.0)]), 10)
    assert len(r) == 1 and r.b[0] == 5.0


def test_lanczos_breakdown_reports_length():
    mu = MeasureModel(None, [(-1.0, 0.25), (0.0, 0.5), (2.0, 0.25)])
    r = measure_to_jacobi(mu, 10)
    assert len(r) == 3
    back = jacobi_to_measure(r)
    np.testing.assert_allclose(back.positions, [-1, 0, 2], atol=1e-13)
    np.testing.assert_allclose(back.weights, [0.25, 0.5, 0.25], atol=1e-13)


def test_to_measure_examples():
    assert jacobi_to_measure(JacobiSequence([0.0], [])).atoms == ((0.0, 1.0),)
    mu = jacobi_to_measure(JacobiSequence.free(2))
    np.testing.assert_allclose(mu.positions, [-1, 1], atol=1e-15)
    np.testing.assert_allclose(mu.weights, [0.5, 0.5], atol=1e-15)
    with pytest.raises(ValidationError):
        jacobi_to_measure(JacobiSequence([0.0, 0.0], [0.0]))


def test_weights_against_eigh_tridiagonal():
    rng = np.random.default_rng(5)
    for _ in range(10):
        r = random_sequence(rng, 40)
        lam, w = tridiagonal_spectrum(r)
        ev, U = eigh_tridiagonal(r.b, r.a)
        np.testing.assert_allclose(lam, ev, atol=1e-12)
        np.testing.assert_allclose(w, U[0] ** 2, atol=1e-12)
        assert np.all(w > 0) and abs(w.sum() - 1) <= 1e-12 and np.all(np.diff(lam) > 0)


def test_round_trip_small_batch():
    rng = np.random.default_rng(1)
    for _ in range(10):
        r = random_sequence(rng, 50)
        back = measure_to_jacobi(jacobi_to_measure(r), 50)
        assert np.max(np.abs(back.b - r.b)) <= 1e-8
        assert np.max(np.abs(back.a - r.a)) <= 1e-8


def test_lanczos_direct():
    x = np.array([-1.0, 1.0])
    b, a = lanczos(x, np.array([0.5, 0.5]), 2)
    np.testing.assert_allclose(b, [0, 0], atol=1e-15)
    np.testing.assert_allclose(a, [1.0], atol=1e-15)


def test_trace_free_and_b1():
    for N in (1, 2, 5, 40):
        free = JacobiSequence.free(N)
        assert trace_poly(free, N, GAUSS) == pytest.approx(N - 1, abs=1e-12)
        b = np.zeros(N)
        b[0] = 1.0
        pert = JacobiSequence(b, np.ones(N - 1))
        assert trace_poly(pert, N, GAUSS) - trace_poly(free, N, GAUSS) == pytest.approx(0.5, abs=1e-12)


def test_trace_matches_eigenvalues():
    rng = np.random.default_rng(2)
    V = Polynomial([0.3, -0.2, -1.0, 0.1, 0.25, 0.0, 0.05])
    for _ in range(20):
        r = random_sequence(rng, 40)
        mu = jacobi_to_measure(r)
        assert trace_poly(r, 40, V) == pytest.approx(float(np.sum(V(mu.positions))), abs=1e-9)
        assert trace_poly(r, 40, V) == pytest.approx(dense_trace(r, 40, V), abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=1, max_size=7),
       st.lists(st.floats(-2, 2), min_size=1, max_size=7), st.integers(0, 1000))
def test_trace_linear_in_V(c1, c2, seed):
    r = random_sequence(np.random.default_rng(seed), 12)
    P, Q = Polynomial(c1), Polynomial(c2)
    lhs = trace_poly(r, 12, P + Q)
    assert lhs == pytest.approx(trace_poly(r, 12, P) + trace_poly(r, 12, Q), abs=1e-9)


def global_seam(r, rV, N, n, V):
    """Seam term from dense traces: mix the leading block of rV with the tail of r."""
    hybrid = JacobiSequence(np.concatenate([rV.b[:N], r.b[N:]]),
                            np.concatenate([rV.a[:N - 1], r.a[N - 1:]]))
    return (dense_trace(r, n, V) - dense_trace(hybrid, n, V)
            - dense_trace(r, N, V) + dense_trace(rV, N, V))


def test_boundary_coupling_quadratic_and_equal():
    rng = np.random.default_rng(4)
    r, rV = random_sequence(rng, 30), random_sequence(rng, 30)
    V2 = Polynomial([1.0, -0.5, 2.0])
    assert all(boundary_coupling(r, rV, N, V2) == 0.0 for N in range(1, 29))
    assert boundary_coupling(r, r, 15, QUARTIC) == pytest.approx(0.0, abs=1e-13)


def test_boundary_coupling_bN_perturbation():
    N, n = 20, 30
    rV = JacobiSequence.free(n)
    b = np.zeros(n)
    b[N - 1] = 0.5
    r = JacobiSequence(b, np.ones(n - 1))
    M = boundary_coupling(r, rV, N, QUARTIC)
    assert M == pytest.approx(global_seam(r, rV, N, n, QUARTIC), abs=1e-9)


def test_m_plus_examples(quartic3_jacobi):
    rV = JacobiSequence.free(30)
    assert m_plus(rV, rV, 10, 2) == 0.0
    b = np.zeros(30)
    b[9] = 0.5
    assert m_plus(JacobiSequence(b, np.ones(29)), rV, 10, 2) == pytest.approx(0.5)
    q = quartic3_jacobi
    shifted = JacobiSequence(q.b[1:], q.a[1:])
    # four a-slots in the window, each differing by sqrt(l2) - sqrt(l1) = 1
    assert m_plus(shifted, q.truncate(len(shifted)), 200, 2) == pytest.approx(4.0, abs=1e-3)


def test_window_errors():
    r = JacobiSequence.free(10)
    with pytest.raises(ValidationError):
        boundary_coupling(r, r, 9, QUARTIC)
    with pytest.raises(ValidationError):
        m_plus(r, r, 9, 2)


def test_coupling_constant_formula():
    assert coupling_constant(4.0, QUARTIC) == pytest.approx(0.25 * 4 * 81 * 64)
    assert coupling_constant(0.5, GAUSS) == pytest.approx(0.5 * 2 * 9)


def test_free_tail_m_is_free_m():
    z = np.array([3.0 + 0j, 0.5 + 1j, -4 + 0.1j])
    m0 = (-z + np.sqrt(z - 2) * np.sqrt(z + 2)) / 2
    np.testing.assert_allclose(free_tail_m(JacobiSequence.free(5), z), m0, atol=1e-14)


def test_perturbed_free_measure_a1():
    # a_1 = 2 gives eigenvalues +-a^2/sqrt(a^2 - 1) with weight (a^2 - 2)/(2(a^2 - 1))
    mu = perturbed_free_measure(JacobiSequence([0.0, 0.0], [2.0]))
    E = 4 / math.sqrt(3)
    np.testing.assert_allclose(mu.positions, [-E, E], atol=1e-12)
    np.testing.assert_allclose(mu.weights, [1 / 3, 1 / 3], atol=1e-12)
    assert mu.normalized
    r = measure_to_jacobi(mu, 40)
    assert abs(r.a[0] - 2) <= 1e-6 and np.max(np.abs(r.a[1:] - 1)) <= 1e-6
