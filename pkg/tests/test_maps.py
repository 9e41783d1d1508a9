from math import factorial

import numpy as np
import pytest
from scipy import integrate as spi

from hermein import (
    BundleSpec,
    ConditioningError,
    GramMetric,
    InducedField,
    InsufficientQuadratureError,
    MetricField,
    bergman,
    build_quadrature,
    gram,
    induce,
    iln_matrix,
    point_masses,
)
from hermein.bundles import evaluation_matrices
from hermein.optimize import t_map

from conftest import distorted, fs_power


def beta_norm(k, j):
    return factorial(j) * factorial(k - j) / factorial(k + 1)


def kkt_minimum(m, A, e):
    """min v^H m v subject to A v = e, by solving the KKT system directly."""
    p, r = m.shape[0], A.shape[0]
    K = np.zeros((p + r, p + r), dtype=complex)
    K[:p, :p] = 2 * m
    K[:p, p:] = A.conj().T
    K[p:, :p] = A
    rhs = np.concatenate([np.zeros(p), e])
    v = np.linalg.solve(K, rhs)[:p]
    return float(np.real(v.conj() @ m @ v))


def random_pd(p, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(p, p)) + 1j * rng.normal(size=(p, p))
    return GramMetric(X @ X.conj().T / p + 0.5 * np.eye(p))


class TestGram:
    def test_beta_oracle(self):
        spec = BundleSpec((2,), 0)
        G = gram(MetricField(spec), spec, build_quadrature(32, 16)).matrix
        np.testing.assert_allclose(G, np.diag([1 / 3, 1 / 6, 1 / 3]), atol=1e-10)

    def test_adaptive_cross_check(self):
        # middle entry: integral of |z|^2 (1+|z|^2)^-2 omega
        def integrand(theta, r):
            return r**2 * (1 + r * r) ** -2 * r / (np.pi * (1 + r * r) ** 2)

        val, _ = spi.dblquad(integrand, 0, np.inf, 0, 2 * np.pi, epsabs=1e-13)
        assert val == pytest.approx(1 / 6, abs=1e-10)

    def test_trivial(self, rule32):
        spec = BundleSpec((0,), 0)
        np.testing.assert_allclose(gram(MetricField(spec), spec, rule32).matrix, [[1.0]], atol=1e-14)

    def test_linearity(self, rule32):
        f = distorted((1, -1), 2)
        a = gram(2.5 * f, f.spec, rule32).matrix
        b = gram(f, f.spec, rule32).matrix
        assert np.abs(a - 2.5 * b).max() < 1e-13

    def test_exactness_required(self):
        spec = BundleSpec((5,), 0)
        with pytest.raises(InsufficientQuadratureError):
            gram(MetricField(spec), spec, build_quadrature(4, 16))

    def test_point_masses_rejected(self):
        spec = BundleSpec((0,), 0)
        with pytest.raises(InsufficientQuadratureError):
            gram(MetricField(spec), spec, point_masses([0.0]))

    def test_block_oracle(self, rule32):
        spec = BundleSpec((1, -1), 3)
        G = gram(MetricField(spec), spec, rule32).matrix
        oracle = [beta_norm(k, j) for k in (4, 2) for j in range(k + 1)]
        np.testing.assert_allclose(G, np.diag(oracle), atol=1e-12)

    def test_non_pd_rejected(self):
        with pytest.raises(ConditioningError):
            GramMetric(np.diag([1.0, -1.0])).cholesky

    def test_non_hermitian_rejected(self):
        with pytest.raises(ConditioningError):
            GramMetric(np.array([[1.0, 2.0], [0.0, 1.0]]))


class TestInduce:
    def test_closed_form(self, rule32):
        spec = BundleSpec((2,), 0)
        m = gram(MetricField(spec), spec, rule32)
        z = 0.7 - 0.4j
        assert induce(m, spec, z)[0, 0].real == pytest.approx(fs_power(z, 2) / 3, rel=1e-12)
        assert induce(m, spec, 0)[0, 0].real == pytest.approx(1 / 3, rel=1e-12)

    def test_brute_force_minimum(self, rule32):
        spec = BundleSpec((2,), 0)
        m = gram(MetricField(spec), spec, rule32)
        z = 1.3 + 0.2j
        A = evaluation_matrices(spec, z)[0]
        assert induce(m, spec, z)[0, 0].real == pytest.approx(kkt_minimum(m.matrix, A, np.array([1.0])), rel=1e-10)

    def test_brute_force_rank_two(self):
        spec = BundleSpec((1, 0), 2)
        m = random_pd(spec.p, 4)
        z = -0.6 + 0.9j
        A = evaluation_matrices(spec, z)[0]
        I = induce(m, spec, z)
        rng = np.random.default_rng(1)
        for _ in range(4):
            e = rng.normal(size=2) + 1j * rng.normal(size=2)
            assert np.real(e.conj() @ I @ e) == pytest.approx(kkt_minimum(m.matrix, A, e), rel=1e-9)

    def test_product_fs(self, rule32):
        spec = BundleSpec((0, 0), 1)
        m = gram(MetricField(spec), spec, rule32)
        zs = np.array([0.0, 1j, 3 - 2j])
        expect = fs_power(zs, 1)[:, None, None] / 2 * np.eye(2)
        np.testing.assert_allclose(induce(m, spec, zs), expect, atol=1e-13)

    def test_identity_trivial(self):
        spec = BundleSpec((0,), 0)
        for z in (0, 2j, -5.0):
            assert induce(GramMetric(np.eye(1)), spec, z)[0, 0] == pytest.approx(1.0)

    def test_scale_equivariance(self):
        spec = BundleSpec((1, -1), 2)
        m = random_pd(spec.p, 2)
        zs = np.array([0.5, -2 + 1j])
        assert np.abs(induce(m.scaled(3.0), spec, zs) - 3.0 * induce(m, spec, zs)).max() < 1e-14

    def test_change_of_basis(self):
        # min v^H m v over A v = e is unchanged by m -> P^H m P, A -> A P
        spec = BundleSpec((2,), 1)
        m = random_pd(spec.p, 3)
        rng = np.random.default_rng(5)
        P = rng.normal(size=(spec.p, spec.p)) + 1j * rng.normal(size=(spec.p, spec.p))
        A = evaluation_matrices(spec, 0.4 + 0.3j)[0]
        e = np.array([1.0])
        before = kkt_minimum(m.matrix, A, e)
        after = kkt_minimum(P.conj().T @ m.matrix @ P, A @ P, e)
        assert after == pytest.approx(before, rel=1e-9)
        assert induce(m, spec, 0.4 + 0.3j)[0, 0].real == pytest.approx(before, rel=1e-10)

    def test_trace_identity(self, rule32):
        for degrees, n, seed in [((1, -1), 2, 0), ((0, 0), 3, 1), ((2,), 1, 2)]:
            spec = BundleSpec(degrees, n)
            m = random_pd(spec.p, seed)
            G = gram(InducedField(m, spec), spec, rule32)
            assert np.trace(np.linalg.solve(m.matrix, G.matrix)).real == pytest.approx(spec.rank, abs=1e-10)


class TestBergman:
    def test_line_bundle(self, rule32):
        spec = BundleSpec((2,), 0)
        B = bergman(MetricField(spec), spec, rule32, np.array([0, 1 + 1j, 20.0]))
        np.testing.assert_allclose(B, 3.0, atol=1e-10)

    def test_orthonormal_basis_oracle(self, rule32):
        # sum_j |z^j|^2 h(z) / ||z^j||^2 with the Beta norms
        spec = BundleSpec((4,), 0)
        z = 0.8 - 1.7j
        h = fs_power(z, 4)
        oracle = sum(abs(z) ** (2 * j) * h / beta_norm(4, j) for j in range(5))
        assert bergman(MetricField(spec), spec, rule32, z)[0, 0].real == pytest.approx(oracle, rel=1e-11)

    def test_split(self, rule32):
        spec = BundleSpec((1, -1), 5)
        B = bergman(MetricField(spec), spec, rule32, np.array([0.0, 0.3j, -4 + 1j]))
        np.testing.assert_allclose(B, np.broadcast_to(np.diag([7.0, 5.0]), B.shape), atol=1e-9)
        assert np.all(np.isclose(B[:, 0, 0] - B[:, 1, 1], 2.0, atol=1e-9))

    def test_trace_integral(self, rule32):
        spec = BundleSpec((1, -1), 5)
        B = bergman(MetricField(spec), spec, rule32, rule32.nodes)
        assert rule32.weights @ np.trace(B, axis1=1, axis2=2).real == pytest.approx(12.0, abs=1e-10)

    def test_trace_integral_distorted(self, rule48):
        f = distorted((2, 0), 2, degree=2)
        B = bergman(f, f.spec, rule48, rule48.nodes)
        assert rule48.weights @ np.trace(B, axis1=1, axis2=2).real == pytest.approx(f.spec.p, abs=1e-10)


class TestIln:
    def test_split_oracle(self, rule32):
        spec = BundleSpec((1, -1), 8)
        for z in (0.0, 0.4 + 2j, -9.0):
            np.testing.assert_allclose(iln_matrix(MetricField(spec), spec, rule32, z), np.diag([0.1, 0.125]), atol=1e-10)

    def test_offdiagonal_zero(self, rule32):
        spec = BundleSpec((2, 0), 3)
        M = iln_matrix(MetricField(spec), spec, rule32, np.array([0.1, 1 - 1j]))
        assert np.abs(M[:, 0, 1]).max() < 1e-12 and np.abs(M[:, 1, 0]).max() < 1e-12

    def test_scaled_gap_rationals(self):
        # n^2 (1/n - 1/(n+2)) = 2n/(n+2), exactly
        rule = build_quadrature(40, 72)
        for n in (8, 16, 32):
            spec = BundleSpec((1, -1), n)
            M = iln_matrix(MetricField(spec), spec, rule, 0.5)
            assert n**2 * (M[1, 1] - M[0, 0]).real == pytest.approx(2 * n / (n + 2), abs=1e-8)

    def test_inverse_is_conjugated_bergman(self, rule48):
        f = distorted((1, -1), 3)
        z = 0.6 + 0.2j
        H = f(z)
        conj = np.linalg.solve(H, bergman(f, f.spec, rule48, z) @ H)
        np.testing.assert_allclose(iln_matrix(f, f.spec, rule48, z) @ conj, np.eye(2), atol=1e-10)


def test_balanced_fixed_point(rule32):
    for degrees, n in [((2,), 0), ((1, -1), 4), ((0, 0), 3)]:
        spec = BundleSpec(degrees, n)
        m = gram(MetricField(spec), spec, rule32)
        if len(set(spec.twisted_degrees)) == 1:
            assert np.abs(t_map(m, spec, rule32).matrix - m.matrix).max() < 1e-9
        else:
            # unequal summands: each block is balanced with its own constant
            T = t_map(m, spec, rule32).matrix
            ratio = np.real(np.diag(T) / np.diag(m.matrix))
            k1, k2 = spec.twisted_degrees
            expect = np.r_[np.full(k1 + 1, spec.p / 2 / (k1 + 1)), np.full(k2 + 1, spec.p / 2 / (k2 + 1))]
            np.testing.assert_allclose(ratio, expect, atol=1e-10)
