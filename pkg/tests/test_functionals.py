from math import factorial, log

import numpy as np
import pytest

from hermein import (
    BundleSpec,
    CallableField,
    ConditioningError,
    DistortionSpec,
    GramMetric,
    InvalidArgumentError,
    MetricField,
    MetricPath,
    ReferenceMetric,
    build_quadrature,
    donaldson_derivative,
    donaldson_m,
    functional_gap,
    gram,
    kn_functional,
    kn_gradient,
    ldet_w,
    point_masses,
    quasi_uniform_points,
    torsion_variation,
    ym_energy,
)

from conftest import distorted, fs


def constant_rescale(field, diag):
    d = np.asarray(diag, dtype=float)
    return CallableField(field.spec, lambda z: field(np.atleast_1d(z)) * np.sqrt(d[:, None] * d[None, :]))


def random_direction(m, rng):
    """Hermitian perturbation of unit size relative to m."""
    L = m.cholesky
    D = rng.normal(size=m.matrix.shape) + 1j * rng.normal(size=m.matrix.shape)
    D = D + D.conj().T
    D /= np.linalg.norm(D)
    return L @ D @ L.conj().T


class TestLdet:
    def test_identity(self):
        assert ldet_w(GramMetric(np.eye(5))) == 0.0

    def test_diagonal(self):
        assert ldet_w(np.diag([2.0, 2.0])) == pytest.approx(2 * log(2), abs=1e-15)

    def test_gram_oracle(self, rule32):
        spec, f, _ = fs((2,), 0)
        assert ldet_w(gram(f, spec, rule32)) == pytest.approx(log(1 / 3) + log(1 / 6) + log(1 / 3), abs=1e-12)

    def test_non_pd(self):
        with pytest.raises(ConditioningError):
            ldet_w(np.diag([1.0, -2.0]))


class TestKempfNess:
    def test_closed_form_at_fs(self, rule32):
        # I(L(FS)) = FS / (n+1) on O(n) (+) O(n)
        n = 3
        spec, f, k0 = fs((0, 0), n)
        ld = 2 * sum(log(factorial(j) * factorial(n - j) / factorial(n + 1)) for j in range(n + 1))
        expect = 0.5 * ld - spec.chi / 4 * 2 * log(1 / (n + 1))
        assert kn_functional(gram(f, spec, rule32), k0, spec, rule32) == pytest.approx(expect, abs=1e-11)

    def test_trivial(self, rule32):
        spec, f, k0 = fs((0,), 0)
        assert abs(kn_functional(GramMetric(np.eye(1)), k0, spec, rule32)) < 1e-14

    def test_scaling_law(self, rule32):
        f = distorted((1, -1), 3)
        spec, k0 = f.spec, ReferenceMetric.fubini_study(f.spec)
        m = gram(f, spec, rule32)
        diff = kn_functional(m.scaled(3.0), k0, spec, rule32) - kn_functional(m, k0, spec, rule32)
        assert abs(diff - (spec.p - spec.chi) / 2 * log(3)) < 1e-10

    def test_point_mass_limit(self, rule32):
        f = distorted((0, 0), 2)
        spec, k0 = f.spec, ReferenceMetric.fubini_study(f.spec)
        m = gram(f, spec, rule32)
        cont = kn_functional(m, k0, spec, rule32)
        many = kn_functional(m, k0, spec, point_masses(quasi_uniform_points(200)))
        few = kn_functional(m, k0, spec, point_masses(quasi_uniform_points(12)))
        assert abs(many - cont) < 0.05
        assert abs(many - cont) <= abs(few - cont) + 1e-12

    def test_reference_only_shifts(self, rule32):
        f = distorted((1, 0), 2)
        spec = f.spec
        m1 = gram(f, spec, rule32)
        m2 = gram(MetricField(spec), spec, rule32)
        ka = ReferenceMetric.fubini_study(spec)
        kb = ReferenceMetric(distorted((1, 0), 2, seed=3))
        da = kn_functional(m1, ka, spec, rule32) - kn_functional(m2, ka, spec, rule32)
        db = kn_functional(m1, kb, spec, rule32) - kn_functional(m2, kb, spec, rule32)
        assert da == pytest.approx(db, abs=1e-11)


class TestKnGradient:
    def test_zero_at_balanced(self, rule32):
        spec, f, k0 = fs((0, 0), 4)
        assert np.abs(kn_gradient(gram(f, spec, rule32), k0, spec, rule32)).max() < 1e-9

    @pytest.mark.parametrize("degrees,n", [((0, 0), 3), ((1, -1), 2), ((2,), 1)])
    def test_finite_differences(self, rule32, degrees, n):
        f = distorted(degrees, n)
        spec, k0 = f.spec, ReferenceMetric.fubini_study(f.spec)
        m = gram(f, spec, rule32)
        G = kn_gradient(m, k0, spec, rule32)
        rng = np.random.default_rng(0)
        eps = 1e-5
        for _ in range(10):
            D = random_direction(m, rng)
            fd = (
                kn_functional(GramMetric(m.matrix + eps * D), k0, spec, rule32)
                - kn_functional(GramMetric(m.matrix - eps * D), k0, spec, rule32)
            ) / (2 * eps)
            exact = np.real(np.trace(G @ D))
            assert abs(fd - exact) <= 1e-5 * abs(exact)

    def test_point_mass_gradient(self):
        f = distorted((0, 0), 2)
        spec, k0 = f.spec, ReferenceMetric.fubini_study(f.spec)
        rule = point_masses(quasi_uniform_points(30))
        m = gram(f, spec, build_quadrature(16, 16))
        G = kn_gradient(m, k0, spec, rule)
        D = random_direction(m, np.random.default_rng(4))
        eps = 1e-5
        fd = (kn_functional(GramMetric(m.matrix + eps * D), k0, spec, rule) - kn_functional(GramMetric(m.matrix - eps * D), k0, spec, rule)) / (2 * eps)
        assert fd == pytest.approx(np.real(np.trace(G @ D)), rel=1e-5)

    def test_scale_direction(self, rule32):
        # differentiating the scaling law: <G, m> = 0 when p = chi
        f = distorted((1, -1), 3)
        spec, k0 = f.spec, ReferenceMetric.fubini_study(f.spec)
        m = gram(f, spec, rule32)
        G = kn_gradient(m, k0, spec, rule32)
        assert abs(np.trace(G @ m.matrix)) < 1e-10
        assert np.abs(G - G.conj().T).max() < 1e-14


class TestDonaldson:
    def test_reference_to_itself(self, rule32):
        spec, f, k0 = fs((1, -1), 3)
        assert donaldson_m(f, k0, spec, rule32) == 0.0

    def test_scale_invariance(self, rule32):
        f = distorted((1, -1), 3)
        assert abs(donaldson_m(2.0 * f, f, f.spec, rule32)) < 1e-8

    def test_constant_diagonal_closed_form(self, rule32):
        # M(FS, diag(a, b) FS) = 1/2 sum_i ln(a_i) (d_i + n - mu)
        spec, f, k0 = fs((2, -1), 3)
        a = (3.0, 0.5)
        expect = 0.5 * sum(log(ai) * (k - spec.mu) for ai, k in zip(a, spec.twisted_degrees))
        assert donaldson_m(constant_rescale(f, a), k0, spec, rule32, 64) == pytest.approx(expect, abs=1e-6)

    @pytest.mark.parametrize("n", [1, 4, 9])
    def test_unstable_slope(self, rule32, n):
        spec = BundleSpec((1, -1), n)
        for u in (0.0, 0.7):
            h = MetricField(spec, DistortionSpec.diagonal_exp(u))
            dh = CallableField(spec, lambda z, h=h: h(z) @ np.diag([1.0, -1.0]))
            assert donaldson_derivative(h, dh, spec, rule32) == pytest.approx(1.0, abs=1e-6)

    def test_cocycle(self, rule48):
        h1 = distorted((1, -1), 3, seed=1)
        h2 = distorted((1, -1), 3, seed=2)
        spec, k0 = h1.spec, ReferenceMetric.fubini_study(h1.spec)
        total = donaldson_m(h1, k0, spec, rule48) + donaldson_m(h2, h1, spec, rule48) + donaldson_m(k0.field, h2, spec, rule48)
        assert abs(total) < 1e-6

    def test_step_validation(self, rule32):
        spec, f, k0 = fs((0,), 1)
        with pytest.raises(InvalidArgumentError):
            donaldson_m(f, k0, spec, rule32, 9)
        with pytest.raises(InvalidArgumentError):
            donaldson_m(f, k0, spec, rule32, 6)
        with pytest.raises(InvalidArgumentError):
            donaldson_m(f, k0, spec, point_masses([0, 1]), 8)


class TestYangMills:
    def test_polystable_bound_attained(self, rule32):
        spec, f, _ = fs((0, 0), 3)
        assert ym_energy(f, spec, rule32) == pytest.approx(18 * np.pi**2, abs=1e-5)

    def test_unstable_split(self, rule32):
        spec, f, _ = fs((1, -1), 3)
        e = ym_energy(f, spec, rule32)
        assert e == pytest.approx(20 * np.pi**2, abs=1e-5)
        assert e > 18 * np.pi**2

    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_lower_bound(self, rule48, seed):
        f = distorted((2, 0), 2, seed=seed, degree=2)
        spec = f.spec
        assert ym_energy(f, spec, rule48) >= np.pi**2 * spec.degree**2 / spec.rank - 1e-6

    def test_point_mass_rejected(self):
        spec, f, _ = fs((0,), 1)
        with pytest.raises(InvalidArgumentError):
            ym_energy(f, spec, point_masses([0.5]))


class TestTorsion:
    def test_split_diagonal_path(self, rule32):
        n, u = 6, 0.5
        spec, f, k0 = fs((1, -1), n)
        path = MetricPath(f, MetricField(spec, DistortionSpec.diagonal_exp(1.0)))
        t1, t2 = torsion_variation(path, u, k0, spec, rule32, parts=True)
        e = np.e
        v1, v2 = (e - 1) / (1 + u * (e - 1)), (1 / e - 1) / (1 + u * (1 / e - 1))
        assert t1 == pytest.approx(v1 * (n + 1) + v2 * (n - 1), abs=1e-8)
        assert t1 + t2 == pytest.approx(0.0, abs=1e-8)

    def test_scaling_path(self, rule32):
        spec, f, k0 = fs((2, 0), 3)
        assert abs(torsion_variation(MetricPath(f, 2.5 * f), 0.3, k0, spec, rule32)) < 1e-8

    def test_parameter_range(self, rule32):
        spec, f, k0 = fs((0,), 1)
        with pytest.raises(InvalidArgumentError):
            torsion_variation(MetricPath(f, f), 1.5, k0, spec, rule32)

    def test_endpoint_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            MetricPath(MetricField(BundleSpec((0,), 1)), MetricField(BundleSpec((0,), 2)))


class TestFunctionalGap:
    def test_zero_for_equal_pair(self, rule32):
        f = distorted((0, 0), 2)
        assert functional_gap(f, f, ReferenceMetric.fubini_study(f.spec), f.spec, rule32) < 1e-12

    def test_symmetric(self, rule32):
        h, k = distorted((0, 0), 2, seed=1), distorted((0, 0), 2, seed=2)
        k0 = ReferenceMetric.fubini_study(h.spec)
        assert functional_gap(h, k, k0, h.spec, rule32) == pytest.approx(functional_gap(k, h, k0, h.spec, rule32), abs=1e-12)
