import numpy as np
import pytest

from hermein import BundleSpec, DistortionSpec, MetricField, ReferenceMetric, build_quadrature


@pytest.fixture(scope="session")
def rule32():
    return build_quadrature(32, 32)


@pytest.fixture(scope="session")
def rule48():
    return build_quadrature(48, 48)


def fs(degrees, n):
    spec = BundleSpec(tuple(degrees), n)
    return spec, MetricField(spec), ReferenceMetric.fubini_study(spec)


def distorted(degrees, n, seed=7, degree=1, amplitude=0.3):
    spec = BundleSpec(tuple(degrees), n)
    d = DistortionSpec.random_log_polynomial(spec.rank, degree, amplitude, seed)
    return MetricField(spec, d)


def fs_power(z, k):
    return (1.0 + np.abs(z) ** 2) ** (-k)
