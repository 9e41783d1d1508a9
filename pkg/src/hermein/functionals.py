"""Scalar functionals on Met(W_n) and Met(E_n).

Conventions used throughout (see the convention ledger in ``report``):

* ``mean_curvature`` Lambda F = F (1+|z|^2)^2 integrates (against omega) to
  deg E_n, and the Fubini-Study metric on O(k) has Lambda F = k.
* Donaldson's functional is fixed through its path derivative

      dM/du = 1/2 * integral tr( v (Lambda F - mu Id) ) omega,   v = h^-1 dh/du,

  which gives M(h, a h) = 0 and slope 1 on the diagonal path of
  O(1) (+) O(-1).  In the (c_R, c_lambda) form c_R = 1/(2 pi) and
  c_lambda = -mu / 2.
* The Kempf-Ness functional carries the minus sign, so it is invariant
  under m -> c m whenever p = chi.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bundles import (
    DEFAULT_STEP,
    BundleSpec,
    Field,
    MetricField,
    PathField,
    frame_scale,
    mean_curvature_from_stencil,
    stencil,
)
from .errors import BasePointError, InvalidArgumentError
from .maps import (
    GramMetric,
    _projector_blocks,
    bergman_endomorphisms,
    gram,
)
from .sphere import QuadratureRule

__all__ = [
    "ReferenceMetric",
    "MetricPath",
    "ldet_w",
    "kn_functional",
    "kn_gradient",
    "kn_terms",
    "donaldson_m",
    "donaldson_derivative",
    "ym_energy",
    "torsion_variation",
    "functional_gap",
    "C_R",
    "c_lambda",
]

C_R = 1.0 / (2.0 * np.pi)


def c_lambda(spec: BundleSpec) -> float:
    return -0.5 * spec.mu


@dataclass(frozen=True, eq=False)
class ReferenceMetric:
    """The base point k_0 against which fiber determinants are measured.

    By default this is the Fubini-Study field of the bundle, and det_{E_n} is
    taken relative to it, so det_{E_n}(k_0) = 1 identically.  A pointwise
    rescaling to unit matrix determinant is not used: on a bundle of
    nonzero degree it is singular at infinity.
    """

    field: Field

    @classmethod
    def fubini_study(cls, spec: BundleSpec) -> "ReferenceMetric":
        return cls(MetricField(spec))

    @property
    def spec(self) -> BundleSpec:
        return self.field.spec

    def logdet(self, zs) -> np.ndarray:
        return self.field.logdet(zs)

    def relative_logdet(self, field: Field, zs) -> np.ndarray:
        """ln det(k_0(z)^-1 h(z))."""
        return field.logdet(zs) - self.logdet(zs)


def _as_field(k) -> Field:
    return k.field if isinstance(k, ReferenceMetric) else k


@dataclass(frozen=True, eq=False)
class MetricPath:
    """Straight path h(u) = (1 - u) h0 + u h1 between two metric fields."""

    h0: Field
    h1: Field
    u_steps: int = 32

    def __post_init__(self):
        if self.h0.spec != self.h1.spec:
            raise InvalidArgumentError("path endpoints live on different bundles")
        if self.u_steps < 1:
            raise InvalidArgumentError("u_steps must be positive")

    @property
    def spec(self) -> BundleSpec:
        return self.h0.spec

    def at(self, u: float) -> PathField:
        return PathField(self.h0, self.h1, float(u))


def ldet_w(m) -> float:
    """ln det of a Gram metric, from its Cholesky pivots."""
    if not isinstance(m, GramMetric):
        m = GramMetric(np.asarray(m))
    return m.logdet


def _induced_logdet_rel(m: GramMetric, k0, spec: BundleSpec, zs):
    """Unitary evaluations, the blocks Q = As m^-1 As^H, and ln det(k0^-1 I(m))."""
    As, Q = _projector_blocks(m, spec, zs)
    sign, ldq = np.linalg.slogdet(Q)
    if np.any(sign.real <= 0):
        raise BasePointError("evaluation map is rank-deficient at a node")
    k = sum(spec.twisted_degrees)
    ld_induced = -ldq - k * np.log1p(np.abs(zs) ** 2)
    return As, Q, ld_induced - _as_field(k0).logdet(zs)


def kn_terms(m: GramMetric, k0, spec: BundleSpec, rule: QuadratureRule) -> tuple[float, float]:
    """The two pieces (ldet m, kn(I(m))) of the Kempf-Ness functional."""
    spec.check_admissible()
    _, _, rel = _induced_logdet_rel(m, k0, spec, rule.nodes)
    return m.logdet, float(rule.weights @ rel)


def kn_functional(m: GramMetric, k0, spec: BundleSpec, rule: QuadratureRule) -> float:
    """KN(m) = 1/2 ln det m - (chi / 2r) * sum_i w_i ln det(k0^-1 I(m))(z_i).

    Works for continuous rules and for point masses alike.
    """
    ld, kn = kn_terms(m, k0, spec, rule)
    return 0.5 * ld - spec.chi / (2.0 * spec.rank) * kn


def kn_gradient(m: GramMetric, k0, spec: BundleSpec, rule: QuadratureRule) -> np.ndarray:
    """Euclidean gradient X of KN under <X, dm> = Re tr(X dm)."""
    spec.check_admissible()
    As, Q = _projector_blocks(m, spec, rule.nodes)
    Iu = np.linalg.inv(Q)
    P = np.einsum("k,kai,kab,kbj->ij", rule.weights, np.conj(As), Iu, As, optimize=True)
    minv = m.inverse
    X = 0.5 * minv - spec.chi / (2.0 * spec.rank) * (minv @ P @ minv)
    return 0.5 * (X + X.conj().T)


# --------------------------------------------------------------------------
# Donaldson functional


def _path_integrand(st0, st1, H0, H1, spec, rule, u):
    """tr(v Lambda F) and tr(v) at the nodes for the straight path at u."""
    lam = mean_curvature_from_stencil(st0.combine(st1, 1.0 - u, u))
    Hu = (1.0 - u) * H0 + u * H1
    v = np.linalg.solve(Hu, H1 - H0)
    tvf = np.real(np.einsum("kij,kji->k", v, lam))
    tv = np.real(np.trace(v, axis1=1, axis2=2))
    return tvf, tv


def _simpson_weights(steps: int) -> np.ndarray:
    w = np.ones(steps + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / (3.0 * steps)


def donaldson_m(
    h: Field,
    k0,
    spec: BundleSpec,
    rule: QuadratureRule,
    u_steps: int = 32,
    step: float = DEFAULT_STEP,
) -> float:
    """M(k0, h): the path derivative integrated by composite Simpson along k0 -> h."""
    if u_steps < 8 or u_steps % 2:
        raise InvalidArgumentError("u_steps must be even and at least 8")
    if not rule.is_continuous:
        raise InvalidArgumentError("donaldson_m needs a continuous quadrature rule")
    k = _as_field(k0)
    zs = rule.nodes
    st0, st1 = stencil(k, zs, step), stencil(h, zs, step)
    H0, H1 = k(zs), h(zs)
    cl = c_lambda(spec)
    total = 0.0
    for u, wu in zip(np.linspace(0.0, 1.0, u_steps + 1), _simpson_weights(u_steps)):
        tvf, tv = _path_integrand(st0, st1, H0, H1, spec, rule, u)
        total += wu * float(rule.weights @ (C_R * np.pi * tvf + cl * tv))
    return total


def donaldson_derivative(
    h: Field, dh: Field, spec: BundleSpec, rule: QuadratureRule, step: float = DEFAULT_STEP
) -> float:
    """dM/du along any path, given h(u) and dh/du as fields."""
    zs = rule.nodes
    lam = mean_curvature_from_stencil(stencil(h, zs, step))
    v = np.linalg.solve(h(zs), dh(zs))
    tvf = np.real(np.einsum("kij,kji->k", v, lam))
    tv = np.real(np.trace(v, axis1=1, axis2=2))
    return float(rule.weights @ (C_R * np.pi * tvf + c_lambda(spec) * tv))


# --------------------------------------------------------------------------
# Yang-Mills and torsion


def _require_continuous(rule: QuadratureRule, what: str) -> None:
    if not rule.is_continuous:
        raise InvalidArgumentError(f"{what} needs a continuous quadrature rule")


def ym_energy(field: Field, spec: BundleSpec, rule: QuadratureRule, step: float = DEFAULT_STEP) -> float:
    """Integral of |K|^2 with K = pi * Lambda F, the norm taken with respect to h.

    ``tr(K K*)`` uses the h-adjoint K* = H^-1 K^H H, which equals K here, so
    the integrand is tr(K^2) and is frame independent.
    """
    _require_continuous(rule, "ym_energy")
    lam = mean_curvature_from_stencil(stencil(field, rule.nodes, step))
    K = np.pi * lam
    H = field(rule.nodes)
    Kstar = np.linalg.solve(H, np.conj(np.swapaxes(K, 1, 2)) @ H)
    return float(np.real(rule.weights @ np.einsum("kij,kji->k", K, Kstar)))


def torsion_variation(
    path: MetricPath,
    u: float,
    k0,
    spec: BundleSpec,
    rule: QuadratureRule,
    step: float = DEFAULT_STEP,
    parts: bool = False,
):
    """Variation of the analytic torsion along a straight path at parameter u.

    With alpha = -h(u)^-1 dh/du, returns T1 + T2 where
    T1 = -sum w tr(alpha Lambda F) and T2 = sum w tr(alpha (B - Id)).
    Pass ``parts=True`` to get (T1, T2).
    """
    _require_continuous(rule, "torsion_variation")
    if not 0.0 <= u <= 1.0:
        raise InvalidArgumentError("u must lie in [0, 1]")
    zs = rule.nodes
    hu = path.at(u)
    H0, H1 = path.h0(zs), path.h1(zs)
    Hu = hu(zs)
    alpha = -np.linalg.solve(Hu, H1 - H0)
    lam = mean_curvature_from_stencil(stencil(hu, zs, step))
    t1 = -float(np.real(rule.weights @ np.einsum("kij,kji->k", alpha, lam)))
    # Bergman term in the unitary frame: conjugate alpha accordingly
    Bu = bergman_endomorphisms(hu, spec, rule, zs)
    S = frame_scale(spec, zs)
    alpha_u = S[:, None, :] * alpha / S[:, :, None]
    r = spec.rank
    t2 = float(np.real(rule.weights @ np.einsum("kij,kji->k", alpha_u, Bu - np.eye(r))))
    return (t1, t2) if parts else t1 + t2


def functional_gap(
    h: Field,
    k: Field,
    k0,
    spec: BundleSpec,
    rule: QuadratureRule,
    u_steps: int = 32,
) -> float:
    """|(M - KN o L_n)(h) - (M - KN o L_n)(k)| at the twist carried by ``spec``."""

    def combined(f: Field) -> float:
        return donaldson_m(f, k0, spec, rule, u_steps) - kn_functional(gram(f, spec, rule), k0, spec, rule)

    return abs(combined(h) - combined(k))
