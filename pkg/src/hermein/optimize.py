"""Balanced metrics: fixed-point iteration, gradient descent, and recovery.

Both optimizers work in the determinant-fixed slice of Met(W_n).  KN is
invariant under m -> c m when p = chi, so the overall scale is a flat
direction and is pinned to det(m0).
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np

from .bundles import (
    DEFAULT_STEP,
    BundleSpec,
    CallableField,
    DistortionSpec,
    Field,
    MetricField,
    frame_scale,
    mean_curvature_from_stencil,
    stencil,
    _chart_coordinate,
)
from .errors import DivergenceError, InvalidArgumentError, StallError
from .functionals import ReferenceMetric, kn_functional, kn_gradient
from .maps import (
    GramMetric,
    InducedField,
    gram,
    gram_from_samples,
    induce_unitary,
    to_unitary,
)
from .sphere import QuadratureRule, build_quadrature

__all__ = [
    "IterationReport",
    "RecoveredMetric",
    "StudyRow",
    "balanced_residual",
    "t_map",
    "t_iterate",
    "minimize_kn",
    "recover_ym",
    "sobolev_distance",
    "he_defect",
    "gauge_fit",
    "convergence_study",
]

DIVERGENCE_LIMIT = 1e3
KN_SLACK = 1e-10
DEGENERATE_CONDITION = 1e12
MAX_LOG_STEP = 10.0


@dataclass
class IterationReport:
    """Outcome of an optimizer run.

    For ``t_iterate`` the residual is the relative balanced-equation defect;
    for ``minimize_kn`` it is the norm of the projected Riemannian gradient.
    ``kn_increases`` lists the steps where KN went up by more than 1e-10.
    ``stop_reason`` is "converged", "max_iter" or "degenerate"; the last
    means the iterates ran off towards the boundary of Met(W_n) (condition
    number above 1e12), which is what happens when no balanced metric
    exists.
    """

    final: GramMetric
    residual_history: list[float]
    kn_history: list[float]
    converged: bool
    iterations: int
    kn_increases: list[int] = dc_field(default_factory=list)
    stop_reason: str = "max_iter"

    @property
    def iterates_kept(self) -> GramMetric:
        return self.final

    @property
    def residual(self) -> float:
        return self.residual_history[-1]

    @property
    def kn(self) -> float:
        return self.kn_history[-1]

    @property
    def monotone(self) -> bool:
        return not self.kn_increases


def t_map(m: GramMetric, spec: BundleSpec, rule: QuadratureRule) -> GramMetric:
    """T(m) = (p / r) * gram(z -> I(m)(z)); balanced metrics are its fixed points."""
    _, Iu = induce_unitary(m, spec, rule.nodes)
    return gram_from_samples(spec, rule, Iu).scaled(spec.p / spec.rank)


def _relative_defect(a: np.ndarray, m: np.ndarray) -> float:
    return float(np.linalg.norm(a - m) / np.linalg.norm(m))


def balanced_residual(m: GramMetric, spec: BundleSpec, rule: QuadratureRule) -> float:
    return _relative_defect(t_map(m, spec, rule).matrix, m.matrix)


def _check_common(m0, tol, max_iter):
    if not isinstance(m0, GramMetric):
        raise InvalidArgumentError("m0 must be a GramMetric")
    m0.cholesky
    if not tol > 0:
        raise InvalidArgumentError("tol must be positive")
    if max_iter < 0:
        raise InvalidArgumentError("max_iter must be nonnegative")


def t_iterate(
    m0: GramMetric,
    spec: BundleSpec,
    k0,
    rule: QuadratureRule,
    max_iter: int = 200,
    tol: float = 1e-8,
) -> IterationReport:
    """Fixed-point iteration m <- T(m), renormalized to det(m0) after each step."""
    _check_common(m0, tol, max_iter)
    spec.check_admissible()
    target = m0.logdet
    m = m0
    residuals: list[float] = []
    kns: list[float] = []
    increases: list[int] = []
    for it in range(max_iter + 1):
        tm = t_map(m, spec, rule)
        res = _relative_defect(tm.matrix, m.matrix)
        kn = kn_functional(m, k0, spec, rule)
        if kns and kn > kns[-1] + KN_SLACK:
            increases.append(it)
        residuals.append(res)
        kns.append(kn)
        if not np.isfinite(res) or res > DIVERGENCE_LIMIT:
            raise DivergenceError(f"t_iterate: residual {res:.3g} at iteration {it}")
        if res < tol:
            return IterationReport(m, residuals, kns, True, it, increases, "converged")
        if it == max_iter:
            break
        if _condition(tm) > DEGENERATE_CONDITION:
            return IterationReport(m, residuals, kns, False, it, increases, "degenerate")
        m = tm.scaled(np.exp((target - tm.logdet) / spec.p))
    return IterationReport(m, residuals, kns, False, max_iter, increases)


def _condition(m: GramMetric) -> float:
    ev = np.linalg.eigvalsh(m.matrix)
    return float(ev[-1] / ev[0])


def _riemannian_gradient(m: GramMetric, spec, k0, rule):
    """Trace-free part of L^H G L, with m = L L^H and G the Euclidean gradient."""
    L = m.cholesky
    X = L.conj().T @ kn_gradient(m, k0, spec, rule) @ L
    X = 0.5 * (X + X.conj().T)
    return X - np.trace(X).real / m.dim * np.eye(m.dim)


def _retract(m: GramMetric, X: np.ndarray, t: float) -> GramMetric:
    L = m.cholesky
    lam, V = np.linalg.eigh(X)
    E = (V * np.exp(-t * lam)) @ V.conj().T
    return GramMetric(L @ E @ L.conj().T)


def minimize_kn(
    m0: GramMetric,
    spec: BundleSpec,
    k0,
    rule: QuadratureRule,
    max_iter: int = 500,
    tol: float = 1e-9,
    step0: float = 1.0,
    armijo: float = 1e-4,
) -> IterationReport:
    """Projected gradient descent on KN with Armijo backtracking.

    Steps follow m <- L exp(-t X) L^H with m = L L^H and X the trace-free
    Riemannian gradient, so det(m) is preserved exactly.  The first trial
    step is step0, later ones use the Barzilai-Borwein length from the last
    two gradients; rejected trials are halved, and 60 consecutive halvings
    raise :class:`StallError`.
    """
    _check_common(m0, tol, max_iter)
    if not step0 > 0:
        raise InvalidArgumentError("step0 must be positive")
    spec.check_admissible()
    m = m0
    f = kn_functional(m, k0, spec, rule)
    X = _riemannian_gradient(m, spec, k0, rule)
    g = float(np.linalg.norm(X))
    residuals, kns, increases = [g], [f], []
    t = step0
    for it in range(1, max_iter + 1):
        if g < tol:
            return IterationReport(m, residuals, kns, True, it - 1, increases, "converged")
        # slack for rounding in f once the predicted decrease is below it
        noise = 8 * np.finfo(float).eps * (1.0 + abs(f))
        # cap the trial so one step changes eigenvalues by at most e^10
        t = min(t, MAX_LOG_STEP / float(np.abs(np.linalg.eigvalsh(X)).max()))
        for halving in range(61):
            if halving == 60:
                raise StallError(f"minimize_kn: line search failed at iteration {it}")
            trial = _retract(m, X, t)
            f_new = kn_functional(trial, k0, spec, rule)
            if f_new <= f - armijo * t * g * g + noise:
                break
            t *= 0.5
        if f_new > f + KN_SLACK:
            increases.append(it)
        X_new = _riemannian_gradient(trial, spec, k0, rule)
        # gradients live in different frames; for a step-length guess the
        # plain difference is good enough
        y = X_new - X
        sy = float(np.real(np.vdot(X, y)))
        t = t * g * g / sy if sy > 0 else step0
        m, f, X = trial, f_new, X_new
        g = float(np.linalg.norm(X))
        residuals.append(g)
        kns.append(f)
    done = g < tol
    return IterationReport(m, residuals, kns, done, max_iter, increases, "converged" if done else "max_iter")


# --------------------------------------------------------------------------
# recovery of the Yang-Mills metric


@dataclass(frozen=True, eq=False)
class RecoveredMetric:
    """c * I_n(m*) sampled at the rule's nodes, plus the same metric as a field."""

    spec: BundleSpec
    nodes: np.ndarray
    samples: np.ndarray
    c: float
    field: InducedField


def recover_ym(m_star: GramMetric, spec: BundleSpec, rule: QuadratureRule, reference: Field) -> RecoveredMetric:
    """Rescale I_n(m*) so its omega-averaged ln det matches the reference's."""
    base = InducedField(m_star, spec)
    zs = rule.nodes
    gap = rule.weights @ (reference.logdet(zs) - base.logdet(zs))
    c = float(np.exp(gap / spec.rank))
    fld = InducedField(m_star, spec, c)
    return RecoveredMetric(spec, zs, fld(zs), c, fld)


def _whitened(ref: Field, other: Field, zs) -> np.ndarray:
    """ref^-1/2 other ref^-1/2 - Id in the unitary frame (Hermitian)."""
    spec = ref.spec
    A = to_unitary(spec, zs, ref(zs))
    B = to_unitary(spec, zs, other(zs))
    lam, V = np.linalg.eigh(A)
    R = (V / np.sqrt(lam)[:, None, :]) @ np.conj(np.swapaxes(V, 1, 2))
    return R @ B @ R - np.eye(spec.rank)


def sobolev_distance(
    reference: Field, other: Field, rule: QuadratureRule, step: float = DEFAULT_STEP
) -> float:
    """L^2_1-type distance between two metrics on the same bundle.

    f = k^-1/2 h k^-1/2 - Id in the FS-unitary frame; the result is
    [sum w (|f|^2 + |grad f|^2)]^(1/2), where |grad f|^2 is the
    Fubini-Study gradient norm pi (1+|z|^2)^2 (|f_x|^2 + |f_y|^2) from
    fourth-order differences with spacing step * (1+|z|^2).  Nodes with
    |z| > 1 are differentiated in the chart w = 1/z.
    """
    zs = rule.nodes
    use_w = np.abs(zs) > 1.0
    zeta = _chart_coordinate(zs, use_w)
    q = 1.0 + np.abs(zeta) ** 2
    h = step * q
    offsets = np.array([1, -1, 2, -2, 1j, -1j, 2j, -2j])
    pts = zeta[None, :] + h[None, :] * offsets[:, None]
    pts_z = pts.copy()
    pts_z[:, use_w] = 1.0 / pts[:, use_w]
    f0 = _whitened(reference, other, zs)
    fs = _whitened(reference, other, pts_z.ravel()).reshape(8, zs.size, *f0.shape[1:])
    hh = h[:, None, None]
    fx = (8 * (fs[0] - fs[1]) - (fs[2] - fs[3])) / (12 * hh)
    fy = (8 * (fs[4] - fs[5]) - (fs[6] - fs[7])) / (12 * hh)
    grad2 = np.pi * q**2 * np.sum(np.abs(fx) ** 2 + np.abs(fy) ** 2, axis=(1, 2))
    val2 = np.sum(np.abs(f0) ** 2, axis=(1, 2))
    return float(np.sqrt(rule.weights @ (val2 + grad2)))


def he_defect(field: Field, rule: QuadratureRule, step: float = DEFAULT_STEP) -> float:
    """sup over nodes of |K - pi (deg / r) Id| with K = pi * Lambda F.

    K is self-adjoint for the metric, so its operator norm is the largest
    absolute eigenvalue, which is frame independent.
    """
    spec = field.spec
    lam = mean_curvature_from_stencil(stencil(field, rule.nodes, step))
    K = np.pi * (lam - spec.mu * np.eye(spec.rank))
    eig = np.linalg.eigvals(K)
    return float(np.max(np.abs(eig)))


def gauge_fit(reference: Field, other: Field, rule: QuadratureRule) -> Field:
    """Closest constant-automorphism image of ``reference`` to ``other``.

    Constant automorphisms of a split bundle mix only summands of equal
    degree.  The fit averages k^-1/2 h k^-1/2 over omega, keeps the blocks
    allowed by the degrees, and returns the metric P k P^H as a field.
    """
    spec = reference.spec
    zs = rule.nodes
    M = np.tensordot(rule.weights, _whitened(reference, other, zs), axes=(0, 0)) + np.eye(spec.rank)
    d = np.asarray(spec.degrees)
    M = np.where(d[:, None] == d[None, :], M, 0.0)
    M = 0.5 * (M + M.conj().T)
    def fitted(z):
        s = frame_scale(spec, z)
        Hu = to_unitary(spec, z, reference(z))
        lam, V = np.linalg.eigh(Hu)
        R = (V * np.sqrt(lam)[:, None, :]) @ np.conj(np.swapaxes(V, 1, 2))
        Hu_fit = R @ M @ R
        return s[:, :, None] * Hu_fit * s[:, None, :]

    return CallableField(spec, fitted)


@dataclass(frozen=True)
class StudyRow:
    n: int
    iterations: int
    residual: float
    converged: bool
    c: float
    distance: float
    gauge_distance: float
    he_defect: float
    kn: float


def convergence_study(
    degrees: Sequence[int],
    start_distortion: DistortionSpec,
    n_list: Sequence[int],
    rule_for: Callable[[int], QuadratureRule] | tuple[int, int] | None = None,
    max_iter: int = 200,
    tol: float = 1e-8,
) -> list[StudyRow]:
    """Balanced-metric recovery across twists n.

    For each n: start from the Gram matrix of the distorted field, run
    ``t_iterate``, rescale c * I_n(m*), and measure the L^2_1 distance to
    the Fubini-Study product both literally and after fitting the constant
    automorphism gauge.
    """
    ns = list(n_list)
    if not ns:
        raise InvalidArgumentError("n_list must not be empty")
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise InvalidArgumentError("n_list must be strictly ascending")
    if rule_for is None:
        top = max(degrees)
        rule_for = lambda n: default_rule(n + top)  # noqa: E731
    elif isinstance(rule_for, tuple):
        fixed = build_quadrature(*rule_for)
        rule_for = lambda n: fixed  # noqa: E731
    rows = []
    for n in ns:
        spec = BundleSpec(tuple(degrees), n)
        spec.check_admissible()
        rule = rule_for(n)
        ref = MetricField(spec)
        k0 = ReferenceMetric(ref)
        m0 = gram(MetricField(spec, start_distortion), spec, rule)
        rep = t_iterate(m0, spec, k0, rule, max_iter, tol)
        rec = recover_ym(rep.final, spec, rule, ref)
        dist = sobolev_distance(ref, rec.field, rule)
        gdist = sobolev_distance(gauge_fit(ref, rec.field, rule), rec.field, rule)
        rows.append(
            StudyRow(
                n=n,
                iterations=rep.iterations,
                residual=rep.residual,
                converged=rep.converged,
                c=rec.c,
                distance=dist,
                gauge_distance=gdist,
                he_defect=he_defect(rec.field, rule),
                kn=rep.kn,
            )
        )
    return rows


def default_rule(k: int) -> QuadratureRule:
    """A product rule comfortably above exactness k (the top twisted degree)."""
    return build_quadrature(k + 24, 2 * k + 48)
