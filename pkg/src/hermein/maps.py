"""Bridge operators between bundle metrics and section-space metrics.

``gram`` is the L^2 map Met(E_n) -> Met(W_n); ``induce`` is the quotient map
Met(W_n) -> Met(E_n), I(m)(e, e) = min{ m(v, v) : v(z) = e }, which in
matrices is (A m^-1 A^H)^-1 for the evaluation map A at z.

Internally every r x r quantity is carried in the Fubini-Study unitary
frame (evaluation rows scaled by (1+|z|^2)^(-k_i/2)) so that nothing over-
or underflows at large |z| or large n.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as la

from .bundles import BundleSpec, Field, evaluation_matrices, frame_scale
from .errors import (
    BasePointError,
    ConditioningError,
    InsufficientQuadratureError,
    InvalidArgumentError,
)
from .sphere import QuadratureRule

__all__ = [
    "GramMetric",
    "gram",
    "gram_from_samples",
    "induce",
    "induce_unitary",
    "bergman",
    "bergman_endomorphisms",
    "iln_matrix",
    "InducedField",
]


@dataclass(frozen=True, eq=False)
class GramMetric:
    """A Hermitian positive-definite p x p matrix with a cached Cholesky factor."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidArgumentError("Gram metric must be a square matrix")
        scale = max(np.abs(m).max(), 1e-300)
        if np.abs(m - m.conj().T).max() > 1e-12 * scale:
            raise ConditioningError("Gram metric is not Hermitian")
        object.__setattr__(self, "matrix", 0.5 * (m + m.conj().T))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def cholesky(self) -> np.ndarray:
        try:
            return la.cholesky(self.matrix, lower=True)
        except la.LinAlgError as exc:
            raise ConditioningError("Gram metric is not positive-definite") from exc

    @cached_property
    def logdet(self) -> float:
        return float(2.0 * np.sum(np.log(np.real(np.diag(self.cholesky)))))

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return la.cho_solve((self.cholesky, True), rhs)

    @cached_property
    def inverse(self) -> np.ndarray:
        inv = self.solve(np.eye(self.dim))
        return 0.5 * (inv + inv.conj().T)

    def scaled(self, c: float) -> "GramMetric":
        return GramMetric(c * self.matrix)

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)


def _unitary_evaluations(spec: BundleSpec, zs) -> np.ndarray:
    A = evaluation_matrices(spec, zs)
    return A * frame_scale(spec, zs)[:, :, None]


def _require_continuous(spec: BundleSpec, rule: QuadratureRule) -> None:
    if not rule.is_continuous:
        raise InsufficientQuadratureError("L_n needs a continuous quadrature rule")
    need = max(spec.twisted_degrees)
    if rule.exactness < need:
        raise InsufficientQuadratureError(
            f"quadrature exactness {rule.exactness} < max twisted degree {need}"
        )


def gram_from_samples(spec: BundleSpec, rule: QuadratureRule, unitary_samples: np.ndarray) -> GramMetric:
    """L_n from metric samples already expressed in the unitary frame."""
    As = _unitary_evaluations(spec, rule.nodes)
    G = np.einsum("k,kai,kab,kbj->ij", rule.weights, np.conj(As), unitary_samples, As, optimize=True)
    gm = GramMetric(0.5 * (G + G.conj().T))
    gm.cholesky  # raise early on a non-PD result
    return gm


def to_unitary(spec: BundleSpec, zs, H: np.ndarray) -> np.ndarray:
    """Express frame matrices H(z) in the FS-unitary frame: S^-1 H S^-1."""
    inv = 1.0 / frame_scale(spec, zs)
    return inv[:, :, None] * H * inv[:, None, :]


def from_unitary(spec: BundleSpec, zs, Hu: np.ndarray) -> np.ndarray:
    s = frame_scale(spec, zs)
    return s[:, :, None] * Hu * s[:, None, :]


def gram(field: Field, spec: BundleSpec, rule: QuadratureRule) -> GramMetric:
    """L^2 metric on sections: G_ij = sum_k w_k A_k[:, i]^H H(z_k) A_k[:, j]."""
    spec.check_admissible()
    _require_continuous(spec, rule)
    H = field(rule.nodes)
    return gram_from_samples(spec, rule, to_unitary(spec, rule.nodes, H))


def _projector_blocks(m: GramMetric, spec: BundleSpec, zs) -> tuple[np.ndarray, np.ndarray]:
    """Unitary-frame evaluations As and the r x r blocks As m^-1 As^H."""
    As = _unitary_evaluations(spec, zs)
    N, r, p = As.shape
    if m.dim != p:
        raise InvalidArgumentError(f"Gram metric has dimension {m.dim}, bundle has p = {p}")
    X = m.solve(np.conj(As).transpose(2, 0, 1).reshape(p, N * r))  # m^-1 As^H
    X = X.reshape(p, N, r).transpose(1, 0, 2)
    Q = As @ X
    return As, 0.5 * (Q + np.conj(np.swapaxes(Q, 1, 2)))


def induce_unitary(m: GramMetric, spec: BundleSpec, zs) -> tuple[np.ndarray, np.ndarray]:
    """I_n(m) at chart points in the unitary frame, plus the unitary evaluations."""
    As, Q = _projector_blocks(m, spec, zs)
    eig = np.linalg.eigvalsh(Q)
    if np.any(eig[:, 0] <= 1e-14 * eig[:, -1]):
        raise BasePointError("evaluation map is rank-deficient; E_n not generated at a point")
    I = np.linalg.inv(Q)
    return As, 0.5 * (I + np.conj(np.swapaxes(I, 1, 2)))


def induce(m: GramMetric, spec: BundleSpec, z):
    """Induced fiber metric (A m^-1 A^H)^-1 at z (scalar or array of points)."""
    spec.check_admissible()
    scalar = np.ndim(z) == 0
    zs = np.atleast_1d(np.asarray(z, dtype=complex))
    _, Iu = induce_unitary(m, spec, zs)
    out = from_unitary(spec, zs, Iu)
    return out[0] if scalar else out


@dataclass(frozen=True, eq=False)
class InducedField(Field):
    """The bundle metric z -> scale * I_n(m)(z), evaluable anywhere on the chart."""

    m: GramMetric
    spec: BundleSpec
    scale: float = 1.0

    def _matrices(self, zs):
        return self.scale * induce(self.m, self.spec, zs)

    def logdet(self, zs):
        zs = np.atleast_1d(np.asarray(zs, dtype=complex))
        _, Q = _projector_blocks(self.m, self.spec, zs)
        _, ld = np.linalg.slogdet(Q)
        k = sum(self.spec.twisted_degrees)
        return -ld - k * np.log1p(np.abs(zs) ** 2) + self.spec.rank * np.log(self.scale)


def bergman_endomorphisms(field: Field, spec: BundleSpec, rule: QuadratureRule, zs, G: GramMetric | None = None):
    """Projection-kernel diagonal as a fiber endomorphism, in the unitary frame.

    Returns B_u(z) = H_u(z) As G^-1 As^H, which is similar to the frame-form
    H A G^-1 A^H by the diagonal frame scaling, hence has the same trace and
    spectrum.
    """
    if G is None:
        G = gram(field, spec, rule)
    zs = np.atleast_1d(np.asarray(zs, dtype=complex))
    _, Q = _projector_blocks(G, spec, zs)
    Hu = to_unitary(spec, zs, field(zs))
    return Hu @ Q


def bergman(field: Field, spec: BundleSpec, rule: QuadratureRule, z):
    """Bergman kernel on the diagonal, B(z) = H(z) A_z gram(field)^-1 A_z^H.

    For the Fubini-Study metric on a split bundle this is diag(d_i + n + 1),
    and its omega-integrated trace is dim W_n.
    """
    scalar = np.ndim(z) == 0
    zs = np.atleast_1d(np.asarray(z, dtype=complex))
    Bu = bergman_endomorphisms(field, spec, rule, zs)
    s = frame_scale(spec, zs)
    B = s[:, :, None] * Bu / s[:, None, :]
    return B[0] if scalar else B


def iln_matrix(field: Field, spec: BundleSpec, rule: QuadratureRule, z):
    """h^-1 I_n L_n(h) at z.

    Its inverse is H^-1 B H, so it has the reciprocal spectrum of the
    Bergman kernel; for split FS fields it is diag(1 / (d_i + n + 1)).
    """
    scalar = np.ndim(z) == 0
    zs = np.atleast_1d(np.asarray(z, dtype=complex))
    G = gram(field, spec, rule)
    H = field(zs)
    out = np.linalg.solve(H, induce(G, spec, zs))
    return out[0] if scalar else out
