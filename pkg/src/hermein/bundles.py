"""Split bundles O(a) (+) O(b) over P^1, their section bases and metrics.

A bundle E_n = E_0 (x) O(n) is described by the summand degrees of E_0 and
the twist n.  Sections are the monomials z^j, 0 <= j <= d_i + n, of each
summand, ordered summand-major.  Metrics are r x r Hermitian matrix
functions in the affine chart; every metric used here has the form

    H(z) = W(z)^(1/2) exp(S(z)) W(z)^(1/2),   W = diag (1 + |z|^2)^-(d_i + n)

for a bounded Hermitian "distortion" field S.

Curvature is the coefficient F of dz ^ dzbar in -dbar(H^-1 dH), signed so
that the Fubini-Study metric on O(k) has F = k / (1 + |z|^2)^2.  The
contracted curvature F (1 + |z|^2)^2 is called ``mean_curvature`` below; it
is the endomorphism whose omega-integral of the trace is deg(E_n).
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Literal, Sequence

import numpy as np

from .errors import InvalidArgumentError, NumericDomainError, UnsupportedBundleError
from .sphere import QuadratureRule

__all__ = [
    "BundleSpec",
    "DistortionSpec",
    "Field",
    "MetricField",
    "ScaledField",
    "PathField",
    "CallableField",
    "EvaluationMap",
    "basis_dimension",
    "evaluation_map",
    "evaluation_matrices",
    "frame_scale",
    "metric_eval",
    "curvature",
    "mean_curvature",
    "degree_from_curvature",
    "DEFAULT_STEP",
]

DEFAULT_STEP = 1e-3


@dataclass(frozen=True)
class BundleSpec:
    degrees: tuple[int, ...]
    n: int = 0

    def __post_init__(self):
        object.__setattr__(self, "degrees", tuple(int(d) for d in self.degrees))
        if len(self.degrees) not in (1, 2):
            raise InvalidArgumentError(f"rank must be 1 or 2, got {len(self.degrees)}")
        if self.n < 0:
            raise InvalidArgumentError("twist n must be nonnegative")

    @property
    def rank(self) -> int:
        return len(self.degrees)

    @property
    def twisted_degrees(self) -> tuple[int, ...]:
        return tuple(d + self.n for d in self.degrees)

    @property
    def admissible(self) -> bool:
        return min(self.twisted_degrees) >= 0

    def check_admissible(self) -> None:
        if not self.admissible:
            raise UnsupportedBundleError(
                f"twisted degrees {self.twisted_degrees} include a negative summand; "
                "E_n is not generated by its sections"
            )

    @property
    def degree(self) -> int:
        return sum(self.twisted_degrees)

    @property
    def p(self) -> int:
        self.check_admissible()
        return sum(k + 1 for k in self.twisted_degrees)

    @property
    def chi(self) -> int:
        # genus 0
        return self.degree + self.rank

    @property
    def mu(self) -> float:
        return self.degree / self.rank

    @property
    def block_offsets(self) -> tuple[int, ...]:
        offsets = [0]
        for k in self.twisted_degrees:
            offsets.append(offsets[-1] + k + 1)
        return tuple(offsets)

    def twist(self, n: int) -> "BundleSpec":
        return BundleSpec(self.degrees, n)


def basis_dimension(spec: BundleSpec) -> int:
    """dim H^0(P^1, E_n) = sum (d_i + n + 1); equals chi when every summand is generated."""
    return spec.p


@dataclass(frozen=True)
class EvaluationMap:
    """Values of the monomial basis at z: the surjection W_n -> fiber of E_n."""

    matrix: np.ndarray
    z: complex

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)


def evaluation_matrices(spec: BundleSpec, zs) -> np.ndarray:
    """Batched evaluation maps, shape (N, r, p)."""
    spec.check_admissible()
    zs = np.atleast_1d(np.asarray(zs, dtype=complex))
    out = np.zeros((zs.size, spec.rank, spec.p), dtype=complex)
    offsets = spec.block_offsets
    for i, k in enumerate(spec.twisted_degrees):
        powers = zs[:, None] ** np.arange(k + 1)[None, :]
        out[:, i, offsets[i] : offsets[i + 1]] = powers
    return out


def evaluation_map(spec: BundleSpec, z: complex) -> EvaluationMap:
    return EvaluationMap(evaluation_matrices(spec, [z])[0], complex(z))


def frame_scale(spec: BundleSpec, zs) -> np.ndarray:
    """Per-summand factors (1 + |z|^2)^(-k_i/2); shape (N, r).

    Multiplying evaluation rows by these factors expresses sections in the
    Fubini-Study unitary frame, which keeps every r x r quantity O(1).
    """
    zs = np.atleast_1d(np.asarray(zs, dtype=complex))
    k = np.asarray(spec.twisted_degrees, dtype=float)
    return (1.0 + np.abs(zs)[:, None] ** 2) ** (-0.5 * k[None, :])


# --------------------------------------------------------------------------
# distortions


@dataclass(frozen=True)
class DistortionSpec:
    """Hermitian distortion field S(z) applied as exp(S) between FS weights.

    Use the constructors :meth:`identity`, :meth:`diagonal_exp` and
    :meth:`log_polynomial` rather than the raw dataclass.
    """

    variant: Literal["identity", "diagonal_exp", "log_polynomial"] = "identity"
    u: float = 0.0
    coefficients: np.ndarray | None = dc_field(default=None, compare=False)

    @classmethod
    def identity(cls) -> "DistortionSpec":
        return cls("identity")

    @classmethod
    def diagonal_exp(cls, u: float) -> "DistortionSpec":
        return cls("diagonal_exp", u=float(u))

    @classmethod
    def log_polynomial(cls, coefficients) -> "DistortionSpec":
        """Coefficient tensor of shape (D+1, D+1, r, r) with S[l, k] = S[k, l]^H."""
        c = np.asarray(coefficients, dtype=complex)
        if c.ndim != 4 or c.shape[0] != c.shape[1] or c.shape[2] != c.shape[3]:
            raise InvalidArgumentError("coefficients must have shape (D+1, D+1, r, r)")
        if not np.allclose(c, np.conj(np.transpose(c, (1, 0, 3, 2))), atol=1e-14):
            raise InvalidArgumentError("coefficients violate S[l,k] = S[k,l]^H")
        return cls("log_polynomial", coefficients=c)

    @classmethod
    def random_log_polynomial(
        cls, rank: int, degree: int, amplitude: float, seed: int
    ) -> "DistortionSpec":
        """Seeded Hermitian coefficient tensor with entries of size ~amplitude."""
        rng = np.random.default_rng(seed)
        shape = (degree + 1, degree + 1, rank, rank)
        raw = rng.normal(size=shape) + 1j * rng.normal(size=shape)
        herm = 0.5 * (raw + np.conj(np.transpose(raw, (1, 0, 3, 2))))
        return cls.log_polynomial(amplitude * herm)

    @property
    def degree(self) -> int:
        return 0 if self.coefficients is None else self.coefficients.shape[0] - 1

    def evaluate(self, spec: BundleSpec, zs) -> np.ndarray:
        """S(z) at chart points; shape (N, r, r)."""
        zs = np.atleast_1d(np.asarray(zs, dtype=complex))
        r = spec.rank
        out = np.zeros((zs.size, r, r), dtype=complex)
        if self.variant == "identity":
            return out
        if self.variant == "diagonal_exp":
            signs = np.array([1.0, -1.0])[:r]
            out[:, np.arange(r), np.arange(r)] = self.u * signs
            return out
        c = self.coefficients
        if c.shape[2] != r:
            raise InvalidArgumentError(f"distortion rank {c.shape[2]} != bundle rank {r}")
        q = 1.0 + np.abs(zs) ** 2
        D = c.shape[0] - 1
        zp = zs[:, None] ** np.arange(D + 1)[None, :]
        for k in range(D + 1):
            for l in range(D + 1):
                mono = zp[:, k] * np.conj(zp[:, l]) / q ** max(k, l)
                out += mono[:, None, None] * c[k, l][None, :, :]
        if r == 2:
            # Off-diagonal entries pick up frame phases z^(d_1 - d_2) at infinity;
            # extra decay keeps the metric C^3 there when the degrees differ.
            gap = abs(spec.degrees[0] - spec.degrees[1])
            if gap:
                damp = q ** -(gap + 2)
                out[:, 0, 1] *= damp
                out[:, 1, 0] *= damp
        return out


# --------------------------------------------------------------------------
# metric fields


class Field:
    """A Hermitian metric on E_n given by its matrix in the monomial frame.

    Subclasses implement ``_matrices(zs) -> (N, r, r)``.  Calling a field on a
    scalar returns one matrix, on an array a stack.
    """

    spec: BundleSpec

    def _matrices(self, zs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, z):
        scalar = np.ndim(z) == 0
        zs = np.atleast_1d(np.asarray(z, dtype=complex))
        H = self._matrices(zs)
        if not np.all(np.isfinite(H)):
            raise NumericDomainError("metric evaluation produced non-finite values")
        return H[0] if scalar else H

    def logdet(self, zs) -> np.ndarray:
        sign, ld = np.linalg.slogdet(self(np.atleast_1d(zs)))
        return ld

    def __mul__(self, c: float) -> "ScaledField":
        return ScaledField(self, float(c))

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class MetricField(Field):
    spec: BundleSpec
    distortion: DistortionSpec = dc_field(default_factory=DistortionSpec.identity)

    def _matrices(self, zs):
        spec = self.spec
        halfw = frame_scale(spec, zs)  # W^(1/2)
        var = self.distortion.variant
        if var == "identity" or var == "diagonal_exp":
            S = self.distortion.evaluate(spec, zs)
            diag = np.exp(np.real(np.diagonal(S, axis1=1, axis2=2))) * halfw**2
            out = np.zeros((zs.size, spec.rank, spec.rank), dtype=complex)
            idx = np.arange(spec.rank)
            out[:, idx, idx] = diag
            return out
        S = self.distortion.evaluate(spec, zs)
        lam, vec = np.linalg.eigh(S)
        G = np.einsum("nij,nj,nkj->nik", vec, np.exp(lam), np.conj(vec))
        return halfw[:, :, None] * G * halfw[:, None, :]

    def logdet(self, zs):
        zs = np.atleast_1d(np.asarray(zs, dtype=complex))
        trace_s = np.real(np.trace(self.distortion.evaluate(self.spec, zs), axis1=1, axis2=2))
        k = sum(self.spec.twisted_degrees)
        return trace_s - k * np.log1p(np.abs(zs) ** 2)


@dataclass(frozen=True, eq=False)
class ScaledField(Field):
    base: Field
    factor: float

    def __post_init__(self):
        if not self.factor > 0:
            raise InvalidArgumentError("metric scale factor must be positive")

    @property
    def spec(self):
        return self.base.spec

    def _matrices(self, zs):
        return self.factor * self.base._matrices(zs)

    def logdet(self, zs):
        return self.base.logdet(zs) + self.spec.rank * np.log(self.factor)


@dataclass(frozen=True, eq=False)
class PathField(Field):
    """The point (1 - u) h0 + u h1 of the straight path between two metrics."""

    start: Field
    end: Field
    u: float

    @property
    def spec(self):
        return self.start.spec

    def _matrices(self, zs):
        return (1.0 - self.u) * self.start._matrices(zs) + self.u * self.end._matrices(zs)


@dataclass(frozen=True, eq=False)
class CallableField(Field):
    """Wrap an arbitrary vectorized ``zs -> (N, r, r)`` function as a field."""

    spec: BundleSpec
    func: Callable[[np.ndarray], np.ndarray]

    def _matrices(self, zs):
        return np.asarray(self.func(zs), dtype=complex)


def metric_eval(field: Field, z):
    """H(z) for a metric field (alias of calling the field)."""
    return field(z)


# --------------------------------------------------------------------------
# curvature by finite differences

# stencil offsets: centre, +-1, +-2 along x, then along y
_OFFSETS = np.array([0, 1, -1, 2, -2, 1j, -1j, 2j, -2j])


@dataclass(frozen=True)
class Stencil:
    """Samples of a field on the 9-point curvature stencil around each point.

    Values are stored in whichever chart (z or w = 1/z) contains the point
    in its unit disc, with the O(n) Fubini-Study factor removed, so a linear
    combination of stencils is the stencil of the combined field.
    """

    spec: BundleSpec
    zs: np.ndarray
    use_w: np.ndarray
    spacing: np.ndarray
    values: np.ndarray  # (9, N, r, r)

    def combine(self, other: "Stencil", a: float, b: float) -> "Stencil":
        return Stencil(self.spec, self.zs, self.use_w, self.spacing, a * self.values + b * other.values)

    @property
    def _frame_powers(self):
        # D = diag(z^k_i): frame change from the w-chart to the z-chart
        k = np.asarray(self.spec.twisted_degrees)
        return self.zs[:, None] ** k[None, :]


def _chart_coordinate(zs, use_w):
    zeta = zs.copy()
    zeta[use_w] = 1.0 / zs[use_w]
    return zeta


def stencil(field: Field, zs, step: float = DEFAULT_STEP) -> Stencil:
    spec = field.spec
    zs = np.atleast_1d(np.asarray(zs, dtype=complex))
    use_w = np.abs(zs) > 1.0
    zeta = _chart_coordinate(zs, use_w)
    spacing = step * (1.0 + np.abs(zeta) ** 2)
    pts = zeta[None, :] + spacing[None, :] * _OFFSETS[:, None]  # (9, N)
    chart_z = pts.copy()
    chart_z[:, use_w] = 1.0 / pts[:, use_w]
    H = field(chart_z.ravel()).reshape(9, zs.size, spec.rank, spec.rank)
    k = np.asarray(spec.twisted_degrees)
    D = chart_z[:, :, None] ** k[None, None, :]
    H_w = np.conj(D)[:, :, :, None] * H * D[:, :, None, :]
    H = np.where(use_w[None, :, None, None], H_w, H)
    H = H * ((1.0 + np.abs(pts) ** 2) ** spec.n)[:, :, None, None]
    return Stencil(spec, zs, use_w, spacing, H)


def mean_curvature_from_stencil(st: Stencil) -> np.ndarray:
    """Contracted curvature F (1+|z|^2)^2 in the z-frame, shape (N, r, r)."""
    V = st.values
    s = st.spacing[:, None, None]
    H0 = V[0]
    Hx = (V[4] - 8 * V[2] + 8 * V[1] - V[3]) / (12 * s)
    Hy = (V[8] - 8 * V[6] + 8 * V[5] - V[7]) / (12 * s)
    lap = (-V[3] + 16 * V[1] - 30 * H0 + 16 * V[2] - V[4]) / (12 * s**2) + (
        -V[7] + 16 * V[5] - 30 * H0 + 16 * V[6] - V[8]
    ) / (12 * s**2)
    dz = 0.5 * (Hx - 1j * Hy)
    dzbar = 0.5 * (Hx + 1j * Hy)
    Hinv = np.linalg.inv(H0)
    F_hat = Hinv @ dzbar @ Hinv @ dz - 0.25 * Hinv @ lap
    r = st.spec.rank
    # F_chart (1 + |zeta|^2)^2 = n Id + F_hat (1 + |zeta|^2)^2, identical in both charts
    zeta = _chart_coordinate(st.zs, st.use_w)
    lam = st.spec.n * np.eye(r) + F_hat * ((1.0 + np.abs(zeta) ** 2) ** 2)[:, None, None]
    w = st.use_w
    D = st._frame_powers[w]
    lam[w] = D[:, :, None] * lam[w] / D[:, None, :]
    return lam


def mean_curvature(field: Field, zs, step: float = DEFAULT_STEP) -> np.ndarray:
    return mean_curvature_from_stencil(stencil(field, zs, step))


def curvature(field: Field, z, step: float = DEFAULT_STEP):
    """Chern curvature coefficient F(z) of dz ^ dzbar by 4th-order differences.

    Spacing is ``step * (1 + |zeta|^2)`` in whichever chart coordinate zeta
    (z or 1/z) lies in the unit disc.
    """
    scalar = np.ndim(z) == 0
    zs = np.atleast_1d(np.asarray(z, dtype=complex))
    lam = mean_curvature(field, zs, step)
    F = lam / ((1.0 + np.abs(zs) ** 2) ** 2)[:, None, None]
    return F[0] if scalar else F


def degree_from_curvature(field: Field, rule: QuadratureRule, step: float = DEFAULT_STEP) -> float:
    """(1/pi) * integral of tr F dA, i.e. the omega-average of tr(mean curvature)."""
    if not rule.is_continuous:
        raise InvalidArgumentError("degree_from_curvature needs a continuous quadrature rule")
    lam = mean_curvature(field, rule.nodes, step)
    return float(np.real(rule.weights @ np.trace(lam, axis1=1, axis2=2)))
