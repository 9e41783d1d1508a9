"""Riemann sphere with the normalized Fubini-Study volume form.

All integrals are taken against the area-one form

    omega = dA / (pi (1 + |z|^2)^2)

in the affine chart.  The substitution t = |z|^2 / (1 + |z|^2) turns omega
into dt * dtheta / (2 pi) on [0, 1) x [0, 2 pi), so a Gauss-Legendre rule
in t times a uniform rule in theta integrates the rational integrands
produced by monomial sections exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .errors import InvalidArgumentError

__all__ = [
    "QuadratureRule",
    "build_quadrature",
    "point_masses",
    "quasi_uniform_points",
    "integrate",
    "fs_weight",
    "chart_to_t",
]


@dataclass(frozen=True)
class QuadratureRule:
    """A probability measure on the sphere, stored as chart nodes and weights.

    ``kind`` is ``"continuous"`` for the Gauss-type discretization of omega and
    ``"point_mass"`` for uniform masses on a finite point set.  ``exactness``
    is only meaningful for continuous rules: monomials z^j zbar^k weighted by
    (1 + |z|^2)^-(j+k) are integrated exactly whenever max(j, k) <= exactness.
    """

    nodes: np.ndarray
    weights: np.ndarray
    kind: Literal["continuous", "point_mass"]
    exactness: int | None = None

    def __post_init__(self):
        if self.nodes.shape != self.weights.shape or self.nodes.ndim != 1:
            raise InvalidArgumentError("nodes and weights must be 1-d arrays of equal length")
        if np.any(self.weights <= 0):
            raise InvalidArgumentError("quadrature weights must be positive")
        if not np.all(np.isfinite(self.nodes)):
            raise InvalidArgumentError("quadrature nodes must be finite chart points")

    def __len__(self) -> int:
        return self.nodes.size

    @property
    def is_continuous(self) -> bool:
        return self.kind == "continuous"


def build_quadrature(radial_nodes: int, angular_nodes: int) -> QuadratureRule:
    """Product rule: Gauss-Legendre in t = |z|^2/(1+|z|^2), uniform in angle.

    Exact for max(j, k) <= min(radial_nodes - 1, (angular_nodes - 1) // 2).
    """
    if radial_nodes < 2 or angular_nodes < 2:
        raise InvalidArgumentError(
            f"need at least 2 radial and 2 angular nodes, got {radial_nodes}, {angular_nodes}"
        )
    x, wx = np.polynomial.legendre.leggauss(radial_nodes)
    t = 0.5 * (x + 1.0)
    wt = 0.5 * wx
    theta = 2.0 * np.pi * (np.arange(angular_nodes) + 0.5) / angular_nodes

    radius = np.sqrt(t / (1.0 - t))
    nodes = (radius[:, None] * np.exp(1j * theta)[None, :]).ravel()
    weights = np.repeat(wt / angular_nodes, angular_nodes)
    weights = weights / weights.sum()
    exactness = min(radial_nodes - 1, (angular_nodes - 1) // 2)
    return QuadratureRule(nodes, weights, "continuous", exactness)


def point_masses(points: Sequence[complex]) -> QuadratureRule:
    """Uniform point masses 1/N on distinct chart points."""
    pts = np.asarray(points, dtype=complex).ravel()
    if pts.size == 0:
        raise InvalidArgumentError("point_masses needs at least one point")
    if np.unique(pts).size != pts.size:
        raise InvalidArgumentError("point_masses requires pairwise distinct points")
    weights = np.full(pts.size, 1.0 / pts.size)
    return QuadratureRule(pts, weights, "point_mass")


def quasi_uniform_points(count: int) -> np.ndarray:
    """Fibonacci-lattice points on S^2, stereographically projected to the chart.

    The uniform measure on S^2 pushes forward to omega, so these points
    equidistribute with respect to the Fubini-Study volume.  The poles are
    never hit, so every point is finite.
    """
    if count < 1:
        raise InvalidArgumentError("count must be positive")
    k = np.arange(count)
    height = 1.0 - (2.0 * k + 1.0) / count
    golden = np.pi * (3.0 - np.sqrt(5.0))
    phi = golden * k
    rho = np.sqrt(1.0 - height**2)
    return rho * np.exp(1j * phi) / (1.0 - height)


def integrate(samples, rule: QuadratureRule) -> complex:
    """Weighted sum of node samples.  Trailing axes (e.g. matrices) are kept."""
    values = np.asarray(samples)
    if values.shape[:1] != (len(rule),):
        raise InvalidArgumentError(
            f"expected {len(rule)} samples, got leading dimension {values.shape[:1]}"
        )
    return np.tensordot(rule.weights, values, axes=(0, 0))


def fs_weight(k: int, z) -> np.ndarray | float:
    """Fubini-Study weight (1 + |z|^2)^-k of O(k) in the affine chart."""
    return (1.0 + np.abs(z) ** 2) ** (-k)


def chart_to_t(z) -> np.ndarray:
    """Radial coordinate t = |z|^2 / (1 + |z|^2) in [0, 1)."""
    a = np.abs(z) ** 2
    return a / (1.0 + a)
