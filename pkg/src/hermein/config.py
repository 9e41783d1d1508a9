"""Experiment configuration: a TOML file of dotted keys.

    experiment = "unstable_example"
    bundle.degrees = [1, -1]
    bundle.n = 6                 # or bundle.n_list = [4, 8, 16]
    quadrature.radial = 32       # or quadrature.point_mass = 200 (+ seed)
    quadrature.angular = 32
    distortion.variant = "log_polynomial"
    distortion.degree = 1
    distortion.amplitude = 0.3
    distortion.seed = 7
    optimizer.max_iter = 200
    optimizer.tol = 1e-8
    optimizer.step0 = 1.0
    output.format = "csv"
    output.path = "report.csv"

Every section except ``experiment`` is optional; experiments fill in
their own defaults.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import numpy as np

from .bundles import BundleSpec, DistortionSpec
from .sphere import QuadratureRule, build_quadrature, point_masses, quasi_uniform_points

__all__ = ["ExperimentConfig", "ConfigError", "ConfigInvariantError", "load_config", "parse_config"]

EXPERIMENTS = (
    "gram_oracle",
    "riemann_roch",
    "bergman",
    "iln_expansion",
    "unstable_example",
    "normalization",
    "balanced_run",
    "kn_minimize",
    "functional_gap",
    "torsion_decay",
    "convergence_study",
)


class ConfigError(Exception):
    """Unreadable or syntactically invalid configuration."""


class ConfigInvariantError(Exception):
    """A well-formed configuration violating a named invariant."""

    def __init__(self, invariant: str, message: str):
        super().__init__(f"{invariant}: {message}")
        self.invariant = invariant


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    degrees: tuple[int, ...] | None = None
    n_list: tuple[int, ...] | None = None
    quadrature: dict[str, Any] = field(default_factory=dict)
    distortion: dict[str, Any] = field(default_factory=dict)
    optimizer: dict[str, Any] = field(default_factory=dict)
    output_format: str = "csv"
    output_path: str | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    # --- helpers used by experiments -------------------------------------

    def degrees_or(self, default) -> tuple[int, ...]:
        return tuple(self.degrees) if self.degrees is not None else tuple(default)

    def ns_or(self, default) -> list[int]:
        return list(self.n_list) if self.n_list is not None else list(default)

    def rule(self, top_degree: int) -> QuadratureRule:
        """The configured rule, or a default with exactness above ``top_degree``."""
        q = self.quadrature
        if "point_mass" in q:
            count = int(q["point_mass"])
            if "seed" in q:
                rng = np.random.default_rng(int(q["seed"]))
                xyz = rng.normal(size=(count, 3))
                xyz /= np.linalg.norm(xyz, axis=1)[:, None]
                pts = (xyz[:, 0] + 1j * xyz[:, 1]) / (1.0 - xyz[:, 2])
            else:
                pts = quasi_uniform_points(count)
            return point_masses(pts)
        if "radial" in q or "angular" in q:
            return build_quadrature(int(q.get("radial", 32)), int(q.get("angular", 32)))
        return build_quadrature(top_degree + 24, 2 * top_degree + 48)

    def distortion_spec(self, rank: int, default: dict[str, Any] | None = None) -> DistortionSpec:
        d = dict(default or {})
        d.update(self.distortion)
        variant = d.get("variant", "identity")
        if variant == "identity":
            return DistortionSpec.identity()
        if variant == "diagonal_exp":
            return DistortionSpec.diagonal_exp(float(d.get("u", 0.0)))
        return DistortionSpec.random_log_polynomial(
            rank, int(d.get("degree", 1)), float(d.get("amplitude", 0.3)), int(d["seed"])
        )

    def opt(self, key: str, default):
        return type(default)(self.optimizer.get(key, default))


_KNOWN_SECTIONS = {"experiment", "bundle", "quadrature", "distortion", "optimizer", "output", "params"}


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"parse error: {exc}") from exc
    unknown = set(raw) - _KNOWN_SECTIONS
    if unknown:
        raise ConfigInvariantError("known_keys", f"unknown top-level keys {sorted(unknown)}")
    name = raw.get("experiment")
    if name not in EXPERIMENTS:
        raise ConfigInvariantError("experiment_name", f"unknown experiment {name!r}; see `hermein list`")

    bundle = raw.get("bundle", {})
    degrees = bundle.get("degrees")
    if degrees is not None:
        if not isinstance(degrees, list) or not all(isinstance(d, int) for d in degrees) or len(degrees) not in (1, 2):
            raise ConfigInvariantError("bundle_degrees", "bundle.degrees must be a list of 1 or 2 integers")
        degrees = tuple(degrees)
    if "n" in bundle and "n_list" in bundle:
        raise ConfigInvariantError("bundle_twist", "give bundle.n or bundle.n_list, not both")
    n_list = bundle.get("n_list", [bundle["n"]] if "n" in bundle else None)
    if n_list is not None:
        if not n_list or not all(isinstance(n, int) and n >= 0 for n in n_list):
            raise ConfigInvariantError("bundle_twist", "twists must be a non-empty list of nonnegative integers")
        n_list = tuple(n_list)
    if degrees is not None and n_list is not None:
        for n in n_list:
            if not BundleSpec(degrees, n).admissible:
                raise ConfigInvariantError(
                    "admissible", f"degrees {list(degrees)} twisted by {n} include a negative summand"
                )

    dist = dict(raw.get("distortion", {}))
    if dist.get("variant") == "log_polynomial" and "seed" not in dist:
        raise ConfigInvariantError("seed_required", "distortion.variant = 'log_polynomial' needs distortion.seed")
    if dist.get("variant", "identity") not in ("identity", "diagonal_exp", "log_polynomial"):
        raise ConfigInvariantError("distortion_variant", f"unknown distortion variant {dist['variant']!r}")

    quad = dict(raw.get("quadrature", {}))
    if "point_mass" in quad and ("radial" in quad or "angular" in quad):
        raise ConfigInvariantError("quadrature_kind", "choose point_mass or radial/angular, not both")

    out = raw.get("output", {})
    fmt = out.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigInvariantError("output_format", f"output.format must be csv or json, got {fmt!r}")

    return ExperimentConfig(
        experiment=name,
        degrees=degrees,
        n_list=n_list,
        quadrature=quad,
        distortion=dist,
        optimizer=dict(raw.get("optimizer", {})),
        output_format=fmt,
        output_path=out.get("path"),
        extra=dict(raw.get("params", {})),
    )


def load_config(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror or exc}") from exc
    return parse_config(text)
