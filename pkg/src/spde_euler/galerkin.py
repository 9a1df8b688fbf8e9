"""Finite-dimensional Gelfand scale built from spectral weights.

A :class:`GalerkinSpace` holds an H-orthonormal basis described only by its
weights ``lam_1 <= ... <= lam_d``.  Every norm in the chain
``V(3) c V(2) c V c H c V' c V(2)' c V(3)'`` is a weighted l2 norm of the
coefficient vector with weight ``lam ** s`` for ``s`` in ``{3, 2, 1, 0, -1, -2, -3}``.
"""

from __future__ import annotations

import dataclasses
from typing import Sequence

import numpy as np

VELOCITY = "velocity"
TEMPERATURE = "temperature"

# level name -> power of the spectral weight
LEVELS = {
    "H": 0,
    "V": 1,
    "V2": 2,
    "V3": 3,
    "Vdual": -1,
    "V2dual": -2,
    "V3dual": -3,
}


class ValidationError(ValueError):
    """Raised for malformed spaces, states or configuration."""


@dataclasses.dataclass(frozen=True, eq=False)
class GalerkinSpace:
    weights: np.ndarray
    component_tags: tuple[str, ...]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValidationError("weights must be a non-empty vector")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValidationError("weights must be finite and strictly positive")
        if np.any(np.diff(w) < 0):
            raise ValidationError("weights must be sorted ascending")
        if len(self.component_tags) != w.size:
            raise ValidationError("one component tag per mode is required")
        bad = set(self.component_tags) - {VELOCITY, TEMPERATURE}
        if bad:
            raise ValidationError(f"unknown component tags {sorted(bad)}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "component_tags", tuple(self.component_tags))

    @property
    def dim(self) -> int:
        return self.weights.size

    @property
    def lambda_min(self) -> float:
        return float(self.weights[0])

    def scale(self, level: str) -> np.ndarray:
        """Per-mode multipliers ``lam ** s`` for the squared norm at ``level``."""
        try:
            s = LEVELS[level]
        except KeyError:
            raise ValidationError(f"unknown norm level {level!r}") from None
        return self.weights**s

    def norm(self, u: np.ndarray, level: str = "H") -> np.ndarray:
        """Norm of coefficient vector(s) ``u`` (last axis = modes)."""
        return np.sqrt(self.norm_sq(u, level))

    def norm_sq(self, u: np.ndarray, level: str = "H") -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return np.einsum("...k,k,...k->...", u, self.scale(level), u)

    def mask(self, tag: str) -> np.ndarray:
        return np.array([t == tag for t in self.component_tags])

    def random_state(self, rng: np.random.Generator, decay: float = 0.0) -> np.ndarray:
        """Gaussian coefficients, optionally damped like ``lam ** -decay``."""
        return rng.standard_normal(self.dim) * self.weights ** (-decay)


def make_space(
    dim: int,
    weights: Sequence[float],
    component_tags: Sequence[str] | None = None,
) -> GalerkinSpace:
    if dim < 1:
        raise ValidationError("dim must be a positive integer")
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (dim,):
        raise ValidationError(f"expected {dim} weights, got shape {weights.shape}")
    if component_tags is None:
        component_tags = (VELOCITY,) * dim
    return GalerkinSpace(weights, tuple(component_tags))


@dataclasses.dataclass(frozen=True, eq=False)
class State:
    """Coefficient vector tied to the space it lives in."""

    coeffs: np.ndarray
    space: GalerkinSpace

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.shape != (self.space.dim,):
            raise ValidationError(
                f"state has {c.shape} coefficients, space has dim {self.space.dim}"
            )
        if not np.all(np.isfinite(c)):
            raise ValidationError("state coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def norm(self, level: str = "H") -> float:
        return float(self.space.norm(self.coeffs, level))


def norm(u: State, level: str = "H") -> float:
    return u.norm(level)


def check_same_space(*states: State) -> GalerkinSpace:
    space = states[0].space
    for s in states[1:]:
        if s.space is not space:
            raise ValidationError("states belong to different Galerkin spaces")
    return space
