"""Cylindrical Wiener increments, noise coefficients and their projections."""

from __future__ import annotations

import dataclasses
from typing import Callable, Literal, Sequence

import numpy as np

from .galerkin import GalerkinSpace
from .models import Model

Regime = Literal["additive", "nemytskii-ito", "nemytskii-stratonovich", "functional"]
REGIMES = ("additive", "nemytskii-ito", "nemytskii-stratonovich", "functional")


class ConfigurationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Wiener paths


@dataclasses.dataclass(frozen=True, eq=False)
class WienerPath:
    T: float
    increments: np.ndarray  # (master_steps, K)
    seed: int | tuple

    @property
    def master_steps(self) -> int:
        return self.increments.shape[0]

    @property
    def K(self) -> int:
        return self.increments.shape[1]

    @property
    def h(self) -> float:
        return self.T / self.master_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.master_steps + 1)

    def values(self) -> np.ndarray:
        """W at the master nodes, shape ``(master_steps + 1, K)``."""
        return np.vstack([np.zeros((1, self.K)), np.cumsum(self.increments, axis=0)])

    def coarse(self, N: int) -> np.ndarray:
        """Increments ``W(t^n) - W(t^{n-1})`` of the N-step grid, shape ``(N, K)``."""
        r = refinement(self.master_steps, N)
        return self.increments.reshape(N, r, self.K).sum(axis=1)


def refinement(master_steps: int, N: int) -> int:
    if N < 1 or master_steps % N:
        raise ConfigurationError(f"N={N} does not divide the master grid ({master_steps} steps)")
    return master_steps // N


def path_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent stream for ``(seed, *key)``; stable across runs and platforms."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def sample_wiener(
    T: float,
    master_steps: int,
    K: int,
    seed: int,
    key: Sequence[int] = (),
    divisors: Sequence[int] = (),
) -> WienerPath:
    if master_steps < 1 or K < 0:
        raise ConfigurationError("master_steps must be >= 1 and K >= 0")
    for N in divisors:
        refinement(master_steps, N)
    rng = path_rng(seed, *key)
    inc = rng.standard_normal((master_steps, K)) * np.sqrt(T / master_steps)
    inc.setflags(write=False)
    return WienerPath(T, inc, (seed, *key) if key else seed)


# ---------------------------------------------------------------------------
# Nemytskii transformations


@dataclasses.dataclass(frozen=True)
class Nonlinearity:
    """Scalar map applied pointwise, with its first two derivatives.

    ``at_zero`` = |psi(0)|, ``lipschitz`` bounds |psi'|; together they give
    ``|psi(s)| <= at_zero + lipschitz * |s|``.
    """

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    d1: Callable[[np.ndarray], np.ndarray] | None
    d2: Callable[[np.ndarray], np.ndarray] | None
    at_zero: float
    lipschitz: float


def make_psi(name: str, scale: float = 1.0) -> Nonlinearity:
    if name == "identity":
        return Nonlinearity(
            "identity", lambda s: s, np.ones_like, np.zeros_like, 0.0, 1.0
        )
    if name == "tanh-saturating":
        a = float(scale)

        def d1(s):
            return 1.0 / np.cosh(s / a) ** 2

        return Nonlinearity(
            "tanh-saturating",
            lambda s: a * np.tanh(s / a),
            d1,
            lambda s: -2.0 / a * d1(s) * np.tanh(s / a),
            0.0,
            1.0,
        )
    if name == "constant":
        c = float(scale)
        return Nonlinearity(
            "constant", lambda s: np.full_like(s, c), np.zeros_like, np.zeros_like, abs(c), 0.0
        )
    raise ConfigurationError(f"unknown Nemytskii map {name!r}")


# ---------------------------------------------------------------------------
# Noise coefficients


@dataclasses.dataclass(frozen=True, eq=False)
class NoiseSpec:
    """Noise coefficient sigma(t, U) with K directions.

    ``alphas[k]`` is the spatial profile of direction ``k`` (coefficients),
    ``functionals[k]`` the state ``psi^k`` defining ``phi^k(U) = (U, psi^k)``.
    ``strat_factor`` multiplies the Stratonovich-to-Ito drift; 0.5 is the
    usual correction, 1.0 reproduces the conversion formula without the half.
    """

    model: Model
    regime: Regime
    alphas: np.ndarray
    psi: Nonlinearity | None = None
    functionals: np.ndarray | None = None
    strat_factor: float = 0.5

    def __post_init__(self):
        d = self.model.space.dim
        a = np.atleast_2d(np.asarray(self.alphas, dtype=float))
        if a.size == 0:
            a = np.zeros((0, d))
        if a.shape[1] != d:
            raise ConfigurationError(f"alpha profiles must have {d} coefficients")
        object.__setattr__(self, "alphas", a)
        if self.regime not in REGIMES:
            raise ConfigurationError(f"unknown noise regime {self.regime!r}")
        if self.regime.startswith("nemytskii") and self.psi is None:
            raise ConfigurationError("Nemytskii noise needs a transformation psi")
        if self.regime == "nemytskii-stratonovich" and (
            self.psi.d1 is None or self.psi.d2 is None
        ):
            raise ConfigurationError("Stratonovich noise needs psi with declared derivatives")
        if self.regime == "functional":
            f = np.atleast_2d(np.asarray(self.functionals, dtype=float))
            if f.shape != a.shape:
                raise ConfigurationError("one functional state per noise direction is required")
            object.__setattr__(self, "functionals", f)
        # grid values of the profiles, reused by every evaluation
        object.__setattr__(self, "_alpha_grid", a @ self.model.synthesis.T)

    @property
    def K(self) -> int:
        return self.alphas.shape[0]

    @property
    def space(self) -> GalerkinSpace:
        return self.model.space

    # -- sigma ---------------------------------------------------------------

    def sigma(self, t: float, u: np.ndarray) -> np.ndarray:
        """Matrix with column k equal to ``sigma^k(t, U)``; shape ``(..., dim, K)``."""
        if self.regime == "additive":
            return np.broadcast_to(self.alphas.T, u.shape[:-1] + self.alphas.T.shape).copy()
        if self.regime == "functional":
            return self.alphas.T * (u @ self.functionals.T)[..., None, :]
        m = self.model
        field = self.psi.fn(m.to_grid(u))
        weighted = field[..., None, :] * (m.quad_weights * self._alpha_grid)
        return np.swapaxes(weighted @ m.synthesis, -1, -2)

    def sigma_apply(self, t: float, u: np.ndarray, k: int) -> np.ndarray:
        if not 0 <= k < self.K:
            raise IndexError(f"noise direction {k} out of range (K={self.K})")
        return self.sigma(t, u)[:, k]

    # -- Ito correction ------------------------------------------------------

    @property
    def has_xi(self) -> bool:
        return self.regime == "nemytskii-stratonovich"

    def xi(self, t: float, u: np.ndarray) -> np.ndarray:
        if not self.has_xi:
            return np.zeros_like(u, dtype=float)
        m = self.model
        s = m.to_grid(u)
        return self.strat_factor * m.project(
            self.psi.fn(s) * self.psi.d1(s) * self._alpha_sq_sum
        )

    def dxi(self, t: float, u: np.ndarray) -> np.ndarray:
        d = u.shape[-1]
        if not self.has_xi:
            return np.zeros(u.shape[:-1] + (d, d))
        m = self.model
        s = m.to_grid(u)
        p = self.psi
        diag = (p.d1(s) ** 2 + p.fn(s) * p.d2(s)) * self._alpha_sq_sum
        S = m.synthesis
        return self.strat_factor * (S.T * (m.quad_weights * diag)[..., None, :]) @ S

    @property
    def _alpha_sq_sum(self) -> np.ndarray:
        return np.sum(self._alpha_grid**2, axis=0)

    # -- declared constants ----------------------------------------------------

    def _psi_growth(self) -> float:
        # |psi(U)|_grid <= at_zero * sqrt(sum of weights) + lipschitz * |U|
        w = np.sum(self.model.quad_weights)
        return max(self.psi.at_zero * np.sqrt(w), self.psi.lipschitz)

    @property
    def c3(self) -> float:
        """Declared constant in ``|sigma(t,U)|_HS <= c3 (1 + |U|)``."""
        if self.K == 0:
            return 0.0
        if self.regime == "additive":
            return float(np.sqrt(np.sum(self.alphas**2)))
        if self.regime == "functional":
            return float(
                np.sqrt(np.sum(np.sum(self.alphas**2, 1) * np.sum(self.functionals**2, 1)))
            )
        sup = np.max(np.abs(self._alpha_grid), axis=1)
        return float(np.sqrt(np.sum(sup**2)) * self._psi_growth())

    @property
    def c4(self) -> float:
        """Declared constant in ``|xi(t,U)| <= c4 (1 + |U|)``."""
        if not self.has_xi or self.K == 0:
            return 0.0
        # the catalog maps all have |psi'| <= lipschitz
        return float(
            abs(self.strat_factor)
            * self.psi.lipschitz
            * np.max(self._alpha_sq_sum)
            * self._psi_growth()
        )

    def alpha_v2_sum(self) -> float:
        """``sum_k ||alpha^k||_{V(2)}^2``; finite for every retained direction."""
        return float(np.sum(self.space.norm_sq(self.alphas, "V2")))


def hs_norm(sig: np.ndarray, space: GalerkinSpace, level: str = "H") -> float:
    """Hilbert-Schmidt norm of a ``(dim, K)`` coefficient matrix."""
    return float(np.sqrt(np.sum(space.scale(level)[:, None] * sig**2)))


# ---------------------------------------------------------------------------
# Spectral projection sigma_N


def retained_modes(space: GalerkinSpace, N: int) -> int:
    """``max{m : lam_m <= N}`` (0 when even the first weight exceeds N)."""
    return int(np.searchsorted(space.weights, N, side="right"))


@dataclasses.dataclass(frozen=True, eq=False)
class SigmaN:
    base: NoiseSpec
    N: int
    m: int

    def sigma(self, t: float, u: np.ndarray) -> np.ndarray:
        s = self.base.sigma(t, u)
        s[..., self.m :, :] = 0.0
        return s

    def certify(self, states: np.ndarray, t: float = 0.0) -> dict:
        """Margins of the V-norm and H-norm conditions over ``states``."""
        space = self.base.space
        worst_v, worst_h = np.inf, np.inf
        for u in np.atleast_2d(states):
            full = self.base.sigma(t, u)
            proj = self.sigma(t, u)
            h_full = hs_norm(full, space) ** 2
            worst_v = min(worst_v, self.N * h_full - hs_norm(proj, space, "V") ** 2)
            worst_h = min(worst_h, h_full - hs_norm(proj, space) ** 2)
        return {"v_margin": worst_v, "h_margin": worst_h, "ok": worst_v >= 0 and worst_h >= 0}


def project_sigma(spec: NoiseSpec, N: int, space: GalerkinSpace | None = None) -> SigmaN:
    if N < 1:
        raise ConfigurationError("N must be >= 1")
    space = spec.space if space is None else space
    return SigmaN(spec, N, retained_modes(space, N))


def sigma_convergence_probe(
    spec: NoiseSpec,
    u: np.ndarray,
    scale: float,
    Ns: Sequence[int],
    direction: np.ndarray | None = None,
    t: float = 0.0,
) -> list[tuple[int, int, float]]:
    """``|sigma_N(U_N) - sigma(U)|_HS`` for ``U_N = U + scale/N * direction``.

    Returns rows ``(N, m_N, distance)``.
    """
    if list(Ns) != sorted(Ns):
        raise ConfigurationError("N-list must be ascending")
    space = spec.space
    if direction is None:
        direction = np.ones(space.dim) / np.sqrt(space.dim)
    target = spec.sigma(t, u)
    rows = []
    for N in Ns:
        sN = project_sigma(spec, N)
        diff = sN.sigma(t, u + scale / N * direction) - target
        rows.append((N, sN.m, hs_norm(diff, space)))
    return rows
