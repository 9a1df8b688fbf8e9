"""The operator tuple (A, B, E, xi, sigma) and checks of its structural axioms."""

from __future__ import annotations

import dataclasses

import numpy as np

from .galerkin import GalerkinSpace, State, ValidationError, check_same_space
from .models import Model, exact_coercivity
from .noise import NoiseSpec, hs_norm


class InvalidModelError(RuntimeError):
    """Raised when a model fails the axiom verifier and is used anyway."""


@dataclasses.dataclass(frozen=True, eq=False)
class OperatorSet:
    model: Model
    noise: NoiseSpec

    def __post_init__(self):
        if self.noise.model is not self.model:
            raise ValidationError("noise specification was built for a different model")

    @property
    def space(self) -> GalerkinSpace:
        return self.model.space

    @property
    def c1(self) -> float:
        return self.model.c1

    @property
    def c2(self) -> float:
        return self.model.c2_declared

    @property
    def c3(self) -> float:
        return self.noise.c3

    @property
    def c4(self) -> float:
        return self.noise.c4

    def drift(self, t: float, u: np.ndarray) -> np.ndarray:
        """``N(t, U) = -(AU + B(U) + EU - xi(t, U))``."""
        m = self.model
        return -(m.apply_linear(u) + m.B(u) - self.noise.xi(t, u))

    def implicit_map(self, t: float, u: np.ndarray, dt: float) -> np.ndarray:
        """``U + dt (AU + B(U) + EU - xi(t, U))``."""
        return u - dt * self.drift(t, u)

    def implicit_jacobian(self, t: float, u: np.ndarray, dt: float) -> np.ndarray:
        m = self.model
        J = m.A + m.E + m.dB(u) - self.noise.dxi(t, u)
        return np.eye(u.shape[-1]) + dt * J

    def sigma(self, t: float, u: np.ndarray) -> np.ndarray:
        return self.noise.sigma(t, u)

    def xi(self, t: float, u: np.ndarray) -> np.ndarray:
        return self.noise.xi(t, u)


def apply_a(ops: OperatorSet, U: State, V: State) -> float:
    check_same_space(U, V)
    return float(V.coeffs @ ops.model.A @ U.coeffs)


def apply_b(ops: OperatorSet, U: State, V: State, W: State) -> float:
    check_same_space(U, V, W)
    return ops.model.b(U.coeffs, V.coeffs, W.coeffs)


def apply_e(ops: OperatorSet, U: State, V: State) -> float:
    check_same_space(U, V)
    return float(V.coeffs @ ops.model.E @ U.coeffs)


def apply_drift(ops: OperatorSet, t: float, U: State) -> State:
    return State(ops.drift(t, U.coeffs), U.space)


# ---------------------------------------------------------------------------
# axiom verification


@dataclasses.dataclass
class AxiomCheck:
    name: str
    passed: bool
    worst: float  # worst residual (or fitted constant for bound checks)
    detail: str = ""


@dataclasses.dataclass
class AxiomReport:
    checks: list[AxiomCheck]
    constants: dict[str, float]
    samples: int

    @property
    def valid(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> AxiomCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def lines(self) -> list[str]:
        out = [
            f"{'PASS' if c.passed else 'FAIL'}  {c.name:<14} worst={c.worst:.3e}  {c.detail}"
            for c in self.checks
        ]
        out += [f"      {k} = {v:.6g}" for k, v in self.constants.items()]
        return out

    def require_valid(self):
        if not self.valid:
            failed = ", ".join(c.name for c in self.checks if not c.passed)
            raise InvalidModelError(f"model violates axioms: {failed}")


def _sample_states(space: GalerkinSpace, rng: np.random.Generator, n: int) -> np.ndarray:
    """Random states spread over several decades of amplitude."""
    X = rng.standard_normal((n, space.dim)) * space.weights ** (-rng.uniform(0, 1, (n, 1)))
    return X * 10.0 ** rng.uniform(-2, 2, (n, 1))


def verify_axioms(ops: OperatorSet, samples: int = 1000, seed: int = 0, tol: float = 1e-12) -> AxiomReport:
    """Check coercivity, cancellations and the sublinear growth bounds.

    Random samples are supplemented with the exact minimiser of
    ``a(U,U)/||U||^2`` so that a non-coercive form cannot slip through.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    space, model = ops.space, ops.model
    rng = np.random.default_rng(seed)
    U = _sample_states(space, rng, samples)
    W = _sample_states(space, rng, samples)
    X = _sample_states(space, rng, samples)
    checks = []

    # coercivity
    c1_exact, worst_dir = exact_coercivity(model)
    Uc = np.vstack([U, worst_dir])
    aUU = np.einsum("si,ij,sj->s", Uc, model.A, Uc)
    vnorm2 = space.norm_sq(Uc, "V")
    resid = (aUU - ops.c1 * vnorm2) / vnorm2
    c1_est = float(np.min(aUU / vnorm2))
    checks.append(
        AxiomCheck(
            "coercivity",
            bool(np.min(resid) >= -tol),
            float(np.min(resid)),
            f"c1 declared={ops.c1:.6g} sampled={c1_est:.6g} exact={c1_exact:.6g}",
        )
    )

    # e(U,U) = 0
    eUU = np.einsum("si,ij,sj->s", U, model.E, U)
    e_scale = space.norm_sq(U) * max(np.abs(model.E).max(), 1.0)
    worst = float(np.max(np.abs(eUU) / e_scale))
    checks.append(AxiomCheck("e-cancel", worst <= tol, worst))

    # b(U,V,V) = 0 and the continuity bound
    if model.btensor is not None:
        Bu = np.einsum("si,ijk->sjk", U[:, model.advectors], model.btensor, optimize=True)
        bUWW = np.einsum("sjk,sj,sk->s", Bu, W, W, optimize=True)
        bUWX = np.einsum("sjk,sj,sk->s", Bu, W, X, optimize=True)
    else:
        bUWW = bUWX = np.zeros(samples)
    nat = space.norm(U, "V") * space.norm(W, "V") * space.norm(W)
    worst = float(np.max(np.abs(bUWW) / nat))
    checks.append(AxiomCheck("b-cancel", worst <= tol, worst))
    denom = (
        space.norm(U, "V")
        * np.sqrt(space.norm(W) * space.norm(W, "V"))
        * space.norm(X, "V2")
    )
    c2_fit = float(np.max(np.abs(bUWX) / denom))
    checks.append(
        AxiomCheck(
            "b-continuity",
            bool(np.isfinite(c2_fit) and c2_fit <= ops.c2 * (1 + 1e-9) + tol),
            c2_fit,
            f"c2 declared={ops.c2:.6g}",
        )
    )

    # sublinear growth of sigma and xi
    hnorm = space.norm(U)
    sig = np.array([hs_norm(ops.sigma(0.0, u), space) for u in U])
    c3_fit = float(np.max(sig / (1 + hnorm)))
    checks.append(
        AxiomCheck(
            "sigma-growth",
            bool(c3_fit <= ops.c3 * (1 + 1e-9) + tol),
            c3_fit,
            f"c3 declared={ops.c3:.6g}",
        )
    )
    xi = np.array([space.norm(ops.xi(0.0, u)) for u in U])
    c4_fit = float(np.max(xi / (1 + hnorm)))
    checks.append(
        AxiomCheck(
            "xi-growth",
            bool(c4_fit <= ops.c4 * (1 + 1e-9) + tol),
            c4_fit,
            f"c4 declared={ops.c4:.6g}",
        )
    )

    # drift bound ||N(U)||_{V2'}^{4/3} <= c (|U|^{2/3} + 1)(||U||^2 + 1)
    drift = np.array([space.norm(ops.drift(0.0, u), "V2dual") for u in U])
    c_drift = float(np.max(drift ** (4 / 3) / ((hnorm ** (2 / 3) + 1) * (space.norm_sq(U, "V") + 1))))

    constants = {
        "c1": ops.c1,
        "c1_exact": c1_exact,
        "c1_sampled": c1_est,
        "c2": ops.c2,
        "c2_fitted": c2_fit,
        "c3": ops.c3,
        "c3_fitted": c3_fit,
        "c4": ops.c4,
        "c4_fitted": c4_fit,
        "drift_bound_fitted": c_drift,
    }
    return AxiomReport(checks, constants, samples)
