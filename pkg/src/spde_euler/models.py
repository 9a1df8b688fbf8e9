"""Concrete linear/bilinear operators A, B, E on a Galerkin space.

Two models are provided:

``diagonal-linear``
    ``a(U, V) = nu * sum(lam_k u_k v_k)``, no convection, no rotation.  Every
    quantity the scheme produces has a closed form, which makes this the
    oracle model.

``rot-boussinesq-2d``
    A periodic (x, z) slice of the rotating Boussinesq system on
    ``[0, 2pi)^2``.  The state carries an in-plane divergence-free velocity
    (streamfunction modes), an out-of-plane velocity ``v`` and a temperature
    ``T``; all three are mean-free trigonometric polynomials with
    ``|k| <= radius``.  Temperature enters the H inner product with weight
    ``K_T``, so the stored temperature coefficient is ``sqrt(K_T) * T_k``.
    The forms are

    * ``a = nu (grad v, grad v~) + K_T kappa (grad T, grad T~) - c_buoy (T, w~)``
    * ``b = ((u, w) . grad) (u~, w~, v~, T~) . (u#, w#, v#, K_T T#)``
    * ``e = f (u v~ - v u~)``

    with ``w`` the vertical velocity.  All pairings are evaluated by grid
    quadrature that is exact for products of three retained modes, so the
    cancellation ``b(U, V, V) = 0`` holds to round-off.
"""

from __future__ import annotations

import dataclasses
import functools
from typing import Literal

import numpy as np

from .galerkin import TEMPERATURE, VELOCITY, GalerkinSpace, ValidationError, make_space

ModelKind = Literal["diagonal-linear", "rot-boussinesq-2d"]

# field components sampled on the physical grid of the Boussinesq slice
COMPONENTS = ("u", "w", "v", "theta")


@dataclasses.dataclass(frozen=True)
class ModelSpec:
    kind: ModelKind = "diagonal-linear"
    nu: float = 1.0
    kappa: float = 1.0
    f: float = 0.0
    c_buoy: float = 0.0
    K_T: float = 1.0
    radius: int = 2
    # diagonal-linear only
    weights: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        if self.kind not in ("diagonal-linear", "rot-boussinesq-2d"):
            raise ValidationError(f"unknown model kind {self.kind!r}")
        if self.kappa <= 0 or self.K_T <= 0:
            raise ValidationError("kappa and K_T must be positive")
        if self.nu < 0 or (self.nu == 0 and self.kind != "diagonal-linear"):
            raise ValidationError("nu must be positive (zero only for the diagonal oracle)")
        if self.kind == "rot-boussinesq-2d" and self.radius < 1:
            raise ValidationError("Fourier truncation radius must be >= 1")


class Model:
    """Assembled operators in coefficient space.

    ``A`` and ``E`` are matrices acting on coefficient vectors so that
    ``a(U, V) = V @ A @ U``.  ``btensor[i, j, k] = b(phi_i, phi_j, phi_k)``
    restricted to the advecting modes listed in ``advectors``.  The
    ``synthesis``/``quad_weights`` pair defines the pointwise multiplication
    rule used by Nemytskii noise: ``project(f) = synthesis.T @ (quad_weights * f)``.
    """

    spec: ModelSpec
    space: GalerkinSpace
    A: np.ndarray
    E: np.ndarray
    btensor: np.ndarray | None
    advectors: np.ndarray
    synthesis: np.ndarray
    quad_weights: np.ndarray
    c1: float

    # every map below accepts a single coefficient vector or a stack of them
    # (leading axes), which lets ensembles advance in lockstep

    def B(self, u: np.ndarray) -> np.ndarray:
        if self.btensor is None:
            return np.zeros_like(u)
        T = np.tensordot(u[..., self.advectors], self.btensor, axes=(-1, 0))
        return np.einsum("...jk,...j->...k", T, u)

    def dB(self, u: np.ndarray) -> np.ndarray:
        """Jacobian of ``u -> B(u)``; ``J[..., k, m] = d B(u)_k / d u_m``."""
        d = u.shape[-1]
        if self.btensor is None:
            return np.zeros(u.shape[:-1] + (d, d))
        # derivative through the advected slot
        J = np.swapaxes(np.tensordot(u[..., self.advectors], self.btensor, axes=(-1, 0)), -1, -2).copy()
        # derivative through the advecting slot
        J[..., self.advectors] += np.swapaxes(np.tensordot(u, self.btensor, axes=(-1, 1)), -1, -2)
        return J

    def b(self, u: np.ndarray, v: np.ndarray, w: np.ndarray) -> float:
        if self.btensor is None:
            return 0.0
        return float(np.einsum("i,j,k,ijk->", u[self.advectors], v, w, self.btensor, optimize=True))

    def apply_linear(self, u: np.ndarray) -> np.ndarray:
        """``A u + E u``."""
        return u @ (self.A + self.E).T

    def project(self, field: np.ndarray) -> np.ndarray:
        """L2 projection of grid values onto the retained modes."""
        return (self.quad_weights * field) @ self.synthesis

    def to_grid(self, u: np.ndarray) -> np.ndarray:
        return u @ self.synthesis.T

    @functools.cached_property
    def c2_declared(self) -> float:
        """Rigorous bound for |b(U,V,W)| <= c2 ||U|| |V|^1/2 ||V||^1/2 ||W||_V2."""
        if self.btensor is None:
            return 0.0
        lam = self.space.weights
        w = (
            lam[self.advectors][:, None, None] ** -0.5
            * lam[None, :, None] ** -0.25
            * lam[None, None, :] ** -1.0
        )
        return float(np.sum(np.abs(self.btensor) * w))


class DiagonalLinearModel(Model):
    def __init__(self, spec: ModelSpec):
        w = np.asarray(spec.weights, dtype=float)
        self.spec = spec
        self.space = make_space(w.size, w)
        d = self.space.dim
        self.A = spec.nu * np.diag(self.space.weights)
        self.E = np.zeros((d, d))
        self.btensor = None
        self.advectors = np.zeros(0, dtype=int)
        self.synthesis = np.eye(d)
        self.quad_weights = np.ones(d)
        self.c1 = spec.nu


@dataclasses.dataclass(frozen=True)
class FourierMode:
    kind: str  # "psi", "v" or "theta"
    kx: int
    kz: int
    phase: float  # 0 -> cos, pi/2 -> sin

    @property
    def k2(self) -> int:
        return self.kx * self.kx + self.kz * self.kz


_KIND_ORDER = {"psi": 0, "v": 1, "theta": 2}


def fourier_modes(radius: int) -> list[FourierMode]:
    """Real Fourier modes with ``0 < |k| <= radius``, ordered by ``|k|^2``."""
    waves = [
        (kx, kz)
        for kx in range(0, radius + 1)
        for kz in range(-radius, radius + 1)
        if 0 < kx * kx + kz * kz <= radius * radius and (kx > 0 or kz > 0)
    ]
    modes = [
        FourierMode(kind, kx, kz, phase)
        for kind in _KIND_ORDER
        for kx, kz in waves
        for phase in (0.0, np.pi / 2)
    ]
    modes.sort(key=lambda m: (m.k2, _KIND_ORDER[m.kind], m.kx, m.kz, m.phase))
    return modes


def grid_size(radius: int) -> int:
    # triple products of degree-radius polynomials are integrated exactly
    return max(4 * radius, 4)


def basis_fields(modes: list[FourierMode], M: int) -> tuple[np.ndarray, np.ndarray]:
    """Grid values and gradients of every basis function.

    Returns ``g`` with shape ``(D, 4, M*M)`` and ``dg`` with shape
    ``(D, 4, 2, M*M)`` (derivative index 0 = x, 1 = z).
    """
    x = 2 * np.pi * np.arange(M) / M
    X, Z = np.meshgrid(x, x, indexing="ij")
    X, Z = X.ravel(), Z.ravel()
    c = 1.0 / (np.pi * np.sqrt(2.0))  # unit L2 norm on [0, 2pi)^2
    D, G = len(modes), M * M
    g = np.zeros((D, 4, G))
    dg = np.zeros((D, 4, 2, G))
    for n, m in enumerate(modes):
        k = np.array([m.kx, m.kz], dtype=float)
        z = np.exp(1j * (m.kx * X + m.kz * Z - m.phase))
        if m.kind == "psi":
            s = c / np.sqrt(m.k2)
            # (u, w) = (-d_z chi, d_x chi) with chi = s Re(z)
            g[n, 0] = -s * np.real(1j * m.kz * z)
            g[n, 1] = s * np.real(1j * m.kx * z)
            for a in range(2):
                dg[n, 0, a] = s * m.kz * k[a] * np.real(z)
                dg[n, 1, a] = -s * m.kx * k[a] * np.real(z)
        else:
            comp = 2 if m.kind == "v" else 3
            g[n, comp] = c * np.real(z)
            for a in range(2):
                dg[n, comp, a] = c * np.real(1j * k[a] * z)
    return g, dg


class RotBoussinesqModel(Model):
    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.modes = fourier_modes(spec.radius)
        weights = np.array([m.k2 for m in self.modes], dtype=float)
        tags = [TEMPERATURE if m.kind == "theta" else VELOCITY for m in self.modes]
        self.space = make_space(len(self.modes), weights, tags)
        self.M = grid_size(spec.radius)
        G = self.M * self.M
        g, dg = basis_fields(self.modes, self.M)
        cell = (2 * np.pi / self.M) ** 2
        self.synthesis = g.reshape(len(self.modes), 4 * G).T.copy()
        self.quad_weights = np.full(4 * G, cell)

        kinds = np.array([m.kind for m in self.modes])
        is_psi, is_v, is_T = kinds == "psi", kinds == "v", kinds == "theta"
        lam = self.space.weights

        # a-form: diffusion plus buoyancy forcing of the vertical velocity
        diff = np.where(is_T, spec.kappa, spec.nu) * lam
        A = np.diag(diff)
        w_test = g[:, 1, :]  # vertical velocity of each basis function
        theta = g[:, 3, :]
        coupling = (w_test @ theta.T) * cell  # [j, i] = (theta_i, w_j)
        A -= spec.c_buoy / np.sqrt(spec.K_T) * coupling
        self.A = A

        # Coriolis: e(U, V) = f (u_U v_V - v_U u_V)
        u, v = g[:, 0, :], g[:, 2, :]
        e = spec.f * (u @ v.T - v @ u.T) * cell  # e[i, j] = e(phi_i, phi_j)
        self.E = 0.5 * (e.T - e)  # E[j, i] = e(phi_i, phi_j), exactly skew

        # advection tensor; only streamfunction modes carry in-plane velocity
        self.advectors = np.flatnonzero(is_psi)
        ga = g[self.advectors]
        adv = np.einsum("ig,jcg->ijcg", ga[:, 0], dg[:, :, 0]) + np.einsum(
            "ig,jcg->ijcg", ga[:, 1], dg[:, :, 1]
        )
        bt = np.einsum("ijcg,kcg->ijk", adv, g, optimize=True) * cell
        self.btensor = 0.5 * (bt - bt.transpose(0, 2, 1))
        self.c1 = 0.5 * min(spec.nu, spec.kappa)
        self.kinds = kinds


def build_model(spec: ModelSpec) -> Model:
    if spec.kind == "diagonal-linear":
        return DiagonalLinearModel(spec)
    return RotBoussinesqModel(spec)


def exact_coercivity(model: Model) -> tuple[float, np.ndarray]:
    """Smallest ``a(U,U)/||U||^2`` and the state attaining it."""
    lam = model.space.weights
    sym = 0.5 * (model.A + model.A.T)
    s = lam**-0.5
    vals, vecs = np.linalg.eigh(s[:, None] * sym * s[None, :])
    return float(vals[0]), vecs[:, 0] * s


def coercivity_threshold_KT(spec: ModelSpec, target: float | None = None) -> float:
    """Smallest K_T for which ``a`` is coercive with constant ``target``.

    ``target`` defaults to ``min(nu, kappa) / 2``.  Found by bisection on
    the exact generalized eigenvalue, so it is specific to the truncation.
    """
    if spec.kind != "rot-boussinesq-2d":
        return 0.0
    target = 0.5 * min(spec.nu, spec.kappa) if target is None else target
    if spec.c_buoy == 0:
        return 0.0

    def ok(kt: float) -> bool:
        m = build_model(dataclasses.replace(spec, K_T=kt))
        return exact_coercivity(m)[0] >= target

    lo, hi = 1e-12, 1.0
    while not ok(hi):
        lo, hi = hi, hi * 4
    for _ in range(60):
        mid = np.sqrt(lo * hi)
        lo, hi = (lo, mid) if ok(mid) else (mid, hi)
    return hi
