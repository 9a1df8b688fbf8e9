"""Semi-implicit Euler scheme with per-step energy certificates.

One step solves, in the Galerkin space,

    U + dt (A U + B(U) + E U - xi(t^n, U)) = U_prev + dt * ell^n + sigma_N(t^{n-1}, U_prev) eta^n

for ``U``.  Drift terms are implicit and the noise coefficient is frozen at
the previous state, which keeps the stochastic sum an Ito sum.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Literal

import numpy as np
import scipy.linalg

from .galerkin import GalerkinSpace
from .noise import ConfigurationError, SigmaN, WienerPath, refinement
from .operators import OperatorSet


class StepFailure(RuntimeError):
    def __init__(self, message: str, residuals: list[float], step: int | None = None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.residuals = residuals
        self.step = step


@dataclasses.dataclass(frozen=True)
class SchemeConfig:
    T: float
    N: int
    solver: Literal["newton", "damped-picard"] = "newton"
    solve_tol: float = 1e-11
    max_iters: int = 50
    energy_tol: float = 1e-9

    def __post_init__(self):
        if self.T <= 0 or self.N < 1:
            raise ConfigurationError("T must be positive and N >= 1")
        if self.solver not in ("newton", "damped-picard"):
            raise ConfigurationError(f"unknown solver {self.solver!r}")

    @property
    def dt(self) -> float:
        return self.T / self.N


@dataclasses.dataclass(frozen=True)
class Thresholds:
    N0: int
    N1: int
    c5: float
    existence_ok: bool
    uniform_ok: bool

    @property
    def ok(self) -> bool:
        return self.existence_ok and self.uniform_ok


def validate_thresholds(cfg: SchemeConfig, ops: OperatorSet, uniform: bool = False) -> Thresholds:
    """``N0 = ceil(4 T c4)`` for solvability, ``N1 = ceil(12 T c5)`` for uniform bounds."""
    return thresholds(cfg.T, ops.c3, ops.c4, cfg.N, uniform)


def thresholds(T: float, c3: float, c4: float, N: int, uniform: bool = False) -> Thresholds:
    c5 = 8 * c4 + 80 * c3**2
    N0 = math.ceil(4 * T * c4 - 1e-12)
    N1 = math.ceil(12 * T * c5 - 1e-12)
    return Thresholds(N0, N1, c5, N >= N0, (N >= N1) if uniform else True)


# ---------------------------------------------------------------------------
# forcing


@dataclasses.dataclass(frozen=True, eq=False)
class ForcingSpec:
    """External forcing ``ell(t)`` given as a coefficient vector (Riesz
    representative in H) at each time.

    ``deterministic-function``: ``profile * time_fn(t)``.
    ``wind-proxy-adapted``: ``profile * (base + amplitude * Y(t))`` where Y is an
    exponentially smoothed record of the first Brownian direction that only
    uses master increments strictly before the current master cell.
    """

    kind: Literal["deterministic-function", "wind-proxy-adapted"]
    profile: np.ndarray
    time_fn: Callable[[np.ndarray], np.ndarray] = np.ones_like
    base: float = 1.0
    amplitude: float = 0.0
    relaxation: float = 0.1

    def cell_integrals(self, T: float, master_steps: int, wiener: WienerPath | None, space: GalerkinSpace):
        """Per master cell: ``int ell dt`` (shape ``(M, dim)``) and
        ``int ||ell||_{V'}^2 dt`` (shape ``(M,)``)."""
        h = T / master_steps
        prof = np.asarray(self.profile, dtype=float)
        pv = float(space.norm_sq(prof, "Vdual"))
        left = np.arange(master_steps) * h
        if self.kind == "deterministic-function":
            # 3-point Gauss-Legendre on each cell
            x, w = np.polynomial.legendre.leggauss(3)
            t = left[:, None] + 0.5 * h * (x[None, :] + 1.0)
            f = self.time_fn(t)
            amp = 0.5 * h * f @ w
            amp2 = 0.5 * h * (f * f) @ w
        elif self.kind == "wind-proxy-adapted":
            if wiener is None or wiener.K == 0:
                raise ConfigurationError("wind-proxy forcing needs a Wiener path with K >= 1")
            decay = math.exp(-h / self.relaxation)
            dW = wiener.increments[:, 0]
            y = np.zeros(master_steps)
            for i in range(1, master_steps):
                y[i] = decay * y[i - 1] + dW[i - 1]
            f = self.base + self.amplitude * y
            amp, amp2 = h * f, h * f * f
        else:
            raise ConfigurationError(f"unknown forcing kind {self.kind!r}")
        return amp[:, None] * prof[None, :], amp2 * pv


def zero_forcing(space: GalerkinSpace) -> ForcingSpec:
    return ForcingSpec("deterministic-function", np.zeros(space.dim))


def forcing_increments(cells: np.ndarray, sq_cells: np.ndarray, N: int):
    """Window averages ``ell^n_N`` and window energies ``zeta^n_N`` for n = 1..N."""
    M = cells.shape[0]
    r = refinement(M, N)
    dt_sum = cells.reshape(N, r, -1).sum(axis=1)
    zeta = sq_cells.reshape(N, r).sum(axis=1)
    return dt_sum, zeta


def average_forcing(
    ell: ForcingSpec,
    n: int,
    N: int,
    T: float,
    space: GalerkinSpace,
    master_steps: int | None = None,
    wiener: WienerPath | None = None,
):
    """``(ell^n_N, zeta^n_N)`` for the single window ``((n-1)dt, n dt]``."""
    if not 1 <= n <= N:
        raise IndexError(f"window {n} outside 1..{N}")
    master_steps = N if master_steps is None else master_steps
    cells, sq = ell.cell_integrals(T, master_steps, wiener, space)
    sums, zeta = forcing_increments(cells, sq, N)
    return sums[n - 1] / (T / N), zeta[n - 1]


# ---------------------------------------------------------------------------
# initial data


def prepare_initial(u0: np.ndarray, N: int, space: GalerkinSpace) -> np.ndarray:
    """Truncate ``u0`` to the longest leading block of modes whose V(2) norm
    stays below ``sqrt(N)``, using at most N modes."""
    u0 = np.asarray(u0, dtype=float)
    partial = np.sqrt(np.cumsum(space.scale("V2") * u0**2))
    too_big = np.flatnonzero(partial > math.sqrt(N))
    m = int(too_big[0]) if too_big.size else u0.size
    m = min(m, N)
    out = np.zeros_like(u0)
    out[:m] = u0[:m]
    return out


def initial_data_ratio(u: np.ndarray, N: int, space: GalerkinSpace) -> float:
    """``(1 + ||U||^2)(1 + ||U||_{V(2)}^2) / N``, bounded in N for admissible data."""
    return float((1 + space.norm_sq(u, "V")) * (1 + space.norm_sq(u, "V2")) / N)


# ---------------------------------------------------------------------------
# one step


@dataclasses.dataclass(frozen=True)
class StepCertificate:
    residual_norm: float
    iterations: int
    energy_slack: float
    accepted: bool


def energy_slack(
    ops: OperatorSet, dt: float, t: float, u: np.ndarray, u_prev: np.ndarray, ell_n: np.ndarray, noise_incr: np.ndarray
):
    """Right minus left side of the per-step energy inequality (stack-aware)."""
    space = ops.space
    lhs = np.sum((u - u_prev) * u, axis=-1) + dt * ops.c1 * space.norm_sq(u, "V")
    rhs = dt * np.sum((ell_n + ops.xi(t, u)) * u, axis=-1) + np.sum(noise_incr * u, axis=-1)
    return rhs - lhs


class _Solver:
    """Nonlinear solve of the implicit map for a stack of right-hand sides.

    Newton takes at least one step on every row and continues until the
    residual drops below ``solve_tol``;
    rows that stall fall back to damped Picard iteration.  Each row is
    updated only from its own data, so results do not depend on which other
    rows share the batch.
    """

    def __init__(self, ops: OperatorSet, cfg: SchemeConfig):
        self.ops, self.cfg = ops, cfg
        self._lu = None
        self._dual = ops.space.scale("V2dual")

    def residual_norm(self, r: np.ndarray) -> np.ndarray:
        return np.sqrt(np.sum(r * r * self._dual, axis=-1))

    def _residual(self, t, u, F):
        r = self.ops.implicit_map(t, u, self.cfg.dt) - F
        return r, self.residual_norm(r)

    def solve(self, t: float, F: np.ndarray, guess: np.ndarray):
        """Returns ``(U, residual, iterations)`` with one row per right-hand side."""
        F, u = np.atleast_2d(F), np.atleast_2d(guess).copy()
        P = F.shape[0]
        res = np.empty(P)
        its = np.zeros(P, dtype=int)
        history: dict[int, list[float]] = {}
        todo = np.arange(P)
        if self.cfg.solver == "newton":
            failed = self._newton(t, F, u, res, its, history)
            todo = failed
        else:
            todo = np.arange(P)
        if todo.size:
            still = self._picard(t, F, u, res, its, history, todo)
            if still.size:
                p = int(still[0])
                raise StepFailure(f"solver did not converge (row {p})", history.get(p, []))
        return u, res, its

    def _newton(self, t, F, u, res, its, history):
        tol, dt = self.cfg.solve_tol, self.cfg.dt
        r, rn = self._residual(t, u, F)
        res[:] = rn
        # always take one correction: a guess inside the tolerance still gets
        # polished, which makes linear problems exact to round-off
        active = np.arange(u.shape[0])
        prev = rn.copy()
        failed = []
        for it in range(1, self.cfg.max_iters + 1):
            if not active.size:
                break
            ua = u[active]
            J = self.ops.implicit_jacobian(t, ua, dt)
            ua = ua - np.linalg.solve(J, r[active][..., None])[..., 0]
            ra, rna = self._residual(t, ua, F[active])
            u[active], r[active], res[active] = ua, ra, rna
            its[active] = it
            done = rna <= tol
            # stop rows that are no longer contracting
            stalled = ~done & (it > 3) & (rna > 0.5 * prev[active])
            for p in active[stalled]:
                history.setdefault(int(p), []).append(float(res[p]))
            failed.extend(active[stalled].tolist())
            prev[active] = rna
            active = active[~done & ~stalled]
        failed.extend(active.tolist())
        return np.array(sorted(failed), dtype=int)

    def _picard(self, t, F, u, res, its, history, rows):
        ops, dt, tol = self.ops, self.cfg.dt, self.cfg.solve_tol
        m = ops.model
        if self._lu is None:
            self._lu = scipy.linalg.lu_factor(np.eye(u.shape[1]) + dt * (m.A + m.E))
        bad = []
        for p in rows:
            up, Fp = u[p], F[p]
            r, rn = self._residual(t, up, Fp)
            omega = 1.0
            hist = history.setdefault(int(p), [])
            hist.append(float(rn))
            k = 0
            for k in range(1, self.cfg.max_iters + 1):
                if rn <= tol:
                    break
                target = scipy.linalg.lu_solve(self._lu, Fp - dt * m.B(up) + dt * ops.xi(t, up))
                trial = up + omega * (target - up)
                r_t, rn_t = self._residual(t, trial, Fp)
                hist.append(float(rn_t))
                if rn_t > rn and omega > 1e-6:
                    omega *= 0.5
                    continue
                up, rn = trial, rn_t
            u[p], res[p], its[p] = up, rn, its[p] + k
            if rn > tol:
                bad.append(p)
        return np.array(bad, dtype=int)


def implicit_step(
    ops: OperatorSet,
    cfg: SchemeConfig,
    t_n: float,
    u_prev: np.ndarray,
    noise_incr: np.ndarray,
    ell_n: np.ndarray,
    solver: _Solver | None = None,
) -> tuple[np.ndarray, StepCertificate]:
    """Advance one step; ``noise_incr`` is ``sigma_N(t^{n-1}, U_prev) eta^n``."""
    solver = _Solver(ops, cfg) if solver is None else solver
    F = u_prev + cfg.dt * ell_n + noise_incr
    u, res, its = solver.solve(t_n, F, u_prev)
    u = u[0]
    slack = float(energy_slack(ops, cfg.dt, t_n, u, u_prev, ell_n, noise_incr))
    ok = res[0] <= cfg.solve_tol and slack >= -cfg.energy_tol * (1 + ops.space.norm_sq(u))
    return u, StepCertificate(float(res[0]), int(its[0]), slack, bool(ok))


# ---------------------------------------------------------------------------
# whole paths


@dataclasses.dataclass(eq=False)
class SchemePath:
    T: float
    N: int
    states: np.ndarray  # (N + 1, dim)
    eta: np.ndarray  # (N, K)
    ell: np.ndarray  # (N, dim), window averages ell^n
    zeta: np.ndarray  # (N,)
    sigmas: np.ndarray  # (N, dim, K), sigma_N(t^{n-1}, U^{n-1})
    residuals: np.ndarray  # (N,)
    iterations: np.ndarray  # (N,)
    slacks: np.ndarray  # (N,)
    accepted: np.ndarray  # (N,) bool
    forcing_cells: np.ndarray  # (master_steps, dim)
    forcing_sq_cells: np.ndarray  # (master_steps,)
    wiener_increments: np.ndarray  # (master_steps, K)

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def master_steps(self) -> int:
        return self.forcing_cells.shape[0]

    @property
    def noise_incr(self) -> np.ndarray:
        return np.einsum("ndk,nk->nd", self.sigmas, self.eta)

    @property
    def certificates(self) -> list[StepCertificate]:
        return [
            StepCertificate(float(r), int(i), float(s), bool(a))
            for r, i, s, a in zip(self.residuals, self.iterations, self.slacks, self.accepted)
        ]

    @property
    def admissible(self) -> bool:
        return bool(np.all(self.accepted))

    def prefix(self, n: int) -> "SchemePath":
        """Data available at step n: states up to index n, inputs up to window n."""
        r = self.master_steps // self.N
        return dataclasses.replace(
            self,
            states=self.states[: n + 1],
            eta=self.eta[:n],
            ell=self.ell[:n],
            zeta=self.zeta[:n],
            sigmas=self.sigmas[:n],
            residuals=self.residuals[:n],
            iterations=self.iterations[:n],
            slacks=self.slacks[:n],
            accepted=self.accepted[:n],
            forcing_cells=self.forcing_cells[: n * r],
            forcing_sq_cells=self.forcing_sq_cells[: n * r],
            wiener_increments=self.wiener_increments[: n * r],
        )


def run_path(
    ops: OperatorSet,
    cfg: SchemeConfig,
    sigma_n: SigmaN,
    wiener: WienerPath,
    forcing: ForcingSpec,
    u0: np.ndarray,
) -> SchemePath:
    """Run the scheme from ``u0`` (taken as the prepared initial state)."""
    return run_ensemble(ops, cfg, sigma_n, [wiener], forcing, np.asarray(u0)[None, :])[0]


def run_ensemble(
    ops: OperatorSet,
    cfg: SchemeConfig,
    sigma_n: SigmaN,
    wieners: list[WienerPath],
    forcing: ForcingSpec,
    u0: np.ndarray,
) -> list[SchemePath]:
    """Advance one path per Wiener path in lockstep.

    ``u0`` is a single prepared initial state or one row per path.  Raises
    :class:`StepFailure` carrying the step index if any row fails to solve.
    """
    N, dt = cfg.N, cfg.dt
    P = len(wieners)
    if P == 0:
        return []
    for w in wieners:
        if not math.isclose(w.T, cfg.T):
            raise ConfigurationError("Wiener path horizon differs from the scheme horizon")
    d = ops.space.dim
    u0 = np.broadcast_to(np.asarray(u0, dtype=float), (P, d))
    eta = np.stack([w.coarse(N) for w in wieners])  # (P, N, K)
    K = eta.shape[2]
    cells, sq, ell, zeta = [], [], [], []
    for w in wieners:
        c, q = forcing.cell_integrals(cfg.T, w.master_steps, w, ops.space)
        sums, z = forcing_increments(c, q, N)
        cells.append(c)
        sq.append(q)
        ell.append(sums / dt)
        zeta.append(z)
    ell = np.stack(ell)
    solver = _Solver(ops, cfg)
    states = np.empty((P, N + 1, d))
    states[:, 0] = u0
    sigmas = np.empty((P, N, d, K))
    residuals, slacks = np.empty((P, N)), np.empty((P, N))
    iterations = np.empty((P, N), dtype=int)
    for n in range(1, N + 1):
        u_prev = states[:, n - 1]
        sig = sigma_n.sigma((n - 1) * dt, u_prev)
        sigmas[:, n - 1] = sig
        incr = np.einsum("pdk,pk->pd", sig, eta[:, n - 1])
        F = u_prev + dt * ell[:, n - 1] + incr
        try:
            u, res, its = solver.solve(n * dt, F, u_prev)
        except StepFailure as exc:
            raise StepFailure(str(exc), exc.residuals, step=n) from exc
        states[:, n] = u
        residuals[:, n - 1], iterations[:, n - 1] = res, its
        slacks[:, n - 1] = energy_slack(ops, dt, n * dt, u, u_prev, ell[:, n - 1], incr)
    scale = 1 + ops.space.norm_sq(states[:, 1:])
    accepted = (residuals <= cfg.solve_tol) & (slacks >= -cfg.energy_tol * scale)
    return [
        SchemePath(
            cfg.T, N, states[p], eta[p], ell[p], zeta[p], sigmas[p], residuals[p], iterations[p],
            slacks[p], accepted[p], cells[p], sq[p], wieners[p].increments,
        )
        for p in range(P)
    ]
