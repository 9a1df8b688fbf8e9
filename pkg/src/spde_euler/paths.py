"""Continuous-time processes built from a scheme path, their error terms,
and the path-space norms used for compactness diagnostics.

Every process is stored per master cell as three samples: the right limit at
the left node, the midpoint and the (left-continuous) value at the right
node.  On each master cell the processes are polynomials of degree at most
one (the Brownian path and the forcing primitive are interpolated linearly
inside a master cell), so Simpson's rule on the three samples integrates
squared norms exactly.

With ``t in (t^n, t^{n+1}]`` and ``theta = (t - t^n) / dt``:

* ``U_N(t) = U^n`` (and ``U^0`` on ``[0, t^1]``)
* ``Ubar_N(t) = U^{n-1} + theta (U^n - U^{n-1})`` (and ``U^0`` on ``[0, t^1]``)
* ``E_D1(t) = -N(U^0) min(t, dt)``
* ``E_D2(t) = -(int_{t^n}^t ell + ell^n (t^{n+1} - t))``  (``-int_0^t ell`` on the first cell)
* ``E_S1(t) = -(1 - theta) sigma_N(U^{n-1}) eta^n``  (0 on the first cell)
* ``E_S2(t) = -int_{t^n}^t sigma_N(U_N) dW``
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .galerkin import GalerkinSpace
from .noise import ConfigurationError, refinement
from .operators import OperatorSet
from .scheme import SchemePath

# positions of the three samples inside a master cell
_NODES = np.array([0.0, 0.5, 1.0])
_SIMPSON = np.array([1.0, 4.0, 1.0]) / 6.0


@dataclasses.dataclass(frozen=True, eq=False)
class InterpolantSet:
    T: float
    N: int
    space: GalerkinSpace
    U_N: np.ndarray  # (M, 3, dim)
    Ubar_N: np.ndarray
    ED1: np.ndarray
    ED2: np.ndarray
    ES1: np.ndarray
    ES2: np.ndarray
    drift_integral: np.ndarray  # int_0^t N(U_N) ds
    forcing_integral: np.ndarray  # int_0^t ell ds
    ito_integral: np.ndarray  # int_0^t sigma_N(U_N) dW
    U0: np.ndarray
    drift_at_zero: np.ndarray  # N(U^0)
    states: np.ndarray

    @property
    def master_steps(self) -> int:
        return self.U_N.shape[0]

    @property
    def h(self) -> float:
        return self.T / self.master_steps

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.master_steps + 1)

    @property
    def ED(self) -> np.ndarray:
        return self.ED1 + self.ED2

    @property
    def ES(self) -> np.ndarray:
        return self.ES1 + self.ES2

    @property
    def Ustar(self) -> np.ndarray:
        return self.Ubar_N - self.ES

    @property
    def Ustarstar(self) -> np.ndarray:
        return self.Ustar - self.ED

    @staticmethod
    def nodes(samples: np.ndarray) -> np.ndarray:
        """Values at the master nodes ``s_0..s_M`` (left-continuous)."""
        return np.concatenate([samples[:1, 0], samples[:, 2]], axis=0)

    def integrate_sq(self, samples: np.ndarray, level: str = "H") -> float:
        """``int_0^T ||X(t)||^2 dt`` at the given norm level."""
        sq = self.space.norm_sq(samples, level)
        return float(self.h * np.sum(sq @ _SIMPSON))

    def sup_sq(self, samples: np.ndarray, level: str = "H") -> float:
        return float(np.max(self.space.norm_sq(samples, level)))


def lagged_samples(states: np.ndarray, N: int, master_steps: int, cells: int | None = None):
    """``U_N`` and ``Ubar_N`` samples on the first ``cells`` master cells.

    Only states with index ``<= n`` enter cells inside ``(t^n, t^{n+1}]``;
    ``cells`` defaults to everything reachable from the given states.
    """
    r = refinement(master_steps, N)
    avail = min(states.shape[0], N) * r
    cells = avail if cells is None else cells
    if cells > avail:
        raise ConfigurationError("not enough states for the requested cells")
    i = np.arange(cells)
    n = i // r
    theta = ((i - n * r)[:, None] + _NODES[None, :]) / r  # (cells, 3)
    cur = states[n]
    prev = states[np.maximum(n - 1, 0)]
    U_N = np.repeat(cur[:, None, :], 3, axis=1)
    Ubar = prev[:, None, :] + theta[..., None] * (cur - prev)[:, None, :]
    Ubar[n == 0] = states[0]
    return U_N, Ubar


def build_interpolants(path: SchemePath, ops: OperatorSet) -> InterpolantSet:
    """All interpolants and error terms of ``path`` on its master grid."""
    N, T = path.N, path.T
    M = path.master_steps
    r = refinement(M, N)
    h, dt = T / M, T / N
    states = path.states
    d = states.shape[1]
    i = np.arange(M)
    n = i // r
    local = (i - n * r)[:, None] + _NODES[None, :]  # in master steps from t^n
    theta = local / r
    t = (i[:, None] + _NODES[None, :]) * h

    U_N, Ubar = lagged_samples(states, N, M)

    # drift: N(U^k) for k = 0..N-1, with the time of the step that produced U^k
    drift = np.stack([ops.drift(k * dt, states[k]) for k in range(N)])
    drift_before = np.vstack([np.zeros((1, d)), np.cumsum(drift, axis=0)[:-1] * dt])
    drift_int = drift_before[n][:, None, :] + (local * h)[..., None] * drift[n][:, None, :]
    ED1 = -np.minimum(t, dt)[..., None] * drift[0]

    # forcing primitive, linear inside each master cell
    cum = np.vstack([np.zeros((1, d)), np.cumsum(path.forcing_cells, axis=0)])
    L = cum[i][:, None, :] + _NODES[None, :, None] * path.forcing_cells[:, None, :]
    L_tn = cum[n * r]  # int_0^{t^n} ell
    ell_n = path.ell[np.maximum(n - 1, 0)]  # ell^n (window ((n-1)dt, n dt])
    ED2 = -((L - L_tn[:, None, :]) + ((1 - theta) * dt)[..., None] * ell_n[:, None, :])
    ED2[n == 0] = -L[n == 0]

    # Brownian path, linear inside each master cell
    dW = path.wiener_increments
    Wn = np.vstack([np.zeros((1, dW.shape[1])), np.cumsum(dW, axis=0)])
    W = Wn[i][:, None, :] + _NODES[None, :, None] * dW[:, None, :]
    W_rel = W - Wn[n * r][:, None, :]  # W(t) - W(t^n)
    sig = path.sigmas  # sigma_N(U^k), k = 0..N-1
    incr = path.noise_incr  # sigma_N(U^{k}) eta^{k+1}
    ito_before = np.vstack([np.zeros((1, d)), np.cumsum(incr, axis=0)[:-1]])
    ES2 = -np.einsum("idk,ijk->ijd", sig[n], W_rel)
    ito = ito_before[n][:, None, :] - ES2
    ES1 = -(1 - theta)[..., None] * incr[np.maximum(n - 1, 0)][:, None, :]
    ES1[n == 0] = 0.0

    return InterpolantSet(
        T, N, ops.space, U_N, Ubar, ED1, ED2, ES1, ES2, drift_int, L, ito,
        states[0].copy(), drift[0], states,
    )


def interpolation_gap(s: InterpolantSet) -> tuple[float, float]:
    """``int_0^T |U_N - Ubar_N|^2 dt`` by quadrature and by ``dt/3 sum_{n<N} |U^n - U^{n-1}|^2``."""
    quad = s.integrate_sq(s.U_N - s.Ubar_N)
    jumps = np.diff(s.states[: s.N], axis=0)
    closed = float(s.dt / 3 * np.sum(jumps * jumps))
    return quad, closed


def error_norms(s: InterpolantSet) -> dict[str, float]:
    """Squared path norms of the error terms."""
    ES = s.ES
    return {
        "ed_l2vdual": s.integrate_sq(s.ED, "Vdual"),
        "es_l2h": s.integrate_sq(ES),
        "es_linfh": s.sup_sq(ES),
        "es_l2v": s.integrate_sq(ES, "V"),
        "ed1_linfvdual": s.sup_sq(s.ED1, "Vdual"),
        "es1_l2h": s.integrate_sq(s.ES1),
    }


def path_norms(s: InterpolantSet) -> dict[str, float]:
    """Squared ``L2(H)``, ``L2(V)``, ``Linf(H)`` and ``L2(V')`` norms of ``U_N``."""
    return {
        "l2H": s.integrate_sq(s.U_N),
        "l2V": s.integrate_sq(s.U_N, "V"),
        "linfH": s.sup_sq(s.U_N),
        "l2Vdual": s.integrate_sq(s.U_N, "Vdual"),
    }


def reconstruction_error(s: InterpolantSet) -> float:
    """Largest ``V(3)'`` distance between ``U**`` and the integral form
    ``U^0 + int (N(U_N) + ell) + int sigma_N(U_N) dW``, relative to the path scale."""
    rhs = s.U0 + s.drift_integral + s.forcing_integral + s.ito_integral
    err = np.max(s.space.norm(s.Ustarstar - rhs, "V3dual"))
    scale = 1.0 + np.max(s.space.norm(s.Ubar_N)) + np.max(s.space.norm(s.ito_integral))
    return float(err / scale)


def check_adapted(path: SchemePath, steps: int | None = None) -> bool:
    """Rebuild ``U_N`` and ``Ubar_N`` on ``[0, t^{n+1}]`` from the first n+1 states
    and compare with the full construction."""
    M = path.master_steps
    r = refinement(M, path.N)
    full_U, full_bar = lagged_samples(path.states, path.N, M)
    ns = range(path.N) if steps is None else np.linspace(0, path.N - 1, steps).astype(int)
    for n in ns:
        pre = path.prefix(int(n))
        U, bar = lagged_samples(pre.states, path.N, M, (int(n) + 1) * r)
        c = U.shape[0]
        if not (np.array_equal(U, full_U[:c]) and np.array_equal(bar, full_bar[:c])):
            return False
    return True


# ---------------------------------------------------------------------------
# seminorms


def _pair_distances(X: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """Matrix of squared weighted distances between rows of X."""
    Y = X * np.sqrt(scale)
    sq = np.sum(Y * Y, axis=1)
    D = sq[:, None] + sq[None, :] - 2.0 * Y @ Y.T
    np.maximum(D, 0.0, out=D)
    np.fill_diagonal(D, 0.0)
    return D


def shift_seminorm(values: np.ndarray, T: float, j: int, scale: np.ndarray | None = None) -> float:
    """``(j sup_theta int_0^{T-theta} ||X(t+theta) - X(t)||^{4/3} dt)^{3/4}`` over node values.

    ``theta`` ranges over positive multiples of the master step not exceeding
    ``j^{-6}``; the integral is a trapezoid sum on the master nodes.  With no admissible
    offset the value is 0.
    """
    if j < 1:
        raise ValueError("j must be >= 1")
    return shift_seminorms(values, T, [j], scale)[0]


def shift_seminorms(values: np.ndarray, T: float, js, scale: np.ndarray | None = None) -> list[float]:
    X = np.asarray(values, dtype=float)
    X = X.reshape(X.shape[0], -1)
    M = X.shape[0] - 1
    h = T / M
    scale = np.ones(X.shape[1]) if scale is None else scale
    kmax = [min(int(np.floor(j ** -6.0 / h * (1 + 1e-12))), M) for j in js]
    top = max(kmax, default=0)
    if top < 1:
        return [0.0 for _ in js]
    D = _pair_distances(X, scale) ** (2.0 / 3.0)
    # trapezoid sum of D[i, i + k] over t_i in [0, T - k h]
    rows, cols = np.triu_indices(M + 1, 1)
    k = cols - rows
    keep = k <= top
    rows, cols, k = rows[keep], cols[keep], k[keep]
    w = (1.0 - 0.5 * (rows == 0) - 0.5 * (cols == M)) * D[rows, cols]
    sums = np.bincount(k, weights=w, minlength=top + 1) * h
    out = []
    for j, km in zip(js, kmax):
        if km < 1:
            out.append(0.0)
            continue
        out.append(float((j * np.max(sums[1 : km + 1])) ** 0.75))
    return out


def frac_sobolev_seminorm(
    values: np.ndarray, T: float, alpha: float, p: float, scale: np.ndarray | None = None
) -> float:
    """Discrete ``W^{alpha,p}(0,T)`` norm of node values:
    ``(int ||X||^p + int int ||X(t) - X(s)||^p / |t - s|^{1 + alpha p})^{1/p}``
    with trapezoid weights on the master nodes."""
    if not (0 < alpha < 1) or p <= 1:
        raise ValueError("need 0 < alpha < 1 and p > 1")
    X = np.asarray(values, dtype=float)
    X = X.reshape(X.shape[0], -1)
    M = X.shape[0] - 1
    h = T / M
    scale = np.ones(X.shape[1]) if scale is None else scale
    w = np.full(M + 1, h)
    w[[0, -1]] = h / 2
    lp = float(np.sum(w * np.sum(X * X * scale, axis=1) ** (p / 2)))
    D = _pair_distances(X, scale) ** (p / 2)
    t = np.arange(M + 1) * h
    gap = np.abs(t[:, None] - t[None, :])
    np.fill_diagonal(gap, 1.0)
    double = float(w @ (D / gap ** (1 + alpha * p)) @ w)
    return (lp + double) ** (1.0 / p)
