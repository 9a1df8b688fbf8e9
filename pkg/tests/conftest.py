import numpy as np
import pytest

from spde_euler.models import ModelSpec, build_model
from spde_euler.noise import NoiseSpec, make_psi, sample_wiener
from spde_euler.operators import OperatorSet
from spde_euler.scheme import SchemePath

BOUSSINESQ = ModelSpec(kind="rot-boussinesq-2d", nu=1.0, kappa=1.0, f=2.0, c_buoy=1.0, K_T=4.0, radius=3)


@pytest.fixture(scope="session")
def bous():
    return build_model(BOUSSINESQ)


@pytest.fixture(scope="session")
def bous_small():
    return build_model(ModelSpec(kind="rot-boussinesq-2d", nu=1.0, kappa=1.0, f=2.0, c_buoy=1.0, K_T=4.0, radius=2))


def diag_ops(weights=(1.0,), nu=1.0, regime="additive", alphas=None, psi=None, functionals=None, strat_factor=0.5):
    m = build_model(ModelSpec(nu=nu, weights=tuple(weights)))
    d = m.space.dim
    alphas = np.zeros((0, d)) if alphas is None else np.atleast_2d(alphas)
    if regime.startswith("nemytskii") and psi is None:
        psi = make_psi("identity")
    return OperatorSet(m, NoiseSpec(m, regime, alphas, psi, functionals, strat_factor))


def bous_ops(model, regime="nemytskii-ito", amp=(0.3, 0.2), modes=(0, 8), psi="tanh-saturating"):
    al = np.zeros((len(modes), model.space.dim))
    for k, (m, a) in enumerate(zip(modes, amp)):
        al[k, m] = a
    p = make_psi(psi, 2.0) if regime.startswith("nemytskii") else None
    return OperatorSet(model, NoiseSpec(model, regime, al, p))


def manual_path(states, T=1.0, master_steps=None, K=0, eta=None, sigmas=None, ell=None, seed=0):
    """A SchemePath assembled from given states (for interpolant oracles)."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if states.shape[0] == 1:
        states = states.T
    N = states.shape[0] - 1
    d = states.shape[1]
    M = N if master_steps is None else master_steps
    w = sample_wiener(T, M, K, seed)
    eta = w.coarse(N) if eta is None else eta
    sigmas = np.zeros((N, d, K)) if sigmas is None else sigmas
    ell = np.zeros((N, d)) if ell is None else ell
    r = M // N
    cells = np.repeat(ell, r, axis=0) * (T / M)
    return SchemePath(
        T, N, states, eta, ell, np.zeros(N), sigmas, np.zeros(N), np.zeros(N, dtype=int),
        np.zeros(N), np.ones(N, dtype=bool), cells, np.zeros(M), w.increments,
    )
