"""Acceptance suite: one PASS/FAIL line per criterion, at the stated tolerances.

Run with ``pytest tests/test_acceptance.py -v``; the verdict lines are written
straight to the terminal.
"""

import dataclasses
import time
from pathlib import Path

import numpy as np
import pytest

from spde_euler.harness.config import assemble, load_config, scheme_config
from spde_euler.harness.experiment import run_chunk, run_experiment
from spde_euler.harness.report import evaluate_verdicts
from spde_euler.martingale import sign_walk_oracle
from spde_euler.models import ModelSpec, build_model
from spde_euler.noise import NoiseSpec, make_psi, project_sigma, sample_wiener, sigma_convergence_probe
from spde_euler.operators import OperatorSet, verify_axioms
from spde_euler.scheme import ForcingSpec, SchemeConfig, run_ensemble, run_path, thresholds, zero_forcing

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, title, detail, seconds, budget):
        line = f"[criterion {n:>2}] {'PASS' if ok else 'FAIL'}  {title}: {detail}  ({seconds:.1f}s, budget {budget})"
        with capsys.disabled():
            print("\n" + line)
        return line

    return emit


@pytest.fixture(scope="module")
def ladder_run(tmp_path_factory):
    cfg = load_config(CONFIGS / "boussinesq_ladder.yaml")
    t0 = time.perf_counter()
    summary = run_experiment(cfg, tmp_path_factory.mktemp("ladder"))
    elapsed = time.perf_counter() - t0
    verdicts = {v.claim: v for v in evaluate_verdicts(summary.rows, cfg.to_dict())}
    return cfg, summary, verdicts, elapsed


def test_criterion_01_axioms(verdict):
    t0 = time.perf_counter()
    bous = assemble(load_config(CONFIGS / "boussinesq_nemytskii.yaml")).ops
    diag = build_model(ModelSpec(nu=1.0, weights=tuple(float(k) for k in range(1, 21))))
    diag_ops = OperatorSet(diag, NoiseSpec(diag, "nemytskii-ito", np.eye(20)[:3] * 0.5, make_psi("identity")))
    reports = [verify_axioms(ops, samples=1000, seed=11) for ops in (bous, diag_ops)]
    fitted = [r.constants[k] for r in reports for k in ("c2_fitted", "c3_fitted", "c4_fitted")]
    ok = all(r.valid for r in reports) and all(np.isfinite(fitted))
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed < 10
    worst = max(max(r[c].worst for c in ("e-cancel", "b-cancel")) for r in reports)
    coer = min(r["coercivity"].worst for r in reports)
    verdict(1, ok, "axiom suite", f"min coercivity residual={coer:.2e}, worst cancellation={worst:.1e}", elapsed, "10s")
    assert ok, [r.lines() for r in reports]


def test_criterion_02_linear_oracle(verdict):
    t0 = time.perf_counter()
    N, nu, lam, ell = 10_000, 1.0, 2.0, 1.0
    model = build_model(ModelSpec(nu=nu, weights=(lam,)))
    ops = OperatorSet(model, NoiseSpec(model, "additive", np.zeros((0, 1))))
    cfg = SchemeConfig(T=10.0, N=N)
    path = run_path(ops, cfg, project_sigma(ops.noise, N), sample_wiener(10.0, N, 0, 0),
                    ForcingSpec("deterministic-function", np.array([ell])), np.array([3.0]))
    U = path.states[:, 0]
    step_err = np.max(np.abs(U[1:] - (U[:-1] + cfg.dt * ell) / (1 + cfg.dt * nu * lam)))
    u = 3.0
    glob = 0.0
    for n in range(1, N + 1):
        u = (u + cfg.dt * ell) / (1 + cfg.dt * nu * lam)
        glob = max(glob, abs(U[n] - u))
    elapsed = time.perf_counter() - t0
    ok = step_err <= 1e-12 and glob <= 1e-12 and elapsed < 5
    verdict(2, ok, "linear-scheme oracle", f"max per-step error={step_err:.1e}, max deviation from recursion={glob:.1e}",
            elapsed, "5s")
    assert ok


def test_criterion_03_energy_certificates(verdict):
    t0 = time.perf_counter()
    cfg = dataclasses.replace(load_config(CONFIGS / "boussinesq_nemytskii.yaml"), ensemble_size=200)
    N = 128
    paths = []
    for start in range(0, 200, cfg.chunk_size):
        _, _, fails, pairs = run_chunk(cfg, N, list(range(start, start + cfg.chunk_size)), with_stats=False)
        assert not fails
        paths += [p for _, p in pairs]
    rel = np.concatenate([p.slacks / (1 + np.sum(p.states[1:] ** 2, axis=1)) for p in paths])
    rejected = sum(int(np.sum(~p.accepted)) for p in paths)
    elapsed = time.perf_counter() - t0
    ok = len(paths) == 200 and rejected == 0 and rel.min() >= -1e-9 and elapsed < 120
    verdict(3, ok, "energy certificates", f"{len(paths)} paths x {N} steps, rejected={rejected}, "
            f"min slack/(1+|U|^2)={rel.min():.2e}", elapsed, "2min")
    assert ok


def test_criterion_04_sigma_n(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    margins = []
    bous = assemble(load_config(CONFIGS / "boussinesq_nemytskii.yaml")).ops
    X = rng.standard_normal((1000, bous.space.dim)) * 10.0 ** rng.uniform(-1, 1, (1000, 1))
    for N in (1, 2, 4, 8, 16, 32, 64):
        c = project_sigma(bous.noise, N).certify(X)
        margins += [c["v_margin"], c["h_margin"]]
    # a spectrum long enough that every N in the probe ladder truncates something
    w = np.arange(1.0, 101.0)
    diag = build_model(ModelSpec(nu=1.0, weights=tuple(w)))
    alphas = np.stack([w**-0.75, np.cos(w) * w**-1.0])
    spec = NoiseSpec(diag, "nemytskii-ito", alphas, make_psi("tanh-saturating", 2.0))
    Y = rng.standard_normal((1000, 100)) * 10.0 ** rng.uniform(-1, 1, (1000, 1))
    for N in (8, 16, 32, 64):
        c = project_sigma(spec, N).certify(Y)
        margins += [c["v_margin"], c["h_margin"]]
    u = rng.standard_normal(100) * w**-0.5
    probe = [d for _, _, d in sigma_convergence_probe(spec, u, 1.0, [8, 16, 32, 64])]
    mono = all(b < a for a, b in zip(probe, probe[1:]))
    elapsed = time.perf_counter() - t0
    ok = min(margins) >= 0 and mono and elapsed < 10
    verdict(4, ok, "sigma_N conditions", f"min margin={min(margins):.3e}, probe={['%.3e' % p for p in probe]}",
            elapsed, "10s")
    assert ok


def _ladder_line(verdict, n, ladder_run, claim, budget, extra=""):
    cfg, summary, verdicts, elapsed = ladder_run
    v = verdicts[claim]
    ok = v.status == "PASS"
    verdict(n, ok, v.title, v.statistic + extra + f" [policy threshold: {v.threshold}]", elapsed, budget)
    return ok, v


def test_criterion_05_gap_identity(verdict, ladder_run):
    cfg, summary, _, elapsed = ladder_run
    worst = max(r["gap_rel_err"] for recs in summary.records.values() for r in recs)
    ok, v = _ladder_line(verdict, 5, ladder_run, "C5", "1min (shared ladder run)",
                         f", per-path max rel err={worst:.1e}")
    assert ok and worst <= 1e-12, v.line()


def test_criterion_06_error_terms(verdict, ladder_run):
    cfg, summary, _, elapsed = ladder_run
    ops = assemble(cfg).ops
    N1 = thresholds(cfg.scheme.T, ops.c3, ops.c4, 1).N1
    on_ladder = list(cfg.ladder) == [N1, 2 * N1, 4 * N1]
    ok, v = _ladder_line(verdict, 6, ladder_run, "C6", "5min", f", ladder={cfg.ladder} (N1={N1})")
    assert ok and on_ladder and elapsed < 300, v.line()


def test_criterion_07_uniform_bound(verdict, ladder_run):
    ok, v = _ladder_line(verdict, 7, ladder_run, "C7", "folded into criterion 6")
    assert ok, v.line()


def test_criterion_08_bdg(verdict, ladder_run):
    t0 = time.perf_counter()
    oracle = sign_walk_oracle(4, 1.0)
    cfg, summary, _, _ = ladder_run
    t = summary.table()
    ratio, passed = t[(64, "bdg_ratio")]["mean"], t[(64, "bdg_pass")]["mean"] == 1.0
    ok = oracle.lhs <= oracle.rhs and oracle.rhs == 6.0 and passed
    verdict(8, ok, "discrete BDG (q=1)", f"sign walk E max|M|={oracle.lhs:.4f} <= {oracle.rhs:.1f}; "
            f"scheme ensemble N=64 ratio={ratio:.3f}", time.perf_counter() - t0, "30s")
    assert ok


def test_criterion_09_stratonovich(verdict):
    t0 = time.perf_counter()
    model = build_model(ModelSpec(nu=0.0, weights=(1.0,)))
    ops = OperatorSet(model, NoiseSpec(model, "nemytskii-stratonovich", np.ones((1, 1)), make_psi("identity"),
                                       strat_factor=0.5))
    N, P = 256, 10_000
    cfg = SchemeConfig(T=1.0, N=N)
    sN = project_sigma(ops.noise, N)
    ends = []
    for start in range(0, P, 2500):
        ws = [sample_wiener(1.0, N, 1, 909, key=(p,)) for p in range(start, start + 2500)]
        ends += [p.states[-1, 0] for p in run_ensemble(ops, cfg, sN, ws, zero_forcing(ops.space), np.ones(1))]
    ends = np.array(ends)
    mean, se = ends.mean(), ends.std(ddof=1) / np.sqrt(P)
    z = (mean - np.exp(0.5)) / se
    elapsed = time.perf_counter() - t0
    ok = abs(z) <= 4 and elapsed < 60
    verdict(9, ok, "Stratonovich oracle", f"mean U_N(T)={mean:.5f}, target {np.exp(0.5):.5f}, {z:+.2f} SE", elapsed, "1min")
    assert ok


def test_criterion_10_law_distance(verdict, ladder_run):
    ok, v = _ladder_line(verdict, 10, ladder_run, "C10", "folded into criterion 6")
    assert ok, v.line()


def test_criterion_11_determinism(verdict, tmp_path):
    t0 = time.perf_counter()
    cfg = dataclasses.replace(load_config(CONFIGS / "boussinesq_ladder.yaml"), ensemble_size=60)
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    a = (tmp_path / "a" / "summary.csv").read_bytes()
    b = (tmp_path / "b" / "summary.csv").read_bytes()
    ok = a == b
    verdict(11, ok, "determinism", f"summary.csv {len(a)} bytes, identical={ok}", time.perf_counter() - t0,
            "below twice the criterion-6 cost")
    assert ok
