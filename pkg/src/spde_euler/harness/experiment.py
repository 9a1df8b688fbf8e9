"""Monte Carlo ensembles across a resolution ladder.

Every path draws its Brownian increments on one master grid from the
stream ``(seed, path_id)``; all ladder levels consume block sums of the same
increments, so paths are coupled across N.  With ``independent_paths`` the
stream is ``(seed, path_id, N)`` instead.  Paths are processed in fixed-size
chunks and merged by path index, so results do not depend on the number of
workers.
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import datetime
import io
import json
import platform
import subprocess
from pathlib import Path

import numpy as np
import scipy

from .. import __version__
from ..martingale import bdg_from_samples, build_martingale, quadratic_variation
from ..noise import hs_norm, project_sigma, sample_wiener, sigma_convergence_probe
from ..operators import verify_axioms
from ..paths import (
    build_interpolants,
    error_norms,
    frac_sobolev_seminorm,
    interpolation_gap,
    path_norms,
    reconstruction_error,
    shift_seminorms,
)
from ..scheme import StepFailure, prepare_initial, run_ensemble, thresholds
from .config import ExperimentConfig, assemble, config_from_dict, scheme_config
from .stats import ks_buffer, law_distance, mean_ci

# fixed leading columns of paths_N<k>.csv
BASE_COLUMNS = ["path_id", "N", "l2H", "l2V", "linfH", "ed_l2vdual", "es_l2h", "es_l2v", "es_linfh"]
EXTRA_COLUMNS = [
    "l2Vdual", "gap_quad", "gap_closed", "gap_rel_err", "es_bound", "uniform_stat",
    "recon_err", "min_rel_slack", "rejected", "max_residual", "mmax_q", "aq",
]
SUMMARY_COLUMNS = ["N", "statistic", "n", "mean", "stderr", "ci_low", "ci_high"]
PROBE_LADDER = (8, 16, 32, 64)


def path_columns(cfg: ExperimentConfig) -> list[str]:
    shifts = [f"shift_j{j}" for j in range(1, cfg.seminorms.j_max + 1)]
    return BASE_COLUMNS + shifts + ["fracsob"] + EXTRA_COLUMNS + list(cfg.functionals)


# ---------------------------------------------------------------------------
# per-path statistics


def path_record(path, ops, cfg: ExperimentConfig, path_id: int) -> dict:
    space = ops.space
    s = build_interpolants(path, ops)
    rec = {"path_id": path_id, "N": path.N}
    rec.update(path_norms(s))
    en = error_norms(s)
    for k in ("ed_l2vdual", "es_l2h", "es_l2v", "es_linfh"):
        rec[k] = en[k]
    dual2 = space.scale("V2dual")
    js = range(1, cfg.seminorms.j_max + 1)
    for j, v in zip(js, shift_seminorms(s.nodes(s.Ustar), path.T, list(js), dual2)):
        rec[f"shift_j{j}"] = v
    rec["fracsob"] = frac_sobolev_seminorm(
        s.nodes(s.ito_integral), path.T, cfg.seminorms.alpha, cfg.seminorms.p, dual2
    )
    quad, closed = interpolation_gap(s)
    rec["gap_quad"], rec["gap_closed"] = quad, closed
    rec["gap_rel_err"] = abs(quad - closed) / max(closed, 1e-300) if closed else abs(quad)
    rec["es_bound"] = en["es_linfh"] + en["es_l2v"]
    U = path.states
    hn2 = np.sum(U * U, axis=1)
    rec["uniform_stat"] = float(
        np.max(hn2) + np.sum(np.diff(U, axis=0) ** 2) + path.dt * np.sum(space.norm_sq(U[1:], "V"))
    )
    rec["recon_err"] = reconstruction_error(s)
    rec["min_rel_slack"] = float(np.min(path.slacks / (1 + hn2[1:])))
    rec["rejected"] = int(np.sum(~path.accepted))
    rec["max_residual"] = float(np.max(path.residuals))
    mart = build_martingale(path, 1)
    q = cfg.bdg.q
    rec["mmax_q"] = float(np.max(np.abs(mart.values)) ** q)
    rec["aq"] = float(quadratic_variation(mart).A[-1] ** (q / 2))
    for name in cfg.functionals:
        rec[name] = functional_value(name, path, rec, cfg.mode_k)
    return rec


def functional_value(name: str, path, rec: dict, mode_k: int = 0) -> float:
    U = path.states
    if name == "energy_l2":
        return rec["l2H"]
    if name == "endpoint_h_norm":
        return float(np.linalg.norm(U[-1]))
    if name == "mode_k_endpoint":
        return float(U[-1, mode_k])
    if name == "max_h_norm":
        return float(np.max(np.linalg.norm(U, axis=1)))
    raise KeyError(name)


# ---------------------------------------------------------------------------
# chunk execution (runs in worker processes)

_ASSEMBLY_CACHE: dict[str, tuple] = {}


def _assembled(cfg: ExperimentConfig):
    key = cfg.digest()
    if key not in _ASSEMBLY_CACHE:
        _ASSEMBLY_CACHE.clear()
        _ASSEMBLY_CACHE[key] = (cfg, assemble(cfg))
    return _ASSEMBLY_CACHE[key][1]


def wiener_for(cfg: ExperimentConfig, path_id: int, N: int, K: int):
    key = (path_id, N) if cfg.independent_paths else (path_id,)
    return sample_wiener(cfg.scheme.T, cfg.master_steps, K, cfg.seed, key=key)


def run_chunk(cfg: ExperimentConfig, N: int, ids: list[int], with_stats: bool = True):
    """Run paths ``ids`` at resolution N; returns (records, endpoints, failures, paths)."""
    asm = _assembled(cfg)
    ops = asm.ops
    sc = scheme_config(cfg, N)
    sig = project_sigma(ops.noise, N)
    u0 = prepare_initial(asm.u0, N, ops.space)
    wieners = [wiener_for(cfg, i, N, ops.noise.K) for i in ids]
    failures = []
    try:
        paths = run_ensemble(ops, sc, sig, wieners, asm.forcing, u0)
        pairs = list(zip(ids, paths))
    except StepFailure:
        pairs = []
        for i, w in zip(ids, wieners):
            try:
                pairs.append((i, run_ensemble(ops, sc, sig, [w], asm.forcing, u0)[0]))
            except StepFailure as exc:
                failures.append({"N": N, "path_id": i, "step": exc.step, "error": str(exc),
                                 "residuals": [float(r) for r in exc.residuals[-5:]]})
    records = [path_record(p, ops, cfg, i) for i, p in pairs] if with_stats else []
    endpoints = {i: p.states[-1].copy() for i, p in pairs}
    return records, endpoints, failures, (pairs if not with_stats else None)


def _chunk_job(args):
    cfg_dict, N, ids = args
    cfg = config_from_dict(cfg_dict)
    recs, ends, fails, _ = run_chunk(cfg, N, ids)
    return recs, ends, fails


def run_ladder(cfg: ExperimentConfig, Ns: list[int]):
    """Records, endpoints and failures for every N in ``Ns``."""
    jobs = []
    for N in Ns:
        for start in range(0, cfg.ensemble_size, cfg.chunk_size):
            ids = list(range(start, min(start + cfg.chunk_size, cfg.ensemble_size)))
            jobs.append((N, ids))
    if cfg.workers > 1:
        payload = [(cfg.to_dict(), N, ids) for N, ids in jobs]
        with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            results = list(ex.map(_chunk_job, payload))
    else:
        results = [run_chunk(cfg, N, ids)[:3] for N, ids in jobs]
    records = {N: [] for N in Ns}
    endpoints = {N: {} for N in Ns}
    failures = []
    for (N, _), (recs, ends, fails) in zip(jobs, results):
        records[N].extend(recs)
        endpoints[N].update(ends)
        failures.extend(fails)
    for N in Ns:
        records[N].sort(key=lambda r: r["path_id"])
    return records, endpoints, failures


# ---------------------------------------------------------------------------
# summary


@dataclasses.dataclass
class EnsembleSummary:
    config: ExperimentConfig
    records: dict[int, list[dict]]
    rows: list[dict]
    failures: list[dict]
    axiom_lines: list[str]

    def table(self) -> dict[tuple[int, str], dict]:
        return {(r["N"], r["statistic"]): r for r in self.rows}


def _row(N, stat, n, mean, stderr=0.0, low=None, high=None) -> dict:
    low = mean if low is None else low
    high = mean if high is None else high
    return {"N": int(N), "statistic": stat, "n": int(n), "mean": float(mean),
            "stderr": float(stderr), "ci_low": float(low), "ci_high": float(high)}


def _ci_row(N, stat, values) -> dict:
    ci = mean_ci(values)
    return _row(N, stat, ci.n, ci.mean, ci.stderr, ci.low, ci.high)


SUMMARY_STATS = (
    "l2H", "l2V", "linfH", "ed_l2vdual", "es_l2h", "es_l2v", "es_linfh", "es_bound",
    "gap_quad", "uniform_stat", "fracsob", "shift_j1", "shift_j2",
)


def summarize(cfg: ExperimentConfig, records, endpoints, failures, axiom_report, probe_rows, sigma_margins, thr):
    rows = []
    # model-level rows (N = 0)
    rows.append(_row(0, "axiom_valid", 1, float(axiom_report.valid)))
    for c in axiom_report.checks:
        rows.append(_row(0, f"axiom_{c.name}", axiom_report.samples, c.worst))
    rows.append(_row(0, "N0", 1, thr.N0))
    rows.append(_row(0, "N1", 1, thr.N1))
    for N, m, dist in probe_rows:
        rows.append(_row(N, "sigma_probe", 1, dist))
    for N, (vm, hm, n) in sigma_margins.items():
        rows.append(_row(N, "sigma_v_margin", n, vm))
        rows.append(_row(N, "sigma_h_margin", n, hm))

    ladder = sorted(records)
    for N in ladder:
        recs = records[N]
        rows.append(_row(N, "paths_ok", len(recs), len(recs)))
        rows.append(_row(N, "paths_failed", 1, sum(f["N"] == N for f in failures)))
        if not recs:
            continue
        col = lambda k: np.array([r[k] for r in recs], dtype=float)  # noqa: E731
        for k in SUMMARY_STATS:
            if k in recs[0]:
                rows.append(_ci_row(N, k, col(k)))
        rows.append(_row(N, "rejected_steps", len(recs), col("rejected").sum()))
        rows.append(_row(N, "min_rel_slack", len(recs), col("min_rel_slack").min()))
        rows.append(_row(N, "gap_rel_err_max", len(recs), col("gap_rel_err").max()))
        rows.append(_row(N, "recon_err_max", len(recs), col("recon_err").max()))
        bdg = bdg_from_samples(col("mmax_q"), col("aq"), cfg.bdg.q) if len(recs) > 1 else None
        if bdg is not None:
            rows.append(_row(N, "mmax_q", len(recs), bdg.lhs, bdg.stderr))
            rows.append(_ci_row(N, "aq_mean", col("aq")))
            rows.append(_row(N, "bdg_ratio", len(recs), bdg.ratio))
            rows.append(_row(N, "bdg_pass", len(recs), float(bool(bdg.passed)) if bdg.passed is not None else -1.0))
        for name in cfg.functionals:
            rows.append(_ci_row(N, f"F_{name}", col(name)))

    # law distances and pathwise coupling between successive rungs
    for Na, Nb in zip(ladder, ladder[1:]):
        ra, rb = records[Na], records[Nb]
        if not ra or not rb:
            continue
        for name in cfg.functionals:
            a = [r[name] for r in ra]
            b = [r[name] for r in rb]
            ks, w1 = law_distance(a, b)
            rows.append(_row(Na, f"ks_{name}", len(a), ks, ks_buffer(len(a), len(b))))
            rows.append(_row(Na, f"w1_{name}", len(a), w1))
        common = sorted(set(endpoints[Na]) & set(endpoints[Nb]))
        if common:
            d = [np.linalg.norm(endpoints[Na][i] - endpoints[Nb][i]) for i in common]
            rows.append(_row(Na, "coupling_median", len(d), float(np.median(d))))
    return rows


def _sigma_margins(cfg, ops, Ns, n_states=1000):
    rng = np.random.default_rng(cfg.seed)
    X = rng.standard_normal((n_states, ops.space.dim)) * 10.0 ** rng.uniform(-1, 1, (n_states, 1))
    out = {}
    for N in Ns:
        c = project_sigma(ops.noise, N).certify(X)
        out[N] = (c["v_margin"], c["h_margin"], n_states)
    return out


def _probe(cfg, ops):
    rng = np.random.default_rng(cfg.seed + 1)
    u = ops.space.random_state(rng, 1.0)
    return sigma_convergence_probe(ops.noise, u, 1.0, PROBE_LADDER)


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> EnsembleSummary:
    """Full ladder study; writes manifest, per-path CSVs, summary and verdicts."""
    from .report import evaluate_verdicts, write_verdicts

    cfg.validate()
    started = datetime.datetime.now(datetime.timezone.utc)
    asm = assemble(cfg)
    ops = asm.ops
    report = verify_axioms(ops, samples=cfg.axiom_samples, seed=cfg.seed)
    report.require_valid()
    thr = thresholds(cfg.scheme.T, ops.c3, ops.c4, min(cfg.ladder), uniform=cfg.require_uniform)
    if not thr.existence_ok:
        raise StepFailure(f"ladder starts below N0={thr.N0}", [])
    if not thr.uniform_ok:
        from ..noise import ConfigurationError

        raise ConfigurationError(f"ladder starts below N1={thr.N1} (c5={thr.c5:.4g})")
    records, endpoints, failures = run_ladder(cfg, list(cfg.ladder))
    rows = summarize(
        cfg, records, endpoints, failures, report, _probe(cfg, ops),
        _sigma_margins(cfg, ops, cfg.ladder), thr,
    )
    summary = EnsembleSummary(cfg, records, rows, failures, report.lines())
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        cols = path_columns(cfg)
        for N, recs in records.items():
            write_csv(out / f"paths_N{N}.csv", cols, recs)
        write_csv(out / "summary.csv", SUMMARY_COLUMNS, rows)
        verdicts = evaluate_verdicts(rows, cfg.to_dict())
        write_verdicts(out / "verdicts.txt", verdicts)
        write_manifest(out, cfg, started, failures, report.lines())
    return summary


# ---------------------------------------------------------------------------
# persistence


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    Path(path).write_bytes(buf.getvalue().encode("utf-8"))


def read_csv(path: Path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def git_hash() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"], capture_output=True, text=True, timeout=5,
            cwd=Path(__file__).resolve().parent,
        )
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def write_manifest(out: Path, cfg: ExperimentConfig, started, failures, axiom_lines) -> None:
    manifest = {
        "config": cfg.to_dict(),
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "git_hash": git_hash(),
        "started": started.isoformat(),
        "finished": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "versions": {
            "package": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "master_steps": cfg.master_steps,
        "failures": failures,
        "axioms": axiom_lines,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str), encoding="utf-8")
