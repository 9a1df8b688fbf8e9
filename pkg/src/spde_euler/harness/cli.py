"""Command line: ``spde-euler {validate,simulate,converge,bdg,report}``."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from ..galerkin import ValidationError
from ..martingale import bdg_from_samples, build_martingale, mean_zero_test, quadratic_variation, sign_walk_oracle
from ..noise import ConfigurationError, project_sigma
from ..operators import InvalidModelError, verify_axioms
from ..scheme import StepFailure, prepare_initial, run_path, thresholds
from .config import ExperimentConfig, assemble, load_config, scheme_config
from .experiment import read_csv, run_chunk, run_experiment, wiener_for, write_csv
from .report import evaluate_verdicts, exit_code, long_format, render, write_verdicts


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        changes["workers"] = args.workers
    if getattr(args, "out", None) is not None:
        changes["output_dir"] = args.out
    if getattr(args, "independent_paths", False):
        changes["independent_paths"] = True
    cfg = dataclasses.replace(cfg, **changes)
    cfg.validate()
    return cfg


def cmd_validate(cfg: ExperimentConfig, args) -> int:
    ops = assemble(cfg).ops
    rep = verify_axioms(ops, samples=cfg.axiom_samples, seed=cfg.seed)
    print("\n".join(rep.lines()))
    ok = rep.valid
    for N in cfg.ladder:
        thr = thresholds(cfg.scheme.T, ops.c3, ops.c4, N, uniform=cfg.require_uniform)
        print(f"N={N:<6} N0={thr.N0} N1={thr.N1} c5={thr.c5:.4g} existence={'ok' if thr.existence_ok else 'FAIL'}"
              f" uniform={'ok' if thr.uniform_ok else 'FAIL'}")
        ok = ok and thr.ok
    return 0 if ok else 1


def cmd_simulate(cfg: ExperimentConfig, args) -> int:
    asm = assemble(cfg)
    ops = asm.ops
    N = args.N or cfg.ladder[0]
    sc = scheme_config(cfg, N)
    w = wiener_for(cfg, args.path_id, N, ops.noise.K)
    u0 = prepare_initial(asm.u0, N, ops.space)
    path = run_path(ops, sc, project_sigma(ops.noise, N), w, asm.forcing, u0)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    d = ops.space.dim
    cols = ["n", "t"] + [f"u{k}" for k in range(d)] + ["residual", "iterations", "energy_slack", "accepted"]
    rows = []
    for n in range(N + 1):
        r = {"n": n, "t": n * sc.dt}
        r.update({f"u{k}": path.states[n, k] for k in range(d)})
        if n == 0:
            r.update({"residual": 0.0, "iterations": 0, "energy_slack": 0.0, "accepted": True})
        else:
            r.update({"residual": path.residuals[n - 1], "iterations": path.iterations[n - 1],
                      "energy_slack": path.slacks[n - 1], "accepted": bool(path.accepted[n - 1])})
        rows.append(r)
    target = out / f"path{args.path_id}_N{N}.csv"
    write_csv(target, cols, rows)
    print(f"wrote {target}  admissible={path.admissible}")
    return 0 if path.admissible else 1


def cmd_converge(cfg: ExperimentConfig, args) -> int:
    run_experiment(cfg, cfg.output_dir)
    text = (Path(cfg.output_dir) / "verdicts.txt").read_text(encoding="utf-8")
    print(text, end="")
    rows = read_csv(Path(cfg.output_dir) / "summary.csv")
    return exit_code(evaluate_verdicts(rows, cfg.to_dict()))


def cmd_bdg(cfg: ExperimentConfig, args) -> int:
    N = cfg.bdg.N
    paths = []
    for start in range(0, cfg.ensemble_size, cfg.chunk_size):
        ids = list(range(start, min(start + cfg.chunk_size, cfg.ensemble_size)))
        _, _, fails, pairs = run_chunk(cfg, N, ids, with_stats=False)
        if fails:
            print(f"{len(fails)} paths failed at N={N}", file=sys.stderr)
            return 1
        paths.extend(p for _, p in pairs)
    marts = [build_martingale(p, 1) for p in paths]
    mx = np.array([np.max(np.abs(m.values)) ** cfg.bdg.q for m in marts])
    aq = np.array([quadratic_variation(m).A[-1] ** (cfg.bdg.q / 2) for m in marts])
    res = bdg_from_samples(mx, aq, cfg.bdg.q)
    oracle = sign_walk_oracle()
    ends = np.array([m.values[-1] for m in marts])
    mean, se, mz = mean_zero_test(ends)
    Q = np.array([m.Q[-1] for m in marts])
    A = np.array([quadratic_variation(m).A[-1] for m in marts])
    print(f"sign-walk oracle: E max|M| = {oracle.lhs:.6f} <= {oracle.rhs:.1f}  {'PASS' if oracle.passed else 'FAIL'}")
    verdict = {True: "PASS", False: "FAIL", None: "ratio only"}[res.passed]
    print(f"N={N} q={cfg.bdg.q}: lhs={res.lhs:.6g} rhs={res.rhs:.6g} ratio={res.ratio:.4f} se={res.stderr:.3g}  {verdict}")
    print(f"mean-zero of M^(1,N): mean={mean:.4g} se={se:.3g}  {'PASS' if mz else 'FAIL'}")
    print(f"E[Q] = {Q.mean():.6g}   E[sum |sigma_N|^2 dt] = {np.mean([np.sum(p.sigmas**2) * p.dt for p in paths]):.6g}"
          f"   E[A^N] = {A.mean():.6g}")
    ok = oracle.passed and res.passed is not False and mz
    return 0 if ok else 1


def cmd_report(args) -> int:
    d = Path(args.out)
    rows = read_csv(d / "summary.csv")
    verdicts = evaluate_verdicts(rows)
    print(render(verdicts), end="")
    write_verdicts(d / "verdicts.txt", verdicts)
    write_csv(d / "summary_long.csv", ["N", "statistic", "value", "ci_low", "ci_high"], long_format(rows))
    return exit_code(verdicts)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spde-euler", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_config=True):
        sp.add_argument("--config", required=needs_config, help="YAML experiment configuration")
        sp.add_argument("--seed", type=int, help="override the base seed")
        sp.add_argument("--workers", type=int, help="worker processes")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--independent-paths", action="store_true", help="fresh Brownian paths per N")

    common(sub.add_parser("validate", help="axiom and threshold report"))
    sp = sub.add_parser("simulate", help="run one path and dump its states")
    common(sp)
    sp.add_argument("--N", type=int, help="number of steps (default: first ladder level)")
    sp.add_argument("--path-id", type=int, default=0)
    common(sub.add_parser("converge", help="full ladder study"))
    common(sub.add_parser("bdg", help="martingale suite at bdg.N"))
    sp = sub.add_parser("report", help="re-render verdicts from a persisted summary")
    sp.add_argument("--out", required=True, help="directory holding summary.csv")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            return cmd_report(args)
        cfg = _apply_overrides(load_config(args.config), args)
        return {
            "validate": cmd_validate,
            "simulate": cmd_simulate,
            "converge": cmd_converge,
            "bdg": cmd_bdg,
        }[args.command](cfg, args)
    except (ConfigurationError, ValidationError, InvalidModelError, StepFailure, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
