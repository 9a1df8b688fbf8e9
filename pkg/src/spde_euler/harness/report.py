"""Verdicts for the acceptance criteria, computed from the long-format summary.

Everything here reads only ``summary.csv`` rows, so a persisted run can be
re-rendered without recomputation.  Ratio and flatness thresholds are
policy choices; the verdict lines say so.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

from .stats import Z95

DECAY_RATIO = 0.9
UNIFORM_FLATNESS = 0.2
ES_BOUND_GROWTH = 1.5
COUPLING_RATIO = 0.75
GAP_IDENTITY_TOL = 1e-12


@dataclasses.dataclass(frozen=True)
class Verdict:
    claim: str
    title: str
    statistic: str
    threshold: str
    status: str  # PASS, FAIL, SKIP or INFO
    note: str = ""

    def line(self) -> str:
        s = f"{self.claim:<4} {self.status:<4}  {self.title:<28} {self.statistic}  threshold: {self.threshold}"
        return s + (f"  [{self.note}]" if self.note else "")


def _table(rows):
    t = {}
    for r in rows:
        t[(int(r["N"]), r["statistic"])] = {k: (float(v) if k not in ("statistic",) else v) for k, v in r.items()}
    return t


def _ladder(t) -> list[int]:
    return sorted({N for (N, s) in t if s == "paths_ok"})


def _status(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


def _ratio_upper(t, Na, Nb, stat):
    a, b = t[(Na, stat)], t[(Nb, stat)]
    if a["mean"] == 0:
        return (0.0, 0.0) if b["mean"] == 0 else (float("inf"), float("inf"))
    r = b["mean"] / a["mean"]
    rel_a = a["stderr"] / a["mean"]
    rel_b = b["stderr"] / b["mean"] if b["mean"] else 0.0
    return r, r + Z95 * abs(r) * (rel_a**2 + rel_b**2) ** 0.5


def evaluate_verdicts(rows, config: dict | None = None) -> list[Verdict]:
    t = _table(rows)
    ladder = _ladder(t)
    out = []
    suite = "evaluated by the acceptance suite"

    # 1: axioms of the configured model
    if (0, "axiom_valid") in t:
        worst = ", ".join(
            f"{s[6:]}={t[(0, s)]['mean']:.2e}" for (N, s) in t if N == 0 and s.startswith("axiom_") and s != "axiom_valid"
        )
        out.append(Verdict("C1", "axiom suite", worst, "all axioms pass", _status(t[(0, "axiom_valid")]["mean"] == 1.0)))
    else:
        out.append(Verdict("C1", "axiom suite", "-", "-", "SKIP", suite))

    out.append(Verdict("C2", "linear-scheme oracle", "-", "1e-12 per step", "SKIP", suite))

    # 3: energy certificates
    rej = sum(t[(N, "rejected_steps")]["mean"] for N in ladder if (N, "rejected_steps") in t)
    failed = sum(t[(N, "paths_failed")]["mean"] for N in ladder)
    slack = min((t[(N, "min_rel_slack")]["mean"] for N in ladder if (N, "min_rel_slack") in t), default=float("nan"))
    out.append(Verdict(
        "C3", "energy certificates", f"rejected={int(rej)} failed_paths={int(failed)} min_rel_slack={slack:.3e}",
        "0 rejected, slack >= -1e-9", _status(rej == 0 and failed == 0),
    ))

    # 4: sigma_N conditions and the convergence probe
    margins = [t[k]["mean"] for k in t if k[1] in ("sigma_v_margin", "sigma_h_margin")]
    probe = [t[k]["mean"] for k in sorted(k for k in t if k[1] == "sigma_probe")]
    if margins and probe:
        mono = all(b <= a * (1 + 1e-9) + 1e-15 for a, b in zip(probe[1:], probe[2:]))
        ok = min(margins) >= 0 and mono and probe[-1] <= probe[0] + 1e-15
        out.append(Verdict(
            "C4", "sigma_N conditions", f"min_margin={min(margins):.3e} probe={['%.2e' % p for p in probe]}",
            "margins >= 0, probe non-increasing", _status(ok),
        ))
    else:
        out.append(Verdict("C4", "sigma_N conditions", "-", "-", "SKIP", "no probe rows"))

    # 5: interpolation gap identity and decay
    if len(ladder) >= 2:
        err = max(t[(N, "gap_rel_err_max")]["mean"] for N in ladder)
        ratios = [_ratio_upper(t, a, b, "gap_quad") for a, b in zip(ladder, ladder[1:])]
        ok = err <= GAP_IDENTITY_TOL and all(u <= DECAY_RATIO for _, u in ratios)
        out.append(Verdict(
            "C5", "interpolation gap", f"max_rel_err={err:.1e} ratios={_fmt_ratios(ratios)}",
            f"identity 1e-12, upper95(ratio) <= {DECAY_RATIO}", _status(ok), "ratio threshold is policy",
        ))
        # 6: error terms
        rd = [_ratio_upper(t, a, b, "ed_l2vdual") for a, b in zip(ladder, ladder[1:])]
        rs = [_ratio_upper(t, a, b, "es_l2h") for a, b in zip(ladder, ladder[1:])]
        bound = [t[(N, "es_bound")]["mean"] for N in ladder]
        growth = max(bound) / bound[0] if bound[0] > 0 else (1.0 if max(bound) == 0 else float("inf"))
        ok = all(u <= DECAY_RATIO for _, u in rd + rs) and growth <= ES_BOUND_GROWTH
        out.append(Verdict(
            "C6", "error-term decay",
            f"ED={_fmt_ratios(rd)} ES={_fmt_ratios(rs)} ES_bound_growth={growth:.3f}",
            f"upper95(ratio) <= {DECAY_RATIO}, bound growth <= {ES_BOUND_GROWTH}", _status(ok),
            "thresholds are policy",
        ))
        # 7: uniform bound
        u = [t[(N, "uniform_stat")]["mean"] for N in ladder]
        flat = (max(u) - min(u)) / max(u) if max(u) > 0 else 0.0
        out.append(Verdict(
            "C7", "uniform energy bound", f"means={['%.4g' % x for x in u]} variation={flat:.3f}",
            f"< {UNIFORM_FLATNESS}", _status(flat < UNIFORM_FLATNESS), "threshold is policy",
        ))
    else:
        for c, title in (("C5", "interpolation gap"), ("C6", "error-term decay"), ("C7", "uniform energy bound")):
            out.append(Verdict(c, title, "-", "-", "SKIP", "needs at least two ladder levels"))

    # 8: BDG on scheme martingales (the sign-walk oracle is exact and checked directly)
    from ..martingale import sign_walk_oracle

    oracle = sign_walk_oracle()
    bdg = [(N, t[(N, "bdg_pass")]["mean"], t[(N, "bdg_ratio")]["mean"]) for N in ladder if (N, "bdg_pass") in t]
    if bdg and all(p >= 0 for _, p, _ in bdg):
        ok = oracle.passed and all(p == 1.0 for _, p, _ in bdg)
        out.append(Verdict(
            "C8", "discrete BDG (q=1)",
            f"oracle {oracle.lhs:.4f}<={oracle.rhs:.1f}; ratios={['N%d:%.3f' % (N, r) for N, _, r in bdg]}",
            "lhs <= 3 rhs + 3 SE", _status(ok),
        ))
    elif bdg:
        out.append(Verdict(
            "C8", "discrete BDG", f"ratios={['N%d:%.3f' % (N, r) for N, _, r in bdg]}", "no constant for q != 1",
            "INFO",
        ))
    else:
        out.append(Verdict("C8", "discrete BDG", "-", "-", "SKIP", "no martingale rows"))

    out.append(Verdict("C9", "Stratonovich oracle", "-", "4 SE of exp(1/2)", "SKIP", suite))

    # 10: law-distance trend
    ks = [(N, t[(N, "ks_energy_l2")]) for N in ladder if (N, "ks_energy_l2") in t]
    if len(ks) >= 2:
        ok = all(b["mean"] <= a["mean"] + max(a["stderr"], b["stderr"]) for (_, a), (_, b) in zip(ks, ks[1:]))
        out.append(Verdict(
            "C10", "law-distance trend", f"ks={['N%d:%.3f' % (N, r['mean']) for N, r in ks]}",
            "non-increasing within 1.36 sqrt(2/n)", _status(ok),
        ))
    else:
        out.append(Verdict("C10", "law-distance trend", "-", "-", "SKIP", "needs three ladder levels"))

    out.append(Verdict("C11", "determinism", "-", "byte-identical summary.csv", "SKIP", suite))

    # pathwise coupling (reported, not a numbered criterion)
    cm = [t[(N, "coupling_median")]["mean"] for N in ladder if (N, "coupling_median") in t]
    if len(cm) >= 2 and not (config or {}).get("independent_paths", False):
        rat = [b / a if a > 0 else 0.0 for a, b in zip(cm, cm[1:])]
        out.append(Verdict(
            "--", "pathwise coupling", f"median ratios={['%.3f' % r for r in rat]}", f"<= {COUPLING_RATIO}",
            "INFO", "policy diagnostic; " + ("within threshold" if all(r <= COUPLING_RATIO for r in rat) else "above threshold"),
        ))
    return out


def _fmt_ratios(ratios) -> str:
    return "[" + ", ".join(f"{r:.3f}(<{u:.3f})" for r, u in ratios) + "]"


def render(verdicts: list[Verdict]) -> str:
    return "\n".join(v.line() for v in verdicts) + "\n"


def write_verdicts(path: Path, verdicts: list[Verdict]) -> None:
    Path(path).write_text(render(verdicts), encoding="utf-8")


def exit_code(verdicts: list[Verdict]) -> int:
    return 1 if any(v.status == "FAIL" for v in verdicts) else 0


def long_format(rows) -> list[dict]:
    """Plot-ready rows ``(N, statistic, value, ci_low, ci_high)``."""
    return [
        {"N": r["N"], "statistic": r["statistic"], "value": r["mean"], "ci_low": r["ci_low"], "ci_high": r["ci_high"]}
        for r in rows
    ]
