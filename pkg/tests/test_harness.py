import json

import numpy as np
import pytest
import yaml

from spde_euler.harness.cli import main
from spde_euler.harness.config import config_from_dict, load_config
from spde_euler.harness.experiment import read_csv, run_experiment, write_csv
from spde_euler.harness.report import Verdict, evaluate_verdicts, exit_code
from spde_euler.harness.stats import ks_buffer, law_distance, mean_ci, ratio_upper
from spde_euler.noise import ConfigurationError

LINEAR = {
    "model": {"kind": "diagonal-linear", "nu": 1.0, "weights": [1.0, 2.0, 4.0]},
    "noise": {"regime": "additive", "alpha": [{0: 0.12}, {1: 0.08}]},
    "initial": {"modes": {0: 1.0, 1: -0.5}},
    "forcing": {"kind": "deterministic-function", "profile": {0: 0.5}, "time_fn": "sin"},
    "ladder": [32, 64, 128],
    "ensemble_size": 60,
    "chunk_size": 25,
    "axiom_samples": 100,
    "bdg": {"N": 32},
    "seed": 5,
}


def _cfg(**over):
    d = json.loads(json.dumps(LINEAR))
    d.update(over)
    return config_from_dict(d)


def test_config_defaults_and_master_grid():
    cfg = _cfg()
    assert cfg.master_steps == 256
    assert cfg.noise.alpha == [{0: 0.12}, {1: 0.08}]


@pytest.mark.parametrize(
    "override",
    [
        {"ladder": []},
        {"ladder": [64, 32]},
        {"bogus": 1},
        {"noise": {"regime": "colored"}},
        {"noise": {"regime": "nemytskii-ito", "psi": {"name": "cubic"}}},
        {"functionals": ["entropy"]},
        {"ensemble_size": 0},
        {"seminorms": {"alpha": 0.2, "p": 4.0}},
        {"model": {"kind": "diagonal-linear", "nu": -1.0}},
        {"require_uniform": "yes"},
        {"bdg": {"N": 48}},
    ],
)
def test_config_errors(override):
    with pytest.raises(ConfigurationError):
        _cfg(**override)


def test_load_config_yaml(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump(LINEAR))
    assert load_config(p).ladder == [32, 64, 128]


def test_law_distance_examples():
    assert law_distance([1.0, 2.0], [1.0, 2.0]) == (0.0, 0.0)
    assert law_distance([0.0, 0.0], [1.0, 1.0]) == (1.0, 1.0)
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal(10000), rng.standard_normal(10000) + 0.1
    ks, w1 = law_distance(a, b)
    assert abs(w1 - 0.1) < 0.03
    assert ks_buffer(10000, 10000) == pytest.approx(1.358 * np.sqrt(2e-4))
    with pytest.raises(ValueError):
        law_distance([], [1.0])


def test_mean_ci_and_ratio():
    ci = mean_ci([1.0, 2.0, 3.0, np.nan])
    assert ci.n == 3 and ci.mean == 2.0 and ci.low < 2.0 < ci.high
    r, up = ratio_upper(mean_ci([2.0, 2.0]), mean_ci([1.0, 1.0]))
    assert r == up == 0.5


def test_degenerate_ensemble_matches_recursion(tmp_path):
    cfg = config_from_dict({
        "model": {"kind": "diagonal-linear", "nu": 1.0, "weights": [2.0]},
        "initial": {"modes": {0: 1.0}},
        "ladder": [8], "bdg": {"N": 8}, "ensemble_size": 1, "axiom_samples": 10, "master_refinement": 1,
    })
    summary = run_experiment(cfg, tmp_path)
    dt = 1 / 8
    u = [1.0]
    for _ in range(8):
        u.append(u[-1] / (1 + 2 * dt))
    u = np.array(u)
    t = summary.table()
    assert t[(8, "l2H")]["mean"] == pytest.approx(dt * np.sum(u[:8] ** 2), rel=1e-13)
    assert t[(8, "linfH")]["mean"] == pytest.approx(1.0)
    assert t[(8, "l2H")]["stderr"] == 0.0
    assert (tmp_path / "summary.csv").exists() and (tmp_path / "manifest.json").exists()


def test_run_is_deterministic_and_worker_independent(tmp_path):
    cfg = _cfg(ensemble_size=30, ladder=[32, 64])
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    cfg2 = _cfg(ensemble_size=30, ladder=[32, 64], workers=2)
    run_experiment(cfg2, tmp_path / "c")
    a = (tmp_path / "a" / "summary.csv").read_bytes()
    assert a == (tmp_path / "b" / "summary.csv").read_bytes()
    assert a == (tmp_path / "c" / "summary.csv").read_bytes()
    assert b"\r\n" in a


def test_linear_ladder_verdicts(tmp_path):
    summary = run_experiment(_cfg(), tmp_path)
    verdicts = evaluate_verdicts(summary.rows, summary.config.to_dict())
    by = {v.claim: v for v in verdicts}
    assert [f"C{i}" for i in range(1, 12)] == [v.claim for v in verdicts if v.claim != "--"]
    for c in ("C1", "C3", "C4", "C5", "C6", "C8"):
        assert by[c].status == "PASS", by[c].line()
    # pathwise coupling on a linear additive model: Euler error halves per doubling
    t = summary.table()
    ratio = t[(64, "coupling_median")]["mean"] / t[(32, "coupling_median")]["mean"]
    assert ratio <= 0.75
    rows = read_csv(tmp_path / "summary.csv")
    assert {r["statistic"] for r in rows} >= {"gap_quad", "es_bound", "ks_energy_l2", "bdg_pass"}
    paths = read_csv(tmp_path / "paths_N32.csv")
    assert len(paths) == 60 and list(paths[0])[:3] == ["path_id", "N", "l2H"]


def test_exit_code_on_failure():
    assert exit_code([Verdict("C1", "x", "-", "-", "PASS")]) == 0
    assert exit_code([Verdict("C1", "x", "-", "-", "FAIL"), Verdict("C2", "y", "-", "-", "SKIP")]) == 1


def test_csv_round_trip(tmp_path):
    p = tmp_path / "x.csv"
    write_csv(p, ["a", "b"], [{"a": 0.1, "b": "p,q"}])
    assert read_csv(p) == [{"a": "0.1", "b": "p,q"}]


def test_cli(tmp_path, capsys):
    cfgfile = tmp_path / "c.yaml"
    out = tmp_path / "run"
    cfg = dict(LINEAR, ensemble_size=20, ladder=[32, 64], output_dir=str(out))
    cfgfile.write_text(yaml.safe_dump(cfg))
    assert main(["validate", "--config", str(cfgfile)]) == 0
    assert main(["simulate", "--config", str(cfgfile), "--N", "32", "--path-id", "3"]) == 0
    assert (out / "path3_N32.csv").exists()
    code = main(["converge", "--config", str(cfgfile)])
    text = capsys.readouterr().out
    assert code == 0 and "C5" in text and "C11" in text
    assert main(["report", "--out", str(out)]) == 0
    assert (out / "summary_long.csv").exists()
    assert main(["bdg", "--config", str(cfgfile), "--seed", "9"]) == 0
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump(dict(LINEAR, bogus=1)))
    assert main(["validate", "--config", str(bad)]) == 2
    assert main(["validate", "--config", str(tmp_path / "missing.yaml")]) == 2
    empty = tmp_path / "empty.yaml"
    empty.write_text(yaml.safe_dump(dict(LINEAR, ladder=[])))
    assert main(["converge", "--config", str(empty)]) == 2


def test_failed_criterion_gives_nonzero_exit(tmp_path):
    summary = run_experiment(_cfg(ensemble_size=20, ladder=[32, 64]), tmp_path)
    rows = [dict(r) for r in summary.rows]
    for r in rows:
        if r["statistic"] == "rejected_steps":
            r["mean"] = 3.0
    write_csv(tmp_path / "summary.csv", list(rows[0]), rows)
    assert main(["report", "--out", str(tmp_path)]) == 1
