import json

import numpy as np
import pytest

from cmefsp import ConfigError, lotka_volterra
from cmefsp.cli import EXIT_BUDGET, EXIT_CAPACITY, EXIT_CONFIG, EXIT_OK, main, parse_config, run
from cmefsp.solver import verify_budget

BD = {
    "model": {"builtin": "birth_death", "params": {"lam": 2.0, "mu": 1.0}},
    "solver": {"tf": 1.0, "dt": 0.1, "alpha": 1e-7, "snapshot_every": 2},
}

INLINE = {
    "model": {
        "species": ["X"],
        "reactions": [
            {"name": "birth", "products": {"X": 1}, "propensity": {"type": "constant", "rate": 1.5}},
            {"name": "death", "reactants": {"X": 1}, "propensity": {"type": "mass_action", "rate": 1.0}},
        ],
    },
    "x0": [2],
    "solver": {"tf": 0.5, "dt": 0.1, "alpha": 1e-7},
}


def read_tsv(path):
    lines = path.read_text().splitlines()
    head = lines[0].split("\t")
    return head, [line.split("\t") for line in lines[1:]]


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def test_minimal_config_defaults():
    cfg = parse_config(json.dumps({"model": {"builtin": "birth_death"}}))
    assert cfg.x0 == (5,)
    assert cfg.solver.eps_time == 2 * cfg.solver.alpha
    assert cfg.snapshots and cfg.error_trace and cfg.state_size and cfg.ssa is None


def test_unknown_key_named():
    with pytest.raises(ConfigError, match="alpah"):
        parse_config(json.dumps({"model": {"builtin": "birth_death"}, "solver": {"alpah": 1e-6}}))
    with pytest.raises(ConfigError, match="colour"):
        parse_config(json.dumps({"model": {"builtin": "birth_death"}, "colour": 1}))
    with pytest.raises(ConfigError, match="lamda"):
        parse_config(json.dumps({"model": {"builtin": "birth_death", "params": {"lamda": 1}}}))


def test_syntax_error_position():
    with pytest.raises(ConfigError, match="line 2, column"):
        parse_config('{"model":\n  {"builtin": "birth_death",}}')


def test_model_exclusivity_and_species():
    with pytest.raises(ConfigError, match="exactly one"):
        parse_config(json.dumps({"model": {"builtin": "birth_death", "species": ["X"]}}))
    bad = json.loads(json.dumps(INLINE))
    bad["model"]["reactions"][0]["products"] = {"Y": 1}
    with pytest.raises(ConfigError, match="unknown species 'Y'"):
        parse_config(json.dumps(bad))
    with pytest.raises(ConfigError, match="x0"):
        parse_config(json.dumps({k: v for k, v in INLINE.items() if k != "x0"}))


def test_lv_budget_matches_verifier():
    for alpha, passed, bound in ((1e-6, True, 4e-4), (1e-4, False, 4e-2)):
        cfg = parse_config(json.dumps({"model": {"builtin": "lotka_volterra"}, "solver": {"alpha": alpha}}))
        d = verify_budget(cfg.solver)
        assert d.passed is passed
        assert d.bound == bound


def test_inline_model_runs(tmp_path):
    cfg = dict(INLINE, output={"dir": str(tmp_path / "o")})
    assert main(["--config", str(write(tmp_path, cfg))]) == EXIT_OK
    assert (tmp_path / "o" / "manifest.json").exists()


def test_smoke_run_outputs(tmp_path):
    cfg = dict(BD, output={"dir": str(tmp_path / "out"), "ssa": {"n": 200, "seed": 1}})
    assert main(["--config", str(write(tmp_path, cfg))]) == EXIT_OK
    out = tmp_path / "out"
    for f in ("snapshots.jsonl", "error_trace.tsv", "state_size.tsv", "ssa_comparison.tsv", "manifest.json"):
        assert (out / f).exists(), f
    for line in (out / "snapshots.jsonl").read_text().splitlines():
        rec = json.loads(line)
        probs = np.array(rec["probs"])
        assert abs(probs.sum() - 1) <= 1e-12 and (probs >= 0).all()
        assert len(rec["states"]) == len(probs)
    head, rows = read_tsv(out / "error_trace.tsv")
    assert head == ["t", "n_states_before", "n_states_after", "pruned_mass", "local_bound", "expmv_error", "cum_bound"]
    assert float(rows[-1][-1]) <= 1e-3
    head, _ = read_tsv(out / "ssa_comparison.tsv")
    assert head == ["t", "species", "fsp_mean", "ssa_mean", "ssa_sem"]
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "ok" and man["budget"]["passed"]


def test_outputs_deterministic(tmp_path):
    p = write(tmp_path, dict(BD, output={"ssa": {"n": 50}}))
    main(["--config", str(p), "--out", str(tmp_path / "a")])
    main(["--config", str(p), "--out", str(tmp_path / "b")])
    for f in ("snapshots.jsonl", "error_trace.tsv", "state_size.tsv", "ssa_comparison.tsv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    for m in (ma, mb):
        m.pop("wall_time"), m.pop("solve_wall_time"), m["config"]["output"].pop("dir")
    assert ma == mb


def test_lv_local_bound_column(tmp_path):
    cfg = {"model": {"builtin": "lotka_volterra"}, "solver": {"tf": 1.0}}
    p = write(tmp_path, cfg)
    assert main(["--config", str(p), "--out", str(tmp_path / "lv")]) == EXIT_OK
    _, rows = read_tsv(tmp_path / "lv" / "error_trace.tsv")
    for r in rows:
        assert float(r[4]) == 2 * float(r[3])


def test_budget_refusal_exit(tmp_path):
    p = write(tmp_path, BD)
    out = tmp_path / "r"
    assert main(["--config", str(p), "--out", str(out), "--alpha", "1e-2"]) == EXIT_BUDGET
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "refused" and man["failure"]["kind"] == "budget"
    assert main(["--config", str(p), "--out", str(out), "--alpha", "1e-2", "--override-budget"]) == EXIT_OK
    assert json.loads((out / "manifest.json").read_text())["budget_overridden"]


def test_capacity_exit_with_partial(tmp_path):
    cfg = {"model": {"builtin": "lotka_volterra"}, "solver": {"max_states": 200}}
    out = tmp_path / "cap"
    assert main(["--config", str(write(tmp_path, cfg)), "--out", str(out)]) == EXIT_CAPACITY
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "failed" and man["failure"]["kind"] == "capacity"
    assert (out / "error_trace.tsv").exists()


def test_config_error_exit(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"model": ')
    assert main(["--config", str(p)]) == EXIT_CONFIG
    assert "line 1" in capsys.readouterr().err


def test_flag_overrides(tmp_path):
    p = write(tmp_path, BD)
    out = tmp_path / "f"
    main(["--config", str(p), "--out", str(out), "--dt", "0.25", "--t-final", "0.5", "--mode", "absorbing",
          "--strategy", "prune_to_mass", "--snapshot-every", "1", "--seed", "4"])
    solver = json.loads((out / "manifest.json").read_text())["config"]["solver"]
    assert (solver["dt"], solver["tf"], solver["boundary"], solver["strategy"], solver["snapshot_every"], solver["seed"]) == (
        0.25, 0.5, "absorbing", "prune_to_mass", 1, 4)


def test_export_model_round_trip(tmp_path, capsys):
    assert main(["export-model", "lotka_volterra"]) == EXIT_OK
    text = capsys.readouterr().out
    cfg = parse_config(text)
    m = lotka_volterra()
    assert cfg.network == m.network and cfg.x0 == m.x0
    assert cfg.solver == m.config
    out = tmp_path / "m.json"
    assert main(["export-model", "toggle_switch", "--params", '{"beta1": 25}', "-o", str(out)]) == EXIT_OK
    assert json.loads(out.read_text())["model"]["reactions"][0]["propensity"]["amplitude"] == 25
    assert main(["export-model", "birth_death", "--params", '{"nope": 1}']) == EXIT_CONFIG


def test_run_returns_code(tmp_path):
    cfg = parse_config(json.dumps(dict(BD, output={"dir": str(tmp_path / "x")})))
    assert run(cfg) == EXIT_OK
