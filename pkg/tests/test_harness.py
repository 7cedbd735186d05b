import json

import pytest

from distortlab.harness.cli import EXIT_CONFIG, EXIT_OK, EXIT_VIOLATION, main
from distortlab.harness.config import ConfigError, ScenarioConfig, config_from_dict, load_config
from distortlab.harness.report import METRICS_COLUMNS, SCHEMA_VERSION, csv_text, format_value, read_csv_rows
from distortlab.harness.runner import run_scenario, sweep_frontier, verify_bayes_suite

SMALL = {
    "scenario": "small",
    "task": {"model": "linear", "input_dim": 3},
    "federation": {"n_clients": 2, "samples_per_client": 1, "rounds": 2},
    "distortion": {"mode": "learn_to_distort", "eps1": 0.5},
    "attack": {"iters": 40, "n_seeds": 2},
    "bayes": {"corpus_size": 6, "alphas": [0.0, 0.5]},
}


def _write(tmp_path, text, name="c.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_minimal_config_gets_defaults(tmp_path):
    cfg = load_config(_write(tmp_path, 'scenario = "m"\n'))
    assert cfg == ScenarioConfig(scenario="m")
    assert cfg.attack.iters == 500 and cfg.federation.n_clients == 2
    assert cfg.bayes.alphas == (0.1, 0.25, 0.5, 0.75, 0.9)


def test_unknown_keys_are_named(tmp_path):
    with pytest.raises(ConfigError, match="federation.n_client"):
        load_config(_write(tmp_path, "[federation]\nn_client = 2\n"))
    with pytest.raises(ConfigError, match="colour"):
        load_config(_write(tmp_path, "colour = 1\n"))


@pytest.mark.parametrize("text,field", [
    ("[federation]\nn_clients = 0\n", "n_clients"),
    ("[federation]\nrounds = 0\n", "rounds"),
    ("[task]\nmodel = 'mlp'\n", "hidden"),
    ("[sweep]\neps1 = [0.5, 0.5]\n", "sweep.eps1"),
    ("[attack]\ntarget_client = 5\n", "target_client"),
    ("[federation]\nlr = 'fast'\n", "federation.lr"),
])
def test_validation_errors_name_the_field(tmp_path, text, field):
    with pytest.raises(ConfigError) as info:
        load_config(_write(tmp_path, text))
    assert field in str(info.value)


def test_parse_errors_report_position(tmp_path):
    with pytest.raises(ConfigError, match="line 2"):
        load_config(_write(tmp_path, "seed = 1\nseed = = 2\n"))


def test_format_value():
    assert format_value(0.1 + 0.2) == "0.3"
    assert format_value(1 / 3) == "0.333333333"
    assert format_value(None) == "" and format_value(float("nan")) == ""
    assert format_value(True) == "1" and format_value(3) == "3"


def test_csv_has_schema_row_and_stable_header():
    text = csv_text([{"scenario": "s", "seed": 0}], METRICS_COLUMNS, "metrics")
    lines = text.splitlines()
    assert lines[0] == f"# {SCHEMA_VERSION} metrics"
    assert lines[1] == "scenario,seed,eps1,round,eps_p,eps_u,delta_extent,leak_bound,gate,c2,cb,p_exp"


def test_run_rows_are_schema_complete_and_deterministic():
    cfg = config_from_dict(SMALL)
    a, b = run_scenario(cfg), run_scenario(cfg, jobs=2)
    assert len(a.rows) == 2 * 2
    assert all(set(METRICS_COLUMNS) <= set(r) for r in a.rows)
    assert csv_text(a.rows, METRICS_COLUMNS, "m") == csv_text(b.rows, METRICS_COLUMNS, "m")
    assert [(r["seed"], r["round"]) for r in a.rows] == [(0, 1), (0, 2), (1, 1), (1, 2)]


def test_sweep_single_zero_point_is_the_baseline():
    run, frontier = sweep_frontier(config_from_dict(SMALL), [0.0])
    assert len(frontier) == 1
    assert frontier[0]["mean_eps_u"] == 0 and frontier[0]["mean_delta_extent"] == 0
    with pytest.raises(ValueError, match="duplicate"):
        sweep_frontier(config_from_dict(SMALL), [0.0, 1.0, 0.0])


def test_sweep_has_one_row_per_grid_point():
    _, frontier = sweep_frontier(config_from_dict(SMALL), [2.0, 0.0, 1.0])
    assert [f["eps1"] for f in frontier] == [0.0, 1.0, 2.0]
    assert all("eps1_threshold" in f for f in frontier)


def test_verify_suite_with_alpha_zero():
    report = verify_bayes_suite(config_from_dict(SMALL))
    js_rows = [r for r in report.rows if r["alpha"] == 0.0 and r["check"] == "lemma_gjsd"]
    assert js_rows and all(r["lhs"] == 0 for r in js_rows)
    assert report.summary["checks"]["lemma_gjsd"]["violations"] == 0
    assert report.violations == 0


def test_cli_exit_codes(tmp_path, capsys):
    good = _write(tmp_path, json_to_toml(SMALL))
    out = tmp_path / "out"
    assert main(["run", str(good), "--out", str(out)]) == EXIT_OK
    rows = read_csv_rows(out / "small" / "metrics.csv")
    assert len(rows) == 4 and rows[0]["scenario"] == "small"
    summary = json.loads((out / "small" / "summary.json").read_text())
    assert summary["n_rows"] == 4
    assert main(["sweep", str(good), "--eps1", "0,1", "--out", str(out)]) == EXIT_OK
    assert len(read_csv_rows(out / "small" / "frontier.csv")) == 2
    assert main(["sweep", str(good), "--eps1", "1,1", "--out", str(out)]) == EXIT_CONFIG
    assert main(["verify-bayes", str(good), "--out", str(out)]) == EXIT_OK
    bad = _write(tmp_path, "[federation]\nn_clients = 0\n", "bad.toml")
    assert main(["run", str(bad)]) == EXIT_CONFIG
    assert "n_clients" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.toml")]) == EXIT_CONFIG
    # Entry 17 of the seed-0 corpus violates an asserted check.
    violating = _write(tmp_path, 'scenario = "v"\n[bayes]\ncorpus_size = 18\n', "v.toml")
    assert main(["verify-bayes", str(violating), "--out", str(out)]) == EXIT_VIOLATION
    assert main(["fit-constants", str(good), "--out", str(out)]) == EXIT_OK
    assert set(json.loads((out / "small" / "constants.json").read_text())) >= {"c2", "c_b", "p"}


def test_seed_override_changes_output(tmp_path):
    good = _write(tmp_path, json_to_toml(SMALL))
    main(["run", str(good), "--out", str(tmp_path / "a")])
    main(["run", str(good), "--out", str(tmp_path / "b"), "--seed", "5"])
    main(["run", str(good), "--out", str(tmp_path / "c"), "--jobs", "2"])
    a = (tmp_path / "a/small/metrics.csv").read_bytes()
    assert a != (tmp_path / "b/small/metrics.csv").read_bytes()
    assert a == (tmp_path / "c/small/metrics.csv").read_bytes()


def json_to_toml(raw: dict) -> str:
    lines = []
    for key, value in raw.items():
        if not isinstance(value, dict):
            lines.append(f"{key} = {json.dumps(value)}")
    for key, value in raw.items():
        if isinstance(value, dict):
            lines.append(f"[{key}]")
            lines.extend(f"{k} = {json.dumps(v)}" for k, v in value.items())
    return "\n".join(lines) + "\n"
