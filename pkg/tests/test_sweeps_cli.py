import json
from dataclasses import replace

import pytest

from csdp.cli import main
from csdp.model import ModelError
from csdp.sweeps import PRESETS, ExperimentConfig, load_config, render_table, run, run_sweep


class TestConfig:
    def test_presets_resolve(self):
        for name in PRESETS:
            assert load_config(name).sweep in (
                "leakage-vs-lambda", "leakage-vs-age", "leakage-vs-noise",
                "utility-sweep", "frontier", "oracle-validate", "reduce-check",
            )

    def test_unknown_sweep_kind_named(self):
        with pytest.raises(ModelError, match="sweep"):
            ExperimentConfig("make-plots")

    def test_unknown_source(self):
        with pytest.raises(ModelError, match="preset"):
            load_config("no-such-thing.yaml")

    def test_yaml_config(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text(
            "sweep: leakage-vs-age\n"
            "grids:\n  lambda: [0.75]\n  t: [0, 1, 2]\n  eps_c: [1.0]\n"
            "seed: 5\n"
        )
        config = load_config(str(path))
        assert config.sweep == "leakage-vs-age"
        assert config.seed == 5

    def test_yaml_config_missing_sweep(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text("grids: {}\n")
        with pytest.raises(ModelError, match="sweep"):
            load_config(str(path))


SMALL_AGE = ExperimentConfig(
    "leakage-vs-age", {"lambda": [0.5, 0.75], "t": [0, 1, 2], "eps_c": [1.0]}
)


class TestSweeps:
    def test_leakage_rows_carry_parameters(self):
        fields, rows, violations = run_sweep(SMALL_AGE)
        assert violations == []
        assert len(rows) == 6
        assert fields[:3] == ("lambda", "t", "eps_c")
        for row in rows:
            assert row["seed"] == SMALL_AGE.seed
            assert row["tight"] <= row["loose_linear"] + 1e-9

    def test_oracle_validate_clean(self):
        config = ExperimentConfig(
            "oracle-validate",
            {"lambda": [0.5, 1.0], "t": [0, 2], "eps_c": [2.0, 10.0]},
        )
        _, rows, violations = run_sweep(config)
        assert violations == []
        for row in rows:
            assert row["oracle"] <= row["tight"] + 1e-9

    def test_reduce_check_passes(self):
        _, rows, violations = run_sweep(PRESETS["reduce-check"])
        assert violations == []
        assert {r["case"] for r in rows} >= {"iid-age0-k1"}

    def test_frontier_rows(self):
        config = ExperimentConfig(
            "frontier", {"lambda": [0.5], "caps": [0.4, 0.8], "leakage_kind": "tight"}
        )
        fields, rows, violations = run_sweep(config)
        assert violations == []
        assert {r["mechanism"] for r in rows} == {"csdp", "adp", "ddp", "dp"}

    def test_utility_sweep_agreement(self):
        config = ExperimentConfig(
            "utility-sweep",
            {"lambda": [0.5], "age": [[0, 0], [2, 2]], "eps_c": [1.0],
             "samples": 2000},
        )
        _, rows, violations = run_sweep(config)
        assert violations == []

    def test_thread_determinism(self):
        serial = run_sweep(replace(SMALL_AGE, threads=1))
        threaded = run_sweep(replace(SMALL_AGE, threads=3))
        assert render_table(serial[0], serial[1], "csv") == render_table(
            threaded[0], threaded[1], "csv"
        )


class TestRunArtifacts:
    def test_run_writes_table_and_manifest(self, tmp_path):
        config = replace(SMALL_AGE, out_dir=str(tmp_path))
        code, paths, violations = run(config)
        assert code == 0 and violations == []
        table, manifest = paths
        body = open(table).read()
        assert body.splitlines()[0].startswith("lambda,t,eps_c")
        doc = json.loads(open(manifest).read())
        assert doc["sweep"] == "leakage-vs-age"
        assert doc["seed"] == config.seed

    def test_json_format(self, tmp_path):
        config = replace(SMALL_AGE, out_dir=str(tmp_path), fmt="json")
        _, paths, _ = run(config)
        rows = json.loads(open(paths[0]).read())
        assert rows[0]["lambda"] == 0.5

    def test_rerun_byte_identical(self, tmp_path):
        config = replace(SMALL_AGE, out_dir=str(tmp_path))
        run(config)
        first = open(tmp_path / "leakage-vs-age.csv", "rb").read()
        run(replace(config, threads=2))
        second = open(tmp_path / "leakage-vs-age.csv", "rb").read()
        assert first == second


class TestCli:
    def test_run_preset(self, tmp_path, capsys):
        code = main(["run", "--config", "reduce-check", "--out", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "reduce-check.csv").exists()

    def test_config_error_exit_code(self, capsys):
        assert main(["run", "--config", "missing.yaml"]) == 2

    def test_bad_flag_exit_code(self):
        assert main(["run", "--config", "reduce-check", "--format", "xml"]) == 2

    def test_custom_config_with_overrides(self, tmp_path):
        cfg = tmp_path / "c.yaml"
        cfg.write_text(
            "sweep: leakage-vs-age\n"
            "grids:\n  lambda: [0.75]\n  t: [0, 1]\n  eps_c: [1.0]\n"
        )
        code = main([
            "run", "--config", str(cfg), "--out", str(tmp_path), "--seed", "9",
            "--format", "json",
        ])
        assert code == 0
        rows = json.loads((tmp_path / "leakage-vs-age.json").read_text())
        assert all(r["seed"] == 9 for r in rows)
