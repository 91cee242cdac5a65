"""
Tests for experiment configuration, runs and sweeps.
"""
import csv
import json

import numpy as np
import pytest

from app.core.exceptions import ConfigError
from app.models.estimator import BaselineKind, OracleArm, Testbed
from app.schemas.experiment import ExperimentConfig, RunSummary, split_token
from app.schemas.gate import EstimatorKind
from app.services.experiment_service import TRACE_COLUMNS, ArmRun, ExperimentService


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


class TestConfig:
    def test_defaults(self):
        config = ExperimentConfig.parse({"testbed": "bandit"})
        assert config.resolved_actions == 100
        assert config.resolved_steps == 2000
        assert config.resolved_error == pytest.approx(0.99)
        assert ExperimentConfig.parse({"testbed": "multictx"}).resolved_actions == 10
        assert ExperimentConfig.parse({"testbed": "classify"}).resolved_steps == 10_000

    def test_key_value_text(self):
        text = """
        # full-size bandit
        testbed = bandit
        num_actions = 100   # K
        estimators = pg, dg, ucb:0.25
        error =
        """
        config = ExperimentConfig.from_text(text, {"seeds": 5, "batch": None})
        assert config.estimators == ["pg", "dg", "ucb:0.25"]
        assert config.seeds == 5 and config.batch == 100
        assert config.error is None

    def test_echo_round_trip(self, tmp_path):
        config = ExperimentConfig.parse(
            dict(testbed="classify", estimators="pg,dg,se:2,ce", baselines="zero,oracle", samples_per_input="1,10",
                 eta=0.3, whiten=True, learning_rate=0.002, output_dir=tmp_path, label="echo")
        )
        assert ExperimentConfig.from_text(config.to_echo()) == config
        path = tmp_path / "config.echo"
        path.write_text(config.to_echo())
        assert ExperimentConfig.from_file(path) == config

    def test_echo_keeps_hash_in_values(self, tmp_path):
        config = ExperimentConfig.parse(dict(testbed="bandit", label="run#2", output_dir=tmp_path / "out#a"))
        echo = config.to_echo()
        assert 'label="run#2"' in echo
        assert ExperimentConfig.from_text(echo) == config
        assert ExperimentConfig.read_pairs('label = "a#b"  # trailing comment')["label"] == "a#b"

    def test_malformed_quoted_value(self):
        with pytest.raises(ConfigError) as info:
            ExperimentConfig.from_text('label = "a" "b"')
        assert info.value.field == "label"

    def test_overrides(self):
        config = ExperimentConfig.parse({"testbed": "bandit"}).with_overrides(eta=2.0, batch=None)
        assert config.eta == 2.0 and config.batch == 100

    @pytest.mark.parametrize(
        "values,field",
        [
            (dict(testbed="bandit", estimators="pg,bogus"), "estimators"),
            (dict(testbed="bandit", estimators="dg:0.5"), "estimators"),
            (dict(testbed="bandit", estimators="ucb:2"), "estimators"),
            (dict(testbed="bandit", estimators="pg,ce"), "estimators"),
            (dict(testbed="multictx", estimators="pg,ucb"), "estimators"),
            (dict(testbed="classify", learning_rate=0.0), "learning_rate"),
            (dict(testbed="bandit", eta=0.0), "eta"),
            (dict(testbed="bandit", seeds=0), "seeds"),
            (dict(testbed="bandit", samples_per_input="1,0"), "samples_per_input"),
            (dict(testbed="bandit", sweep_axis="colour"), "sweep_axis"),
            (dict(testbed="bandit", colour="red"), "colour"),
            (dict(testbed="nowhere"), "testbed"),
            (dict(testbed="bandit", num_actions=2), "num_actions"),
            (dict(testbed="sweep", sweep_target="bandit", num_actions=2), "num_actions"),
        ],
    )
    def test_invalid_fields_are_named(self, values, field):
        with pytest.raises(ConfigError) as info:
            ExperimentConfig.parse(values)
        assert info.value.field == field

    def test_malformed_line(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_text("testbed bandit")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError) as info:
            ExperimentConfig.from_file(tmp_path / "absent.conf")
        assert info.value.field == "config"

    def test_arm_kinds(self):
        config = ExperimentConfig.parse(
            dict(testbed="classify", estimators="pg,dg,entropy-pg,ucb:0.25,se,ce,pg-oracle", eta=0.5, beta=2.0)
        )
        arms = dict(config.arm_kinds())
        assert arms["pg"] == EstimatorKind.pg()
        assert arms["dg"] == EstimatorKind.dg(0.5)
        assert arms["entropy-pg"].entropy_coeff == 0.01
        assert arms["ucb:0.25"].alpha == 0.25
        assert arms["se"].beta == 2.0
        assert arms["ce"] is OracleArm.CE and arms["pg-oracle"] is OracleArm.PG_ORACLE

    def test_split_token(self):
        assert split_token("ucb:0.25") == ("ucb", 0.25)
        assert split_token("dg") == ("dg", None)


class TestComparisons:
    def test_one_sided_p(self):
        better = np.array([0.1, 0.2, 0.15, 0.12, 0.11, 0.1, 0.13, 0.09])
        assert ExperimentService.one_sided_p(better, better + 0.1) < 0.01
        assert ExperimentService.one_sided_p(better, better) is None
        assert ExperimentService.one_sided_p(better[:1], better[:1] + 1) is None

    def test_compare_matches_cells(self, classify_config):
        def arm(name, family, cell, errors):
            summaries = [
                RunSummary(testbed=Testbed.CLASSIFY, label="small", arm=name, seed=i, final_error=e)
                for i, e in enumerate(errors)
            ]
            return ArmRun(name, [], summaries, family=family, cell=cell)

        runs = [
            arm("pg-zero-s1", "pg", "zero-s1", [0.5, 0.4]),
            arm("dg-zero-s1", "dg", "zero-s1", [0.3, 0.2]),
            arm("dg-zero-s2", "dg", "zero-s2", [0.3, 0.2]),
            arm("ce", "ce", "", [0.1, 0.1]),
        ]
        comparisons = ExperimentService.compare(classify_config, runs)
        assert len(comparisons) == 1
        result = comparisons[0]
        assert (result.better, result.worse) == ("dg-zero-s1", "pg-zero-s1")
        # (0.45 - 0.25) / (0.45 - 0.1)
        assert result.gap_closed == pytest.approx(0.2 / 0.35)


class TestRuns:
    def test_bandit_outputs(self, bandit_config):
        result = ExperimentService.cmd_run(bandit_config)
        out = bandit_config.output_dir / "bandit" / "small"
        assert result.output_dir == str(out)
        assert ExperimentConfig.from_file(out / "config.echo") == bandit_config
        rows = read_csv(out / "dg" / "trace.csv")
        assert tuple(rows[0]) == TRACE_COLUMNS[Testbed.BANDIT]
        assert len(rows) == 1 + 3 * 30
        records = [json.loads(line) for line in (out / "summary.jsonl").read_text().splitlines()]
        runs = [r for r in records if r["kind"] == "run"]
        assert {r["arm"] for r in runs} == {"pg", "dg"}
        assert len(runs) == 6
        assert [r["better"] for r in records if r["kind"] == "comparison"] == ["dg"]

    def test_rerun_is_byte_identical(self, bandit_config, tmp_path):
        ExperimentService.cmd_run(bandit_config)
        out = bandit_config.output_dir / "bandit" / "small"
        first = (out / "pg" / "trace.csv").read_bytes()
        second_config = bandit_config.with_overrides(output_dir=tmp_path / "again")
        ExperimentService.cmd_run(second_config)
        assert (tmp_path / "again" / "bandit" / "small" / "pg" / "trace.csv").read_bytes() == first

    def test_worker_count_does_not_change_traces(self, bandit_config, tmp_path):
        ExperimentService.cmd_run(bandit_config)
        parallel = bandit_config.with_overrides(workers=2, output_dir=tmp_path / "parallel")
        ExperimentService.cmd_run(parallel)
        serial_csv = (bandit_config.output_dir / "bandit" / "small" / "dg" / "trace.csv").read_bytes()
        assert (tmp_path / "parallel" / "bandit" / "small" / "dg" / "trace.csv").read_bytes() == serial_csv

    def test_multictx_outputs(self, multictx_config):
        result = ExperimentService.cmd_run(multictx_config)
        assert {s.arm for s in result.summaries} == {"pg", "dg", "ce"}
        rows = read_csv(f"{result.output_dir}/ce/trace.csv")
        assert tuple(rows[0]) == TRACE_COLUMNS[Testbed.MULTICTX]

    def test_classify_outputs(self, classify_config):
        config = classify_config.with_overrides(baselines="zero,expected", samples_per_input="1,2")
        result = ExperimentService.cmd_run(config)
        arms = {s.arm for s in result.summaries}
        assert arms == {
            "pg-zero-s1", "pg-zero-s2", "pg-expected-s1", "pg-expected-s2",
            "dg-zero-s1", "dg-zero-s2", "dg-expected-s1", "dg-expected-s2", "ce",
        }
        assert all(s.final_val_error is not None for s in result.summaries)
        assert [s.label_dependent for s in result.summaries if s.arm == "ce"] == [True, True]
        assert len(result.comparisons) == 4
        assert all(c.gap_closed is None or np.isfinite(c.gap_closed) for c in result.comparisons)
        header = read_csv(f"{result.output_dir}/dg-zero-s1/trace.csv")[0]
        assert tuple(header) == TRACE_COLUMNS[Testbed.CLASSIFY]

    def test_label_dependent_baseline_is_flagged(self, classify_config):
        config = classify_config.with_overrides(estimators="pg", baselines="oracle", seeds=1)
        result = ExperimentService.cmd_run(config)
        assert [s.label_dependent for s in result.summaries] == [True]

    def test_verify_is_not_a_run_testbed(self, bandit_config):
        with pytest.raises(ConfigError):
            ExperimentService.cmd_run(bandit_config.with_overrides(testbed="verify"))


class TestSweeps:
    def test_sweep_rows(self, bandit_config):
        config = bandit_config.with_overrides(testbed="sweep", sweep_target="bandit", seeds=2, label="eta")
        path, rows = ExperimentService.cmd_sweep(config, axis="eta", values=[0.5, 2.0])
        assert path == config.output_dir / "sweep" / "eta" / "sweep.csv"
        assert [(r.value, r.arm) for r in rows] == [(0.5, "pg"), (0.5, "dg"), (2.0, "pg"), (2.0, "dg")]
        assert all(r.seeds == 2 and r.stderr_final_error >= 0 for r in rows)
        assert read_csv(path)[0] == ["axis", "value", "arm", "mean_final_error", "stderr_final_error", "seeds"]

    def test_samples_axis_wraps_list(self, classify_config):
        config = classify_config.with_overrides(testbed="sweep", estimators="dg", seeds=1)
        _, rows = ExperimentService.cmd_sweep(config, axis="samples_per_input", values=[1, 3])
        assert [r.arm for r in rows] == ["dg-expected-s1", "dg-expected-s3"]

    def test_axis_from_config(self, bandit_config):
        config = bandit_config.with_overrides(
            testbed="sweep", sweep_target="bandit", sweep_axis="batch", sweep_values="5,10", seeds=1
        )
        _, rows = ExperimentService.cmd_sweep(config)
        assert [r.value for r in rows] == [5.0, 5.0, 10.0, 10.0]

    def test_unknown_axis(self, bandit_config):
        with pytest.raises(ConfigError) as info:
            ExperimentService.cmd_sweep(bandit_config, axis="colour", values=[1.0])
        assert info.value.field == "axis"

    def test_empty_values(self, bandit_config):
        with pytest.raises(ConfigError) as info:
            ExperimentService.cmd_sweep(bandit_config, axis="eta", values=[])
        assert info.value.field == "values"


def test_baseline_labels():
    assert ExperimentService.arm_label("ucb:0.25", EstimatorKind.ucb_additive(0.25)) == "ucb0.25"
    assert ExperimentService.arm_label("dg", EstimatorKind.dg(), BaselineKind.ZERO, 10) == "dg-zero-s10"
    assert ExperimentService.arm_label("ce", OracleArm.CE, BaselineKind.ZERO, 1) == "ce"
