import json
import os

import pytest
from click.testing import CliRunner

from harmonic_gluing.cli.main import cli
from harmonic_gluing.errors import InsufficientPoints
from harmonic_gluing.experiments import (
    DiagnosticsConfig,
    PairConfig,
    RunConfig,
    SweepConfig,
    TargetConfig,
    ToleranceConfig,
    cmd_check,
    cmd_glue,
    cmd_residual_scaling,
)
from harmonic_gluing.newton import HARMONIC
from harmonic_gluing.report import read_table


def _config(tmp_path, **kwargs) -> RunConfig:
    kwargs.setdefault("tolerances", ToleranceConfig(probes=3, constant_probes=2))
    return RunConfig(out=str(tmp_path / "run"), **kwargs)


def _checks(record):
    return {check.name: check for check in record.checks}


def test_residual_scaling_needs_four_points(tmp_path):
    config = _config(tmp_path, pair=PairConfig("constant"), sweep=SweepConfig(delta=0.2, neck=[4, 8, 16]))
    with pytest.raises(InsufficientPoints):
        cmd_residual_scaling(config)
    assert not os.path.exists(os.path.join(config.out, "result.json"))


def test_residual_scaling_skips_fit_for_constant_pair(tmp_path):
    config = _config(
        tmp_path, pair=PairConfig("constant"), sweep=SweepConfig(delta=0.2, neck=[4, 8, 16, 32])
    )
    record = cmd_residual_scaling(config)
    assert record.diagnostics["fit"] == "skipped"
    assert _checks(record)["residual_vanishes"].passed
    table = read_table(os.path.join(config.out, "table.csv"))
    assert list(table["neck"]) == pytest.approx([4.0, 8.0, 16.0, 32.0])
    assert all(value == 0.0 for value in table["residual"])


def test_check_on_flat_torus(tmp_path):
    config = _config(tmp_path)
    record = cmd_check(config)
    checks = _checks(record)
    for name in ("transport_isometry", "linearization_order", "dF_at_zero_vs_D", "kappa_symmetry"):
        assert checks[name].passed, checks[name].line()
    assert checks["constant_map_energy"].passed
    for name in ("table.csv", "cutoff_profile.csv", "result.json", "timings.json"):
        assert os.path.isfile(os.path.join(config.out, name))
    with open(os.path.join(config.out, "result.json")) as file:
        result = json.load(file)
    assert result["command"] == "check"
    assert "timings" not in result


def test_flipped_christoffel_symbols_fail_the_linearization(tmp_path):
    config = _config(
        tmp_path,
        target=TargetConfig("sphere", {"dimension": 2}),
        pair=PairConfig("identity-sphere"),
        diagnostics=DiagnosticsConfig(flip_christoffel_sign=True),
    )
    record = cmd_check(config)
    checks = _checks(record)
    assert not checks["linearization_order"].passed
    assert not record.passed
    assert checks["transport_isometry"].passed


def test_glue_constant_pair(tmp_path):
    config = _config(tmp_path, pair=PairConfig("constant"), sweep=SweepConfig(pairs=[(0.1, 80.0)]))
    record = cmd_glue(config)
    assert record.verdicts["harmonicity_verdict"] == HARMONIC
    assert record.diagnostics["result"]["iterations"] == 0
    for name in ("result.json", "trace.csv", "map_nodes.csv", "table.csv"):
        assert os.path.isfile(os.path.join(config.out, name))
    table = read_table(os.path.join(config.out, "table.csv"))
    assert list(table["v_norm"]) == [0.0]


def test_glue_reruns_are_identical(tmp_path):
    outputs = []
    for _ in range(2):
        config = RunConfig(
            out=str(tmp_path / "run"),
            pair=PairConfig("constant"),
            sweep=SweepConfig(pairs=[(0.1, 80.0)]),
            tolerances=ToleranceConfig(probes=3, constant_probes=2),
        )
        cmd_glue(config)
        with open(os.path.join(config.out, "result.json"), "rb") as file:
            outputs.append(file.read())
    assert outputs[0] == outputs[1]


def test_cli_missing_config_exits_nonzero(tmp_path):
    result = CliRunner().invoke(cli, ["--config", str(tmp_path / "missing.toml"), "check"])
    assert result.exit_code == 1


def test_cli_reports_too_short_sweeps(tmp_path):
    path = tmp_path / "short.toml"
    path.write_text('[pair]\nkind = "constant"\n\n[sweep]\ndelta = 0.2\nneck = [4, 8]\n')
    out = tmp_path / "run"
    result = CliRunner().invoke(
        cli, ["--config", str(path), "--out", str(out), "--quiet", "residual-scaling"]
    )
    assert result.exit_code == 1
    assert not (out / "result.json").exists()
