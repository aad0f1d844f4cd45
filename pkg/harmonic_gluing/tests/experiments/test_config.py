import pytest

from harmonic_gluing.errors import ConfigParse
from harmonic_gluing.experiments import (
    PairConfig,
    RunConfig,
    SweepConfig,
    ToleranceConfig,
    load_config,
    parse_config,
    run_cells,
    save_config,
)

TORUS_SWEEP = """
seed = 7
p = 1.4

[target]
kind = "flat-torus"
dimension = 2
periods = [1.0, 2.0]

[pair]
kind = "torus-spherical"
amplitude = 0.05

[sweep]
delta = 0.1
neck = { start = 8, stop = 64, factor = 2 }

[tolerances]
probes = 3
"""


def test_parse_sections():
    config = parse_config(TORUS_SWEEP)
    assert config.seed == 7
    assert config.p == 1.4
    assert config.target.options == {"dimension": 2, "periods": [1.0, 2.0]}
    assert config.pair == PairConfig("torus-spherical", {"amplitude": 0.05})
    assert config.tolerances.probes == 3
    assert config.tolerances.max_iter == ToleranceConfig().max_iter
    assert config.model().kind == "flat-torus"


def test_toml_round_trip(tmp_path):
    config = parse_config(TORUS_SWEEP)
    assert parse_config(config.to_toml()) == config
    path = save_config(config, str(tmp_path / "run.toml"))
    assert load_config(path) == config
    assert load_config(path).hash() == config.hash()


def test_geometric_neck_range():
    sweep = SweepConfig(delta=0.1, neck={"start": 8, "stop": 64, "factor": 2})
    assert sweep.necks() == [8.0, 16.0, 32.0, 64.0]
    cells = sweep.cells()
    assert [cell.R for cell in cells] == pytest.approx([80.0, 160.0, 320.0, 640.0])
    assert all(cell.delta == 0.1 for cell in cells)


def test_sweep_spellings():
    assert [(c.delta, c.R) for c in SweepConfig().cells()] == [(0.2, 20.0)]
    assert [(c.delta, c.R) for c in SweepConfig(pairs=[[0.1, 80]]).cells()] == [(0.1, 80.0)]
    with pytest.raises(ConfigParse):
        SweepConfig(pairs=[(0.1, 80.0)], delta=0.1, neck=[8.0])
    with pytest.raises(ConfigParse):
        SweepConfig(neck=[8.0])
    with pytest.raises(ConfigParse):
        SweepConfig(delta=0.1, neck={"start": 8, "stop": 64})
    with pytest.raises(ConfigParse):
        SweepConfig(pairs=[(1.5, 80.0)]).cells()


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigParse):
        parse_config("bogus = 1")
    with pytest.raises(ConfigParse):
        parse_config("[grid]\nd_tua = 0.05\n")
    with pytest.raises(ConfigParse):
        parse_config("[tolerances]\nprobes = [1, 2]\nunknown = true\n")


def test_invalid_files_and_values():
    with pytest.raises(ConfigParse) as info:
        load_config("no/such/config.toml")
    assert "Unable to find config file" in info.value.message
    with pytest.raises(ConfigParse):
        parse_config("seed = ")
    with pytest.raises(ConfigParse):
        parse_config("p = 2.5")
    with pytest.raises(ConfigParse):
        RunConfig().override(jobs=0)


def test_override_ignores_missing_values():
    config = RunConfig(seed=4).override(seed=None, jobs=3, out=None)
    assert config.seed == 4
    assert config.jobs == 3
    assert config.out == "runs"


def test_unknown_pair_kind():
    config = RunConfig(pair=PairConfig("klein-bottle"))
    with pytest.raises(ConfigParse):
        config.build_pair(config.sweep.cells()[0])


def test_gluing_options():
    options = RunConfig(seed=5).gluing_options()
    assert options.tolerance is None
    assert options.seed == 5
    assert options.probes == ToleranceConfig().constant_probes
    strict = RunConfig(tolerances=ToleranceConfig(residual=1e-9)).gluing_options()
    assert strict.tolerance == 1e-9


def test_run_cells_keeps_order():
    cells = [-3, 1, -2, 5]
    assert run_cells(abs, cells) == [3, 1, 2, 5]
    assert run_cells(abs, cells, jobs=2) == [3, 1, 2, 5]
