import json
import os
import pickle

import numpy as np
import pytest
from scipy import sparse

from harmonic_gluing.domain import GluingParams
from harmonic_gluing.errors import ConfigParse, MissingNodes, NoContraction
from harmonic_gluing.manifold import RoundSphere
from harmonic_gluing.pregluing import make_pair
from harmonic_gluing.report import (
    InvariantCheck,
    ResultRecord,
    read_table,
    row_columns,
    stage,
    write_record,
    write_table,
    write_triplets,
)
from harmonic_gluing.utils import flatten_nested_dictionaries


def test_check_comparisons():
    assert InvariantCheck("a", 0.1, 0.5).passed
    assert not InvariantCheck("a", 0.6, 0.5).passed
    assert InvariantCheck("b", 2.0, 1.8, ">=").passed
    assert InvariantCheck("c", -0.4, -0.65, "in", upper=-0.35).passed
    assert not InvariantCheck("c", -0.3, -0.65, "in", upper=-0.35).passed
    assert not InvariantCheck("d", float("nan"), 1.0).passed
    assert InvariantCheck("e", 0.6, 0.5).line().startswith("FAIL")


def test_record_hash_ignores_timings():
    first = ResultRecord("glue", "abc").add("ift_solve", residual=1e-9)
    second = ResultRecord("glue", "abc").add("ift_solve", residual=1e-9)
    with first.timed("solve"):
        pass
    assert first.values == {"ift_solve/residual": 1e-9}
    assert first.digest() == second.digest()
    first.add_check(InvariantCheck("residual", 1.0, 0.5))
    assert not first.passed
    assert first.digest() != second.digest()


def test_stage_tags_errors():
    record = ResultRecord("glue", "abc")
    with pytest.raises(NoContraction) as info:
        with stage(record, "inverse"):
            raise NoContraction("q = 1.2")
    assert info.value.stage == "inverse"
    assert info.value.message.startswith("[inverse]")
    assert "inverse" in record.timings
    restored = pickle.loads(pickle.dumps(info.value))
    assert type(restored) is NoContraction
    assert restored.stage == "inverse"


def test_record_files(tmp_path):
    record = ResultRecord("norms", "abc").add("weighted_norm", unit_power=np.float64(2.5))
    record.timings["build_grid"] = 0.25
    write_record(str(tmp_path), record)
    with open(tmp_path / "result.json") as file:
        result = json.load(file)
    with open(tmp_path / "timings.json") as file:
        timings = json.load(file)
    assert result["values"] == {"weighted_norm/unit_power": 2.5}
    assert "timings" not in result
    assert timings == {"build_grid": 0.25}


def test_tables_keep_floats_exact(tmp_path):
    values = np.array([0.1, 1.0 / 3.0, 1e-300])
    path = write_table(str(tmp_path / "table.csv"), {"value": values, "label": ["a", "b", "c"]})
    table = read_table(path)
    np.testing.assert_array_equal(table["value"], values)
    assert list(table["label"]) == ["a", "b", "c"]
    with pytest.raises(AssertionError):
        write_table(str(tmp_path / "bad.csv"), {"a": [1, 2], "b": [1]})
    with pytest.raises(ConfigParse):
        read_table(str(tmp_path / "missing.csv"))


def test_row_columns_fill_missing_cells():
    columns = row_columns([{"delta": 0.2, "k": 1}, {"delta": 0.1, "operator_gap": 0.5}])
    assert list(columns) == ["delta", "k", "operator_gap"]
    assert columns["k"] == [1, ""]
    assert columns["operator_gap"] == ["", 0.5]


def test_operator_triplets(tmp_path):
    matrix = sparse.csr_matrix(np.array([[2.0, 0.0], [0.0, -1.5]]))
    table = read_table(write_triplets(str(tmp_path / "operator.csv"), matrix))
    rebuilt = sparse.coo_matrix((table["value"], (table["row"].astype(int), table["col"].astype(int))), shape=(2, 2))
    np.testing.assert_array_equal(rebuilt.toarray(), matrix.toarray())


def test_flatten_nested_dictionaries():
    flat = flatten_nested_dictionaries({"seed": 0, "target": {"kind": "sphere", "options": {"radius": 1.0}}})
    assert flat == {"seed": 0, "target/kind": "sphere", "target/options/radius": 1.0}


def test_file_pair_reads_node_tables(tmp_path):
    params = GluingParams(delta=0.2, R=20.0)
    model = RoundSphere(dimension=2)
    pair = make_pair("identity-sphere", model, params)
    zero = write_table(str(tmp_path / "zero.csv"), pair.zero.node_table())
    infinity = write_table(str(tmp_path / "infinity.csv"), pair.infinity.node_table())
    loaded = make_pair("file", model, params, zero_path=zero, infinity_path=infinity)
    assert np.all(loaded.zero.same_values(pair.zero))
    assert np.all(loaded.infinity.same_values(pair.infinity))
    table = pair.zero.node_table()
    del table["y1"]
    path = write_table(str(tmp_path / "broken.csv"), table)
    with pytest.raises(MissingNodes):
        make_pair("file", model, params, zero_path=path, infinity_path=infinity)
