import csv
import json
import os
from typing import Dict, Mapping, Sequence

import numpy as np
import wandb
from scipy import sparse

from ..errors import ConfigParse
from .records import ResultRecord, _jsonable


def prepare_output_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def write_json(path: str, payload) -> str:
    with open(path, "w", encoding="utf-8") as file:
        json.dump(payload, file, indent=2, sort_keys=True, default=_jsonable)
        file.write("\n")
    return path


def write_record(out_dir: str, record: ResultRecord, name: str = "result.json") -> str:
    """Write a record as `result.json` in `out_dir` and its stage timings as `timings.json`.

    `result.json` then depends on the config and seed only.
    """
    prepare_output_dir(out_dir)
    write_json(os.path.join(out_dir, "timings.json"), record.timings)
    return write_json(os.path.join(out_dir, name), record.to_dict(with_timings=False))


def _cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (np.integer, np.bool_)):
        return str(value.item())
    return str(value)


def write_table(path: str, columns: Mapping[str, Sequence]) -> str:
    """Write equally long columns as a CSV file with a header row.

    Floats are written with `repr`, so a written table reads back bit for bit.
    """
    names = list(columns)
    lengths = {len(np.atleast_1d(columns[name])) for name in names}
    assert len(lengths) <= 1, f"Table columns have different lengths: {sorted(lengths)}"
    rows = zip(*[np.atleast_1d(columns[name]).tolist() for name in names])
    with open(path, "w", newline="", encoding="utf-8") as file:
        writer = csv.writer(file)
        writer.writerow(names)
        for row in rows:
            writer.writerow([_cell(value) for value in row])
    return path


def row_columns(rows: Sequence[Mapping[str, object]]) -> Dict[str, list]:
    """Columns of a list of records, in first-seen key order; missing cells are empty."""
    names = list(dict.fromkeys(name for row in rows for name in row))
    return {name: [row.get(name, "") for row in rows] for name in names}


def read_table(path: str) -> Dict[str, np.ndarray]:
    """Read a CSV table written by `write_table`; numeric columns become float arrays.

    Raises:
        ConfigParse: If the file does not exist or has no header.
    """
    if not os.path.isfile(path):
        raise ConfigParse(f"Unable to find table {path}")
    with open(path, newline="", encoding="utf-8") as file:
        reader = csv.reader(file)
        try:
            names = next(reader)
        except StopIteration:
            raise ConfigParse(f"Table {path} is empty")
        rows = list(reader)
    table = {}
    for position, name in enumerate(names):
        raw = [row[position] for row in rows]
        try:
            table[name] = np.array([float(value) for value in raw])
        except ValueError:
            table[name] = np.array(raw)
    return table


def write_triplets(path: str, matrix: sparse.spmatrix) -> str:
    """Export a sparse operator as `row,col,value` coordinate triplets."""
    coo = sparse.coo_matrix(matrix)
    return write_table(path, {"row": coo.row, "col": coo.col, "value": coo.data})


def log_table(key: str, columns: Mapping[str, Sequence]) -> None:
    """Send a table to the active W&B run as a `wandb.Table`; no-op without a run."""
    if wandb.run is None:
        return
    names = list(columns)
    table = wandb.Table(columns=names)
    for row in zip(*[np.atleast_1d(columns[name]).tolist() for name in names]):
        table.add_data(*row)
    wandb.log({key: table})


def log_values(values: Mapping[str, object], step: int = None) -> None:
    if wandb.run is None:
        return
    numeric = {
        key: value
        for key, value in values.items()
        if isinstance(value, (int, float, np.integer, np.floating)) and not isinstance(value, bool)
    }
    if numeric:
        wandb.log(numeric, step=step)
