import hashlib
import json
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from ..errors import GluingError


@dataclass
class InvariantCheck:
    """One audited inequality: a measured value against its bound.

    Arguments:
        name (str): Name of the invariant, e.g. `"transport_isometry"`.
        value (float): Measured value.
        bound (float): Bound the value is compared against.
        comparison (str): `"<="` or `">="`, or `"in"` for a two-sided window given as
            `bound` and `upper`.
        producer (str): Operation that produced the measured value.
        upper (Optional[float]): Upper end of a two-sided window.
    """

    name: str
    value: float
    bound: float
    comparison: str = "<="
    producer: str = ""
    upper: Optional[float] = None
    note: str = ""

    @property
    def passed(self) -> bool:
        if not np.isfinite(self.value):
            return False
        if self.comparison == "<=":
            return self.value <= self.bound
        if self.comparison == ">=":
            return self.value >= self.bound
        if self.comparison == "in":
            return self.bound <= self.value <= self.upper
        raise ValueError(f"Unknown comparison {self.comparison}")

    def to_dict(self) -> Dict[str, Any]:
        record = asdict(self)
        record["passed"] = bool(self.passed)
        return record

    def line(self) -> str:
        window = (
            f"[{self.bound:.3g}, {self.upper:.3g}]"
            if self.comparison == "in"
            else f"{self.comparison} {self.bound:.3g}"
        )
        status = "pass" if self.passed else "FAIL"
        return f"{status:4s}  {self.name:<40s} {self.value:.4e} {window}"


def config_hash(config: Dict[str, Any]) -> str:
    canonical = json.dumps(config, sort_keys=True, default=_jsonable)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.bool_):
        return bool(value)
    if hasattr(value, "to_dict"):
        return value.to_dict()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


@dataclass
class ResultRecord:
    """Everything one command produced, tagged by the operation that produced it.

    `values` maps `"<operation>/<quantity>"` keys to numbers so that each numeric field
    carries the name of its producer. `timings` holds wall-clock seconds per stage and
    is excluded from the record hash, which keeps reruns with the same seed comparable.
    """

    command: str
    config_hash: str
    values: Dict[str, Any] = field(default_factory=dict)
    checks: List[InvariantCheck] = field(default_factory=list)
    verdicts: Dict[str, str] = field(default_factory=dict)
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)

    def add(self, producer: str, **values: Any) -> "ResultRecord":
        for key, value in values.items():
            self.values[f"{producer}/{key}"] = value
        return self

    def add_check(self, check: InvariantCheck) -> "ResultRecord":
        self.checks.append(check)
        return self

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @contextmanager
    def timed(self, stage: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.timings[stage] = self.timings.get(stage, 0.0) + time.perf_counter() - start

    def to_dict(self, with_timings: bool = True) -> Dict[str, Any]:
        record = {
            "command": self.command,
            "config_hash": self.config_hash,
            "values": self.values,
            "checks": [check.to_dict() for check in self.checks],
            "verdicts": self.verdicts,
            "diagnostics": self.diagnostics,
            "passed": self.passed,
        }
        if with_timings:
            record["timings"] = self.timings
        return json.loads(json.dumps(record, default=_jsonable))

    def digest(self) -> str:
        return config_hash(self.to_dict(with_timings=False))


@contextmanager
def stage(record: Optional[ResultRecord], name: str):
    """Time a pipeline stage and tag any gluing error raised inside it with `name`."""
    start = time.perf_counter()
    try:
        yield
    except GluingError as error:
        if error.stage is not None:
            raise
        raise error.annotate(name) from error
    finally:
        if record is not None:
            record.timings[name] = record.timings.get(name, 0.0) + time.perf_counter() - start
