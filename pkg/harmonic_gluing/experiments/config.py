import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import tomli
import tomli_w

from ..domain import GluingParams, Resolution
from ..domain.weight import MAX_D_TAU, MAX_D_THETA, MAX_H_CAP
from ..errors import ConfigParse
from ..manifold import TargetModel, model_from_descriptor
from ..newton import GluingOptions
from ..pregluing import MapPair, make_pair, registered_pairs
from ..report import config_hash


@dataclass
class TargetConfig:
    """The `[target]` table: a model `kind` plus its constructor options."""

    kind: str = "flat-torus"
    options: Dict[str, Any] = field(default_factory=lambda: {"dimension": 2})

    @classmethod
    def from_dict(cls, table: Dict[str, Any]) -> "TargetConfig":
        table = dict(table)
        return cls(kind=table.pop("kind", cls.kind), options=table)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, **self.options}


@dataclass
class PairConfig:
    """The `[pair]` table: a registered generator and its options.

    `file` pairs take `zero_path` and `infinity_path`; `torus-spherical` takes
    `amplitude`; every kind accepts the moduli bounds `bound` and `harmonic_tolerance`.
    """

    kind: str = "torus-spherical"
    options: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, table: Dict[str, Any]) -> "PairConfig":
        table = dict(table)
        return cls(kind=table.pop("kind", cls.kind), options=table)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, **self.options}


@dataclass
class GridConfig:
    d_tau: float = MAX_D_TAU
    d_theta: float = float(MAX_D_THETA)
    h_cap: float = MAX_H_CAP
    overlap_nodes: int = 8

    def resolution(self) -> Resolution:
        return Resolution(self.d_tau, self.d_theta, self.h_cap, self.overlap_nodes)


@dataclass
class ToleranceConfig:
    """The `[tolerances]` table; `residual = 0` selects the flat or curved default."""

    residual: float = 0.0
    max_iter: int = 50
    tail_tol: float = 1e-10
    tol_v: float = 1e-8
    svd_atol: float = 0.0
    svd_rtol: float = 1e-6
    min_gram: float = 0.1
    probes: int = 20
    constant_probes: int = 5
    enforce_hypotheses: bool = True
    check_moduli: bool = True


@dataclass
class SweepConfig:
    """`(δ, R)` cells of a run.

    Three spellings are accepted in the `[sweep]` table:

    ```toml
    pairs = [[0.2, 20.0], [0.1, 80.0]]          # explicit cells
    delta = 0.1
    neck = [8, 16, 32, 64]                      # δR values at fixed δ
    neck = { start = 8, stop = 64, factor = 2 } # geometric range of δR
    ```
    """

    pairs: List[Tuple[float, float]] = field(default_factory=list)
    delta: Optional[float] = None
    neck: Union[List[float], Dict[str, float], None] = None
    delta0: float = 0.5

    def __post_init__(self):
        self.pairs = [(float(delta), float(R)) for delta, R in self.pairs]
        if isinstance(self.neck, dict):
            missing = {"start", "stop", "factor"} - set(self.neck)
            if missing:
                raise ConfigParse(f"Sweep neck range lacks {sorted(missing)}")
            self.neck = {key: float(self.neck[key]) for key in ("start", "stop", "factor")}
            if self.neck["factor"] <= 1.0 or self.neck["start"] <= 0.0:
                raise ConfigParse(f"Sweep neck range needs start > 0 and factor > 1, got {self.neck}")
        elif self.neck is not None:
            self.neck = [float(value) for value in self.neck]
        if self.pairs and self.neck is not None:
            raise ConfigParse("A sweep takes either explicit `pairs` or `delta` with `neck`, not both")
        if self.neck is not None and self.delta is None:
            raise ConfigParse("A `neck` sweep needs `delta`")

    def necks(self) -> List[float]:
        if isinstance(self.neck, dict):
            start, stop, factor = self.neck["start"], self.neck["stop"], self.neck["factor"]
            count = int(np.floor(np.log(stop / start) / np.log(factor) + 1e-9)) + 1
            return [start * factor**i for i in range(count)]
        return list(self.neck or [])

    def cells(self) -> List[GluingParams]:
        """Gluing parameters of every cell, in sweep order."""
        if self.neck is not None:
            cells = [(self.delta, neck / self.delta) for neck in self.necks()]
        else:
            cells = self.pairs or [(0.2, 20.0)]
        try:
            return [GluingParams(delta, R, self.delta0) for delta, R in cells]
        except AssertionError as error:
            raise ConfigParse(f"Invalid sweep cell: {error}")

    def to_dict(self) -> Dict[str, Any]:
        table: Dict[str, Any] = {"delta0": self.delta0}
        if self.pairs:
            table["pairs"] = [list(cell) for cell in self.pairs]
        if self.delta is not None:
            table["delta"] = self.delta
        if self.neck is not None:
            table["neck"] = dict(self.neck) if isinstance(self.neck, dict) else list(self.neck)
        return table


@dataclass
class TrackingConfig:
    """Optional W&B tracking; an empty `project` disables it."""

    project: str = ""
    entity: str = ""
    upload: bool = True


@dataclass
class DiagnosticsConfig:
    """Optional extra studies attached to the commands.

    Arguments:
        flip_christoffel_sign (bool): Assemble `D` over a model with negated Christoffel
            symbols in `check`; the linearization checks must then fail.
        uniqueness_probe (bool): Rerun the iteration from a random start in `glue`.
        cokernel_stability (bool): Recompute the cokernel on a refined grid in
            `contraction`.
        operator_gap (bool): Probe `‖D_{0,r} − D₀‖` per cell in `contraction`.
        embedding_probes (int): Probes of the embedding constant estimates in `norms`.
        export_operator (bool): Write `D` of `f⁰` as `operator.csv` triplets in `check`.
    """

    flip_christoffel_sign: bool = False
    uniqueness_probe: bool = False
    cokernel_stability: bool = False
    operator_gap: bool = True
    embedding_probes: int = 20
    export_operator: bool = False


_SECTIONS = {
    "target": TargetConfig,
    "pair": PairConfig,
    "grid": GridConfig,
    "tolerances": ToleranceConfig,
    "sweep": SweepConfig,
    "tracking": TrackingConfig,
    "diagnostics": DiagnosticsConfig,
}


def _section(cls, table: Any, name: str):
    if not isinstance(table, dict):
        raise ConfigParse(f"[{name}] must be a table")
    if hasattr(cls, "from_dict"):
        return cls.from_dict(table)
    known = {item.name for item in fields(cls)}
    unknown = sorted(set(table) - known)
    if unknown:
        raise ConfigParse(f"Unknown keys in [{name}]: {unknown}")
    try:
        return cls(**table)
    except (TypeError, AssertionError) as error:
        raise ConfigParse(f"Invalid [{name}] table: {error}")


@dataclass
class RunConfig:
    """Everything a command needs: target, map pair, sweep, grid, tolerances and seed.

    **Usage:**

    ```python
    from harmonic_gluing.experiments import load_config

    config = load_config("configs/torus.toml").override(seed=3)
    for params in config.sweep.cells():
        pair = config.build_pair(params)
    ```
    """

    seed: int = 0
    p: float = 1.5
    out: str = "runs"
    jobs: int = 1
    target: TargetConfig = field(default_factory=TargetConfig)
    pair: PairConfig = field(default_factory=PairConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    tolerances: ToleranceConfig = field(default_factory=ToleranceConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    tracking: TrackingConfig = field(default_factory=TrackingConfig)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)

    def __post_init__(self):
        assert 1.0 < self.p < 2.0, f"The exponent p must lie in (1, 2), got {self.p}"
        assert self.jobs >= 1, f"jobs must be at least 1, got {self.jobs}"

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        scalars = {"seed", "p", "out", "jobs"}
        unknown = sorted(set(data) - scalars - set(_SECTIONS))
        if unknown:
            raise ConfigParse(f"Unknown config keys: {unknown}")
        kwargs = {key: data[key] for key in scalars if key in data}
        for name, section_cls in _SECTIONS.items():
            if name in data:
                kwargs[name] = _section(section_cls, data[name], name)
        try:
            return cls(**kwargs)
        except (TypeError, AssertionError) as error:
            raise ConfigParse(f"Invalid config: {error}")

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"seed": self.seed, "p": self.p, "out": self.out, "jobs": self.jobs}
        for name in _SECTIONS:
            section = getattr(self, name)
            data[name] = section.to_dict() if hasattr(section, "to_dict") else asdict(section)
        return data

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def hash(self) -> str:
        return config_hash(self.to_dict())

    def override(self, **values: Any) -> "RunConfig":
        """A copy with the given top-level values replaced; `None` values are ignored."""
        try:
            return replace(self, **{key: value for key, value in values.items() if value is not None})
        except AssertionError as error:
            raise ConfigParse(f"Invalid override: {error}")

    # builders

    def model(self) -> TargetModel:
        return model_from_descriptor(self.target.to_dict())

    def resolution(self) -> Resolution:
        return self.grid.resolution()

    def build_pair(self, params: GluingParams, model: Optional[TargetModel] = None) -> MapPair:
        """Build the configured map pair at `params` and the configured resolution."""
        model = self.model() if model is None else model
        if self.pair.kind not in registered_pairs():
            raise ConfigParse(
                f"Unknown pair kind '{self.pair.kind}', expected one of {registered_pairs()}"
            )
        try:
            return make_pair(self.pair.kind, model, params, self.resolution(), **self.pair.options)
        except TypeError as error:
            raise ConfigParse(f"Invalid [pair] options for '{self.pair.kind}': {error}")

    def gluing_options(self, quiet: bool = True) -> GluingOptions:
        tol = self.tolerances
        return GluingOptions(
            p=self.p,
            tolerance=tol.residual if tol.residual > 0 else None,
            max_iter=tol.max_iter,
            tail_tol=tol.tail_tol,
            tol_v=tol.tol_v,
            probes=tol.constant_probes,
            svd_atol=tol.svd_atol,
            svd_rtol=tol.svd_rtol,
            min_gram=tol.min_gram,
            enforce_hypotheses=tol.enforce_hypotheses,
            check_moduli=tol.check_moduli,
            seed=self.seed,
            quiet=quiet,
        )


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as error:
        raise ConfigParse(f"Unable to parse {source}: {error}")
    return RunConfig.from_dict(data)


def load_config(path: Optional[str] = None) -> RunConfig:
    """Load a run config from a TOML file; the defaults when `path` is `None`.

    Raises:
        ConfigParse: If the file is missing, is not valid TOML, or holds unknown keys.
    """
    if path is None:
        return RunConfig()
    if not os.path.isfile(path):
        raise ConfigParse(f"Unable to find config file {path}")
    with open(path, "r", encoding="utf-8") as file:
        return parse_config(file.read(), source=path)


def save_config(config: RunConfig, path: str) -> str:
    with open(path, "wb") as file:
        tomli_w.dump(config.to_dict(), file)
    return path
