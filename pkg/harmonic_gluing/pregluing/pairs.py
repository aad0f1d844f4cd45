import os
from dataclasses import dataclass
from typing import Callable, Dict, List

import numpy as np

from ..domain import INNER, OUTER, DomainGrid, GluingParams, Resolution, build_sphere_grid
from ..errors import GluingError, MissingNodes
from ..harmonic import DiscreteMap, tension
from ..manifold import TargetModel, TargetPoint
from ..norms import DEFAULT_P, weighted_norm
from ..report.records import InvariantCheck
from ..report.writers import read_table
from ..utils import fetch_node_table

_PAIR_REGISTRY: Dict[str, Callable[..., "MapPair"]] = {}


def register_pair(kind: str):
    def decorator(factory):
        _PAIR_REGISTRY[kind] = factory
        return factory

    return decorator


def registered_pairs() -> List[str]:
    return sorted(_PAIR_REGISTRY)


@dataclass
class MapPair:
    """Two maps `f⁰: S² → N` and `f^∞: S² → N` meeting at `f⁰(0) = f^∞(∞) = y`.

    `zero` lives on the `sphere-zero` grid with the gluing point `x₁ = 0` at its
    inner-cap origin, `infinity` on the `sphere-infinity` grid with `x₂ = ∞` at its
    outer-cap origin.

    Arguments:
        zero (DiscreteMap): `f⁰`.
        infinity (DiscreteMap): `f^∞`.
        kind (str): Generator that produced the pair.
        bound (float): Declared bound `c` on `|df|` and `|∇df|`.
        harmonic_tolerance (float): Declared tension residual tolerance.
        exact_harmonic (bool): Whether both maps are meant to be harmonic.
    """

    zero: DiscreteMap
    infinity: DiscreteMap
    kind: str = "custom"
    bound: float = 10.0
    harmonic_tolerance: float = 0.05
    exact_harmonic: bool = True

    def __post_init__(self):
        assert self.zero.grid.kind == "sphere-zero", "f⁰ must live on the sphere-zero grid"
        assert self.infinity.grid.kind == "sphere-infinity", (
            "f^∞ must live on the sphere-infinity grid"
        )
        assert self.zero.model is self.infinity.model, "Both maps must share one target"

    @property
    def model(self) -> TargetModel:
        return self.zero.model

    @property
    def params(self) -> GluingParams:
        return self.zero.grid.params

    @property
    def x1(self) -> int:
        return self.zero.grid.cap_origin(INNER)

    @property
    def x2(self) -> int:
        return self.infinity.grid.cap_origin(OUTER)

    @property
    def y(self) -> TargetPoint:
        return self.zero.point(self.x1)

    def matching_gap(self) -> float:
        """Distance between `f⁰(x₁)` and `f^∞(x₂)`, `inf` beyond the injectivity bound."""
        first, second = self.y, self.infinity.point(self.x2)
        try:
            return float(self.model.norm(first, self.model.log(first, second))[0])
        except GluingError:
            return float("inf")


def _unit_disc_coordinate(grid: DomainGrid):
    """`(ζ, inside)` with `ζ` the grid coordinate where `|ζ| ≤ 1` and `1/ζ` elsewhere."""
    inside = grid.radius() <= 1.0
    zeta = np.where(inside, grid.complex_coordinate(), grid.inverse_coordinate())
    return zeta, inside


def _harmonic_bump(grid: DomainGrid) -> np.ndarray:
    """`2ζ / (1 + |ζ|²)`, finite at both cap origins."""
    zeta, inside = _unit_disc_coordinate(grid)
    value = 2.0 * zeta / (1.0 + np.abs(zeta) ** 2)
    return np.where(inside, value, np.conj(value))


def _sphere_grids(params: GluingParams, resolution: Resolution):
    return (
        build_sphere_grid(params, "zero", resolution),
        build_sphere_grid(params, "infinity", resolution),
    )


@register_pair("constant")
def constant_pair(
    model: TargetModel,
    params: GluingParams,
    resolution: Resolution = Resolution(),
    value=None,
    **options,
) -> MapPair:
    """Both maps constant at `value` (the origin of chart `0` when omitted)."""
    zero_grid, inf_grid = _sphere_grids(params, resolution)
    y = TargetPoint.single(np.zeros(model.dimension) if value is None else value)
    return MapPair(
        DiscreteMap.constant(zero_grid, model, y, name="f0"),
        DiscreteMap.constant(inf_grid, model, y, name="finf"),
        kind="constant",
        **options,
    )


@register_pair("identity-sphere")
def identity_sphere_pair(
    model: TargetModel,
    params: GluingParams,
    resolution: Resolution = Resolution(),
    **options,
) -> MapPair:
    """`f⁰ = id` and `f^∞(w) = 1/w` on the round 2-sphere; both send the gluing point to the
    origin of chart `0`."""
    assert model.dimension == 2 and model.kind == "sphere", "identity-sphere needs a 2-sphere"
    zero_grid, inf_grid = _sphere_grids(params, resolution)

    def identity(grid, index):
        zeta, inside = _unit_disc_coordinate(grid)
        zeta = zeta[index]
        # chart 1 holds y/|y|², which is conj(1/z) for y = z
        zeta = np.where(inside[index], zeta, np.conj(zeta))
        return TargetPoint(np.stack([zeta.real, zeta.imag], axis=1), np.where(inside[index], 0, 1))

    def inversion(grid, index):
        zeta, inside = _unit_disc_coordinate(grid)
        zeta = zeta[index]
        zeta = np.where(inside[index], np.conj(zeta), zeta)
        return TargetPoint(np.stack([zeta.real, zeta.imag], axis=1), np.where(inside[index], 1, 0))

    return MapPair(
        DiscreteMap.from_function(zero_grid, model, identity, name="f0"),
        DiscreteMap.from_function(inf_grid, model, inversion, name="finf"),
        kind="identity-sphere",
        **options,
    )


@register_pair("torus-harmonic")
def torus_harmonic_pair(
    model: TargetModel,
    params: GluingParams,
    resolution: Resolution = Resolution(),
    value=None,
    **options,
) -> MapPair:
    """Harmonic maps into a flat torus, held to the strict tension check.

    Harmonic maps `S² → T^n` lift to harmonic maps into `ℝ^n`, which are constant, so
    both maps sit at `value` (the centre of the period cell when omitted).
    """
    assert model.kind == "flat-torus", "torus-harmonic needs a flat torus"
    y = 0.5 * model.periods if value is None else np.asarray(value, dtype=float)
    options["exact_harmonic"] = True
    pair = constant_pair(model, params, resolution, value=y, **options)
    pair.kind = "torus-harmonic"
    return pair


@register_pair("torus-spherical")
def torus_spherical_pair(
    model: TargetModel,
    params: GluingParams,
    resolution: Resolution = Resolution(),
    amplitude: float = 0.1,
    value=None,
    **options,
) -> MapPair:
    """Degree-one spherical harmonics into a flat 2-torus.

    `f⁰(z) = y + a (2x, 2y)/(1 + |z|²)` and `f^∞(w) = f⁰(1/w)`. The maps satisfy
    `Δf = 2(f − y)` rather than `Δf = 0`, so the harmonicity part of the moduli check is
    relaxed for this pair.
    """
    assert model.dimension == 2 and model.kind == "flat-torus", (
        "torus-spherical needs a flat 2-torus"
    )
    y = 0.5 * model.periods if value is None else np.asarray(value, dtype=float)
    zero_grid, inf_grid = _sphere_grids(params, resolution)

    def spherical(flip):
        def function(grid, index):
            bump = _harmonic_bump(grid)[index]
            bump = np.conj(bump) if flip else bump
            coords = y[None, :] + amplitude * np.stack([bump.real, bump.imag], axis=1)
            return TargetPoint(coords, np.zeros(index.size))

        return function

    options.setdefault("exact_harmonic", False)
    return MapPair(
        DiscreteMap.from_function(zero_grid, model, spherical(False), name="f0"),
        DiscreteMap.from_function(inf_grid, model, spherical(True), name="finf"),
        kind="torus-spherical",
        **options,
    )


@register_pair("file")
def file_pair(
    model: TargetModel,
    params: GluingParams,
    resolution: Resolution = Resolution(),
    zero_path: str = "",
    infinity_path: str = "",
    artifact: str = "",
    **options,
) -> MapPair:
    """Load both maps from node tables with `chart` and `y0, y1, …` columns.

    The tables must match the sphere grids node for node, as written by
    `DiscreteMap.node_table`. With `artifact`, a W&B artifact address, the paths are
    relative to the downloaded artifact directory.
    """
    zero_grid, inf_grid = _sphere_grids(params, resolution)
    if artifact:
        root = fetch_node_table(artifact)
        zero_path, infinity_path = os.path.join(root, zero_path), os.path.join(root, infinity_path)

    def load(grid, path, name):
        table = read_table(path)
        columns = [f"y{i}" for i in range(model.dimension)]
        missing = [c for c in ["chart"] + columns if c not in table]
        if missing:
            raise MissingNodes(f"Node table {path} lacks the columns {missing}")
        coords = np.stack([table[c] for c in columns], axis=1)
        return DiscreteMap(grid, model, coords, table["chart"].astype(np.int64), name=name)

    return MapPair(
        load(zero_grid, zero_path, "f0"),
        load(inf_grid, infinity_path, "finf"),
        kind="file",
        **options,
    )


def make_pair(
    kind: str,
    model: TargetModel,
    params: GluingParams,
    resolution: Resolution = Resolution(),
    **options,
) -> MapPair:
    """Build a map pair with a registered generator.

    **Usage:**

    ```python
    from harmonic_gluing.domain import GluingParams
    from harmonic_gluing.manifold import RoundSphere
    from harmonic_gluing.pregluing import make_pair

    pair = make_pair("identity-sphere", RoundSphere(), GluingParams(delta=0.2, R=50.0))
    ```

    Args:
        kind (str): One of `constant`, `identity-sphere`, `torus-harmonic`,
            `torus-spherical`, `file`.
        model (TargetModel): The target.
        params (GluingParams): Gluing parameters; they fix the sphere grids.
        resolution (Resolution): Grid spacings.
        **options: Generator options and the `MapPair` bounds.

    Returns:
        (MapPair): The pair.
    """
    if kind not in _PAIR_REGISTRY:
        raise KeyError(f"Map pair kind '{kind}' is not registered. Available kinds: {registered_pairs()}")
    return _PAIR_REGISTRY[kind](model, params, resolution, **options)


def in_moduli(
    pair: MapPair,
    c: float = None,
    p: float = DEFAULT_P,
    tol: float = None,
    matching_tol: float = 1e-10,
) -> Dict[str, object]:
    """Check that a pair belongs to the moduli set `ℳ(c, p)`.

    The maps must meet at the gluing points, obey `sup|df|, sup|∇df| ≤ c` over the nodes
    each subgrid owns, and have a tension residual `‖P(f)‖_{0,p} ≤ tol`. The residual check
    is skipped for pairs that are not meant to be harmonic.

    Returns:
        `passed`, the first failing `reason` (`matching`, `bound` or `harmonicity`),
        the measured `values` and the individual `checks`.
    """
    c = pair.bound if c is None else c
    tol = pair.harmonic_tolerance if tol is None else tol
    values = {"matching_gap": pair.matching_gap()}
    checks = [
        InvariantCheck("matching", values["matching_gap"], matching_tol, producer="in_moduli")
    ]
    bound_checks, residual_checks = [], []
    for label, f in (("f0", pair.zero), ("finf", pair.infinity)):
        first, second = f.differential_norms()
        owned = f.grid.owned()[f.grid.active_index]
        values[f"{label}_df_sup"] = float(first[owned].max())
        values[f"{label}_d2f_sup"] = float(second[owned].max())
        values[f"{label}_tension"] = weighted_norm(tension(f), 0, p)
        bound_checks += [
            InvariantCheck(f"{label}_df_sup", values[f"{label}_df_sup"], c, producer="in_moduli"),
            InvariantCheck(f"{label}_d2f_sup", values[f"{label}_d2f_sup"], c, producer="in_moduli"),
        ]
        note = "" if pair.exact_harmonic else "relaxed"
        residual_checks.append(
            InvariantCheck(
                f"{label}_tension",
                values[f"{label}_tension"] if pair.exact_harmonic else 0.0,
                tol,
                producer="tension",
                note=note,
            )
        )
    checks += bound_checks + residual_checks
    reason = ""
    for name, group in (("matching", checks[:1]), ("bound", bound_checks), ("harmonicity", residual_checks)):
        if not all(check.passed for check in group):
            reason = name
            break
    return {"passed": reason == "", "reason": reason, "values": values, "checks": checks}
