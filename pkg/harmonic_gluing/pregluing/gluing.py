from typing import Dict, Tuple

import numpy as np

from ..domain import DomainGrid, GluingParams
from ..domain.grid import CORE, INNER, OUTER, SNAP
from ..errors import MatchingViolation, WrongDomain
from ..harmonic import DiscreteMap, Section
from ..manifold import TargetModel, TargetPoint
from ..norms import DEFAULT_P, sphere_sobolev_norm
from .cutoffs import beta_of_log_radius, rho_of_modulus
from .pairs import MapPair
from .transfer import glued_log_radius, resample_points, resample_vectors, transfer_section


def _repeat(point: TargetPoint, count: int) -> TargetPoint:
    return TargetPoint(np.repeat(point.coords[:1], count, axis=0), np.repeat(point.charts[:1], count))


def _log_from(model: TargetModel, y: TargetPoint, points: TargetPoint) -> np.ndarray:
    if len(points) == 0:
        return np.zeros((0, model.dimension))
    return model.log(_repeat(y, len(points)), points)


def _require_glued(grid: DomainGrid, operation: str) -> None:
    if grid.kind != "glued":
        raise WrongDomain(f"{operation} needs the glued grid, got a {grid.kind} grid")


def zeta_fields(
    pair: MapPair, grid: DomainGrid, nodes: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """`ζ⁰(z) = log_y f⁰(z)` and `ζ^∞(z) = log_y f^∞(R²z)` at glued nodes, in the chart of `y`.

    Raises:
        OutOfInjectivityRadius: If a value is too far from `y`.
    """
    model, y = pair.model, pair.y
    zeta0 = _log_from(model, y, resample_points(pair.zero, grid, nodes))
    zeta_inf = _log_from(model, y, resample_points(pair.infinity, grid, nodes))
    return zeta0, zeta_inf


def _neck_weights(t: np.ndarray, params: GluingParams):
    with np.errstate(over="ignore"):
        rho0 = rho_of_modulus(params.r * np.exp(t))
        rho_inf = rho_of_modulus(params.delta / params.R * np.exp(-t))
    return rho0, rho_inf


def _neck_values(pair: MapPair, grid: DomainGrid, nodes: np.ndarray) -> TargetPoint:
    """`exp_y(ρ(δRz) ζ⁰ + ρ(δ/(Rz)) ζ^∞)`, with `y` copied where both cutoffs vanish."""
    model, y = pair.model, pair.y
    t = glued_log_radius(grid)[nodes]
    rho0, rho_inf = _neck_weights(t, grid.params)
    vectors = np.zeros((nodes.size, model.dimension))
    for weights, f in ((rho0, pair.zero), (rho_inf, pair.infinity)):
        live = weights > 0.0
        if np.any(live):
            zeta = _log_from(model, y, resample_points(f, grid, nodes[live]))
            vectors[live] += weights[live, None] * zeta
    out = _repeat(y, nodes.size)
    moving = np.any(vectors != 0.0, axis=1)
    if np.any(moving):
        end = model.exp(_repeat(y, int(moving.sum())), vectors[moving])
        out.coords[moving] = end.coords
        out.charts[moving] = end.charts
    return out


def _branches(grid: DomainGrid):
    params = grid.params
    t = glued_log_radius(grid)[grid.active_index]
    outer = t >= np.log(2.0 / params.r) - SNAP
    inner = t <= np.log(params.delta / (2.0 * params.R)) + SNAP
    return outer, inner, ~(outer | inner)


def preglue(pair: MapPair, grid: DomainGrid) -> DiscreteMap:
    """The preglued map `f^R` on the glued grid.

    `f^R = f⁰(z)` for `|z| ≥ 2/(δR)`, `f^∞(R²z)` for `|z| ≤ δ/(2R)`, and
    `exp_y(ρ(δRz) ζ⁰(z) + ρ(δ/(Rz)) ζ^∞(R²z))` on the neck in between. Values on the two
    outer branches are copied node for node from the sphere grids, and the neck is exactly
    `y` wherever both cutoffs vanish.

    Args:
        pair (MapPair): The maps to glue.
        grid (DomainGrid): The glued grid, built for the pair's parameters.

    Returns:
        (DiscreteMap): `f^R`.

    Raises:
        OutOfInjectivityRadius: If the neck values are too far from `y`.
    """
    _require_glued(grid, "preglue")
    assert grid.params == pair.params, "The glued grid and the pair use different (δ, R)"
    model = pair.model
    index = grid.active_index
    outer, inner, neck = _branches(grid)
    coords = np.empty((index.size, model.dimension))
    charts = np.empty(index.size, dtype=np.int64)
    for mask, values in (
        (outer, lambda nodes: resample_points(pair.zero, grid, nodes)),
        (inner, lambda nodes: resample_points(pair.infinity, grid, nodes)),
        (neck, lambda nodes: _neck_values(pair, grid, nodes)),
    ):
        if np.any(mask):
            point = values(index[mask])
            coords[mask] = point.coords
            charts[mask] = point.charts
    return DiscreteMap(grid, model, coords, charts, name="fR")


def seam_mismatch(pair: MapPair, grid: DomainGrid) -> float:
    """Largest distance between the neck formula and the outer branches next to the seams.

    The neck formula is evaluated on the branch nodes within two rows of the circles
    `|z| = 2/(δR)` and `|z| = δ/(2R)` and compared with the copied values.
    """
    _require_glued(grid, "seam_mismatch")
    params = grid.params
    model = pair.model
    t = glued_log_radius(grid)[grid.active_index]
    band = 2.0 * grid.lattice["d_tau"] + SNAP
    hi = np.log(2.0 / params.r)
    lo = np.log(params.delta / (2.0 * params.R))
    worst = 0.0
    for f, mask in (
        (pair.zero, (t >= hi - SNAP) & (t <= hi + band)),
        (pair.infinity, (t <= lo + SNAP) & (t >= lo - band)),
    ):
        nodes = grid.active_index[mask]
        if nodes.size == 0:
            continue
        branch = resample_points(f, grid, nodes)
        formula = _neck_values(pair, grid, nodes)
        gap = model.norm(branch, model.log(branch, formula))
        worst = max(worst, float(gap.max()))
    return worst


def zeta_growth(pair: MapPair, grid: DomainGrid) -> Dict[str, float]:
    """`max |ζ⁰(z)| / |z|` over `δ/R ≤ |z| ≤ 2/(δR)` against `sup |df⁰|` near `x₁`."""
    _require_glued(grid, "zeta_growth")
    params = grid.params
    t = glued_log_radius(grid)
    lo, hi = np.log(params.delta / params.R), np.log(2.0 / params.r)
    mask = grid.active & (t >= lo - SNAP) & (t <= hi + SNAP)
    nodes = np.flatnonzero(mask)
    zeta0, _ = zeta_fields(pair, grid, nodes)
    length = pair.model.norm(_repeat(pair.y, nodes.size), zeta0)
    slope = float(np.max(length / np.exp(t[nodes])))
    zero_grid = pair.zero.grid
    near = glued_log_radius(zero_grid)[zero_grid.active_index] <= np.log(2.0 / params.r) + SNAP
    first, _ = pair.zero.differential_norms()
    return {"slope": slope, "df_sup": float(first[near].max())}


def constancy_annulus(f_R: DiscreteMap, y: TargetPoint) -> Dict[str, float]:
    """Measure the band of core rows around `|z| = 1/R` on which `f^R ≡ y` node for node.

    Returns:
        The measured inner and outer radii, the annulus `δ/R ≤ |z| ≤ 1/(δR)` and whether
        the measured band contains it.
    """
    grid = f_R.grid
    _require_glued(grid, "constancy_annulus")
    params = grid.params
    rows, cols = grid.lattice["core_shape"]
    core = np.flatnonzero(grid.subgrid == CORE)
    same = np.all(f_R.coords[core] == y.coords[0], axis=1) & (f_R.charts[core] == y.charts[0])
    same = same.reshape(rows, cols).all(axis=1)
    row_tau = grid.tau[core].reshape(rows, cols)[:, 0]
    anchor = int(np.argmin(np.abs(row_tau - grid.layout.anchor)))
    design = {"design_inner": params.delta / params.R, "design_outer": 1.0 / params.r}
    if not same[anchor]:
        nan = float("nan")
        return {"inner_radius": nan, "outer_radius": nan, **design, "contains_design_annulus": False}
    lo = hi = anchor
    while lo - 1 >= 1 and same[lo - 1]:
        lo -= 1
    while hi + 1 <= rows - 2 and same[hi + 1]:
        hi += 1
    inner, outer = float(np.exp(row_tau[lo])), float(np.exp(row_tau[hi]))
    contains = inner <= design["design_inner"] * (1 + 1e-9) and outer >= design["design_outer"] * (1 - 1e-9)
    return {"inner_radius": inner, "outer_radius": outer, **design, "contains_design_annulus": contains}


def perturbed_maps(f_R: DiscreteMap, pair: MapPair) -> Tuple[DiscreteMap, DiscreteMap]:
    """`f^{0,r}` on the sphere-zero grid and `f^{∞,r}` on the sphere-infinity grid.

    `f^{0,r}(z) = f^R(z)` for `|z| > 1/r` and `y` otherwise; `f^{∞,r}(w) = f^R(w/R²)` for
    `|w| < r` and `y` otherwise, with `r = δR`. Where `f^R` is copied from a sphere map,
    the perturbed map holds the same values bit for bit.
    """
    params = f_R.grid.params
    model, y = pair.model, pair.y
    out = []
    for grid, take, name in (
        (pair.zero.grid, lambda t: t > -np.log(params.r) + SNAP, "f0r"),
        (pair.infinity.grid, lambda t: t < np.log(params.delta / params.R) - SNAP, "finfr"),
    ):
        index = grid.active_index
        mask = take(glued_log_radius(grid)[index])
        point = _repeat(y, index.size)
        if np.any(mask):
            values = resample_points(f_R, grid, index[mask])
            point.coords[mask] = values.coords
            point.charts[mask] = values.charts
        out.append(DiscreteMap(grid, model, point.coords, point.charts, name=name))
    return out[0], out[1]


def perturbation_size(f: DiscreteMap, f_r: DiscreteMap, p: float = DEFAULT_P) -> float:
    """`‖log_f f_r‖_{W^{2,p}}` on the sphere grid of `f`."""
    moving = ~f.same_values(f_r)
    values = np.zeros((f.num_active, f.dimension))
    if np.any(moving):
        values[moving] = f.model.log(f.active_point().take(moving), f_r.active_point().take(moving))
    return sphere_sobolev_norm(f.section(values), 2, p)


def split_eta(
    eta: Section, f0r: DiscreteMap, f_inf_r: DiscreteMap
) -> Tuple[Section, Section]:
    """Cut `η` along `|z| = 1/R` into `η⁰` on the sphere-zero grid and `η^∞` on the other.

    Nodes on the circle carry one half to each side, so `η⁰(z) + η^∞(R²z) = η(z)` at
    every glued node.
    """
    _require_glued(eta.base.grid, "split_eta")
    log_R = np.log(eta.base.grid.params.R)
    parts = []
    for f, side in ((f0r, 1.0), (f_inf_r, -1.0)):
        grid = f.grid
        offset = side * (glued_log_radius(grid)[grid.active_index] + log_R)
        weight = np.where(offset > SNAP, 1.0, np.where(offset >= -SNAP, 0.5, 0.0))
        parts.append(transfer_section(eta, f, weight))
    return parts[0], parts[1]


def patch_xi(
    xi0: Section,
    xi_inf: Section,
    xi_zero: np.ndarray,
    f_R: DiscreteMap,
    tol: float = 1e-8,
) -> Section:
    """Patch the two sphere solutions into one section over `f^R`.

    With `β = β_{δ,R}`:

    - `ξ⁰(z)` for `|z| ≥ 1/(δR)`,
    - `ξ⁰(z) + β(1/(R²z))(ξ^∞(R²z) − ξ₀)` for `1/R < |z| < 1/(δR)`,
    - `ξ⁰(z) + ξ^∞(R²z) − ξ₀` on `|z| = 1/R`,
    - `ξ^∞(R²z) + β(z)(ξ⁰(z) − ξ₀)` for `δ/R < |z| < 1/R`,
    - `ξ^∞(R²z)` for `|z| ≤ δ/R`.

    Raises:
        MatchingViolation: If `ξ⁰(0)` or `ξ^∞(∞)` differs from `ξ₀` by more than `tol`.
    """
    grid = f_R.grid
    _require_glued(grid, "patch_xi")
    params = grid.params
    xi_zero = np.asarray(xi_zero, dtype=float).reshape(-1)
    gaps = []
    for xi, subgrid in ((xi0, INNER), (xi_inf, OUTER)):
        origin = xi.base.grid.cap_origin(subgrid)
        gaps.append(float(np.max(np.abs(xi.values[xi.base.grid.position[origin]] - xi_zero))))
    if max(gaps) > tol:
        raise MatchingViolation(
            f"ξ⁰(0) and ξ^∞(∞) differ from ξ₀ by {gaps[0]:.3e} and {gaps[1]:.3e} (tolerance {tol:.1e})"
        )
    index = grid.active_index
    t = glued_log_radius(grid)[index]
    log_R = np.log(params.R)
    need0 = t >= np.log(params.delta / params.R) - SNAP
    need_inf = t <= -np.log(params.r) + SNAP
    at0 = np.zeros((index.size, f_R.dimension))
    at_inf = np.zeros_like(at0)
    at0[need0] = resample_vectors(xi0, f_R, index[need0])
    at_inf[need_inf] = resample_vectors(xi_inf, f_R, index[need_inf])
    beta_z = beta_of_log_radius(t, params)[:, None]
    beta_inverse = beta_of_log_radius(-2.0 * log_R - t, params)[:, None]
    upper = (t > -log_R + SNAP)[:, None]
    lower = (t < -log_R - SNAP)[:, None]
    values = np.where(
        upper,
        at0 + beta_inverse * np.where(need_inf[:, None], at_inf - xi_zero, 0.0),
        np.where(
            lower,
            at_inf + beta_z * np.where(need0[:, None], at0 - xi_zero, 0.0),
            at0 + at_inf - xi_zero,
        ),
    )
    return Section(f_R, values)
