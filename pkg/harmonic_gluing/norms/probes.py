from typing import TYPE_CHECKING, Optional

import numpy as np

from ..domain import DomainGrid

if TYPE_CHECKING:
    from ..harmonic.maps import DiscreteMap, Section

FRAME_CHART = 0


def smooth_field(grid: DomainGrid, rng: np.random.Generator, modes: int = 3) -> np.ndarray:
    """A random smooth scalar field on every node of `grid`.

    Log-polar grids get Gaussians in `τ` times `cos(mφ + φ_m)`; they vanish to infinite
    order at both cap origins. Patch grids get a few periodic Fourier modes.
    """
    if grid.kind == "patch":
        side = grid.lattice["side_length"]
        s, t = grid.local[:, 0], grid.local[:, 1]
        field = np.zeros(grid.num_nodes)
        for _ in range(modes):
            k, l = rng.integers(-2, 3, size=2)
            phase = rng.uniform(0.0, 2 * np.pi)
            field += rng.normal() * np.cos(2 * np.pi * (k * s + l * t) / side + phase)
        return field
    grid.require_log_polar("smooth_field")
    lo, hi = grid.layout.tau_in, grid.layout.tau_out
    span = max(hi - lo, 1.0)
    field = np.zeros(grid.num_nodes)
    with np.errstate(invalid="ignore"):
        for m in range(modes + 1):
            center = rng.uniform(lo - 0.5, hi + 0.5)
            width = rng.uniform(0.15, 0.4) * span
            phase = rng.uniform(0.0, 2 * np.pi)
            envelope = np.exp(-(((grid.tau - center) / width) ** 2))
            field += rng.normal() * np.nan_to_num(envelope) * np.cos(m * grid.angle + phase)
    return field


def bump_field(
    grid: DomainGrid, rng: np.random.Generator, width: Optional[float] = None
) -> np.ndarray:
    """A single localized bump at a random node, of random width."""
    if grid.kind == "patch":
        side = grid.lattice["side_length"]
        width = width or rng.uniform(0.05, 0.2) * side
        center = grid.local[rng.integers(grid.num_nodes)]
        delta = np.abs(grid.local - center)
        delta = np.minimum(delta, side - delta)
        return np.exp(-np.sum(delta**2, axis=1) / width**2)
    grid.require_log_polar("bump_field")
    finite = np.flatnonzero(np.isfinite(grid.tau) & grid.active)
    center = finite[rng.integers(finite.size)]
    width = width or rng.uniform(0.2, 1.0)
    with np.errstate(invalid="ignore"):
        radial = np.nan_to_num(np.exp(-(((grid.tau - grid.tau[center]) / width) ** 2)))
    angular = np.exp((np.cos(grid.angle - grid.angle[center]) - 1.0) / (0.5 * width) ** 2)
    return radial * angular


def section_from_fields(base: "DiscreteMap", fields: np.ndarray) -> "Section":
    """Read `fields` (one scalar field per target component) as a section in a fixed frame.

    Components are taken in the coordinate frame of chart 0 and rewritten in the chart of
    each node's value; the section vanishes where chart 0 does not reach.
    """
    grid, model = base.grid, base.model
    fields = np.asarray(fields, dtype=float)
    if fields.shape[0] == grid.num_nodes:
        fields = fields[grid.active_index]
    point = base.active_point()
    frame = np.full(len(point), FRAME_CHART)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        in_frame = model.express(point, frame)
        jac = model.transition_jacobian(in_frame, frame, point.charts)
    jac = np.where(np.isfinite(jac), jac, 0.0)
    return base.section(np.einsum("mij,mj->mi", jac, fields))


def random_section(
    base: "DiscreteMap", rng: np.random.Generator, modes: int = 3, sup: float = 1.0
) -> "Section":
    """A smooth random section with `sup |ξ| = sup`."""
    fields = np.stack(
        [smooth_field(base.grid, rng, modes) for _ in range(base.dimension)], axis=1
    )
    section = section_from_fields(base, fields)
    scale = float(section.pointwise_norm().max())
    return section * (sup / scale if scale > 0 else 0.0)


def bump_section(base: "DiscreteMap", rng: np.random.Generator) -> "Section":
    direction = rng.normal(size=base.dimension)
    fields = bump_field(base.grid, rng)[:, None] * direction[None, :]
    return section_from_fields(base, fields)
