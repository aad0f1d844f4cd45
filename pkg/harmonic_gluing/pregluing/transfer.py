from typing import Optional

import numpy as np

from ..domain import DomainGrid, Stencil
from ..harmonic.maps import DiscreteMap, Section, interpolate_points
from ..manifold import TargetPoint


def glued_log_radius(grid: DomainGrid) -> np.ndarray:
    """`log|z|` of every node in the glued coordinate `z`."""
    return grid.tau + np.log(grid.layout.glued_scale)


def locate_nodes(src: DomainGrid, dst: DomainGrid, nodes: np.ndarray) -> Stencil:
    """Donors on `src` for the nodes `nodes` of `dst`, matched through the glued coordinate.

    Nodes that coincide with an active node of the same subgrid kind are copied exactly.
    """
    src.require_log_polar("locate_nodes")
    dst.require_log_polar("locate_nodes")
    shift = np.log(dst.layout.glued_scale) - np.log(src.layout.glued_scale)
    return src.locate(dst.tau[nodes] + shift, dst.angle[nodes], prefer=dst.subgrid[nodes])


def resample_points(
    f: DiscreteMap, dst: DomainGrid, nodes: np.ndarray, stencil: Optional[Stencil] = None
) -> TargetPoint:
    """Values of `f` at the nodes `nodes` of another grid."""
    stencil = stencil or locate_nodes(f.grid, dst, nodes)
    point, _, _, _ = interpolate_points(f.model, f.coords, f.charts, stencil.index, stencil.coeff)
    return point


def resample_vectors(
    xi: Section, dst: DiscreteMap, nodes: np.ndarray, stencil: Optional[Stencil] = None
) -> np.ndarray:
    """Components of `ξ` at the nodes `nodes` of `dst.grid`, in the charts of `dst`.

    Each donor vector is moved to the destination chart by the chart Jacobian at the
    donor and the results are combined with the Lagrange coefficients. The two maps are
    expected to agree (up to interpolation) at the resampled nodes.
    """
    src = xi.base
    model = src.model
    n = model.dimension
    nodes = np.asarray(nodes, dtype=np.int64)
    if nodes.size == 0:
        return np.zeros((0, n))
    stencil = stencil or locate_nodes(src.grid, dst.grid, nodes)
    index, coeff = stencil.index, stencil.coeff
    m, k = index.shape
    keep = coeff != 0.0
    main = index[np.arange(m), np.argmax(np.abs(coeff), axis=1)]
    donors = np.where(keep, index, main[:, None]).ravel()
    jac = model.transition_jacobian(
        src.coords[donors], src.charts[donors], np.repeat(dst.charts[nodes], k)
    ).reshape(m, k, n, n)
    vectors = xi.values[src.grid.position[donors]].reshape(m, k, n)
    return np.einsum("mk,mkij,mkj->mi", np.where(keep, coeff, 0.0), jac, vectors)


def transfer_section(
    xi: Section, dst: DiscreteMap, weight: np.ndarray
) -> Section:
    """`weight · ξ` resampled onto the active nodes of `dst`; zero where the weight vanishes.

    Args:
        xi (Section): Section on the source grid.
        dst (DiscreteMap): Base map of the result.
        weight (np.ndarray): Weight per active node of `dst`.
    """
    weight = np.asarray(weight, dtype=float)
    values = np.zeros((dst.num_active, dst.dimension))
    carry = np.flatnonzero(weight != 0.0)
    if carry.size:
        nodes = dst.grid.active_index[carry]
        values[carry] = weight[carry, None] * resample_vectors(xi, dst, nodes)
    return Section(dst, values)
