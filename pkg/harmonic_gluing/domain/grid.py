from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np
import wandb
from scipy import ndimage, sparse

from ..errors import MissingNodes, WrongDomain
from .weight import (
    GluingParams,
    Resolution,
    round_theta,
    smoothstep,
    theta_of_radius,
)

CORE, INNER, OUTER, PATCH = 0, 1, 2, 3
SUBGRID_NAMES = {CORE: "core", INNER: "inner-cap", OUTER: "outer-cap", PATCH: "patch"}

# E, W, N, S, NE, NW, SE, SW in the local (s, t) frame of each subgrid
NEIGHBOR_OFFSETS = np.array(
    [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, 1), (1, -1), (-1, -1)]
)
E, W, N, S, NE, NW, SE, SW = range(8)

SNAP = 1e-9


def lagrange_weights(t: np.ndarray) -> np.ndarray:
    """Cubic Lagrange weights for the nodes `-1, 0, 1, 2` at offset `t`, shape `(M, 4)`."""
    t = np.asarray(t, dtype=float)
    return np.stack(
        [
            -t * (t - 1.0) * (t - 2.0) / 6.0,
            (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
            -(t + 1.0) * t * (t - 2.0) / 2.0,
            (t + 1.0) * t * (t - 1.0) / 6.0,
        ],
        axis=-1,
    )


def _split(x: np.ndarray):
    """Integer base and fractional offset of lattice positions, snapped onto nodes."""
    base = np.floor(x)
    frac = x - base
    up = frac > 1.0 - SNAP
    base[up] += 1.0
    frac[up] = 0.0
    frac[frac < SNAP] = 0.0
    return base.astype(np.int64), frac


@dataclass(frozen=True)
class Layout:
    """Placement of the log-polar core and the two caps in the grid's own coordinate.

    The core carries rows `τ_j = anchor + jΔτ`. The inner cap uses `u = z e^{−τ_in}` and
    is active on `|u| ≤ 1`; the outer cap uses `w = e^{τ_out} / z`, active on `|w| ≤ 1`.
    `glued_scale` converts the grid coordinate to the glued coordinate `z`.
    """

    kind: str
    tau_in: float
    tau_out: float
    anchor: float
    theta: Callable[[np.ndarray], np.ndarray]
    glued_scale: float = 1.0


@dataclass
class Stencil:
    """Interpolation stencils into the active nodes of a grid.

    Arguments:
        index (np.ndarray): Donor node indices, shape `(M, 16)`.
        coeff (np.ndarray): Lagrange coefficients, shape `(M, 16)`; zero for unused donors.
        subgrid (np.ndarray): Subgrid the stencil lives on, shape `(M,)`.
    """

    index: np.ndarray
    coeff: np.ndarray
    subgrid: np.ndarray

    @property
    def exact(self) -> np.ndarray:
        return np.count_nonzero(self.coeff, axis=1) == 1

    def matrix(self, grid: "DomainGrid") -> sparse.csr_matrix:
        """Sparse matrix from active values of `grid` to the located points."""
        m = self.index.shape[0]
        keep = self.coeff != 0.0
        rows = np.repeat(np.arange(m), self.index.shape[1])[keep.ravel()]
        cols = grid.position[self.index[keep]]
        return sparse.csr_matrix(
            (self.coeff[keep], (rows, cols)), shape=(m, grid.num_active)
        )


class DomainGrid:
    """Multi-scale discretization of a domain surface.

    Nodes are stored in one flat array: log-polar core nodes first (row-major in
    `(τ, φ)`), then the inner cap, then the outer cap. Each node is either *active* (an
    unknown of every discrete operator) or *fringe* (a stencil neighbour of an active node
    whose value is interpolated from active donors on another subgrid). A periodic patch
    grid has a single `patch` subgrid and no fringe.

    !!! note "Node geometry"
        - `lam` is the conformal factor of the domain metric in the local frame, so the
          metric reads `lam² (ds² + dt²)` in local coordinates `(s, t)`.
        - `weight` is the blended quadrature weight `blend · cell · lam²`. The overlap
          bands are counted once through a `C²` partition of unity.
        - `mass` is a positive lumped mass used for spectral inner products.

    Grids are built by [`build_grid`][harmonic_gluing.domain.grid.build_grid],
    [`build_sphere_grid`][harmonic_gluing.domain.grid.build_sphere_grid] and
    [`build_patch_grid`][harmonic_gluing.domain.grid.build_patch_grid].
    """

    def __init__(
        self,
        kind: str,
        subgrid: np.ndarray,
        active: np.ndarray,
        local: np.ndarray,
        spacing: np.ndarray,
        lam: np.ndarray,
        neighbors: np.ndarray,
        weight: np.ndarray,
        mass: np.ndarray,
        tau: Optional[np.ndarray] = None,
        angle: Optional[np.ndarray] = None,
        layout: Optional[Layout] = None,
        params: Optional[GluingParams] = None,
        resolution: Optional[Resolution] = None,
        lattice: Optional[dict] = None,
    ) -> None:
        self.kind = kind
        self.subgrid = subgrid
        self.active = active
        self.local = local
        self.spacing = spacing
        self.lam = lam
        self.neighbors = neighbors
        self.weight = weight
        self.mass = mass
        self.tau = tau
        self.angle = angle
        self.layout = layout
        self.params = params
        self.resolution = resolution
        self.lattice = lattice or {}
        self.active_index = np.flatnonzero(active)
        self.fringe_index = np.flatnonzero(~active)
        self.position = np.full(active.size, -1, dtype=np.int64)
        self.position[self.active_index] = np.arange(self.active_index.size)
        self.fringe = None
        if self.fringe_index.size:
            self.fringe = self.locate(
                self.tau[self.fringe_index],
                self.angle[self.fringe_index],
                forbid=self.subgrid[self.fringe_index],
            )

    def __repr__(self) -> str:
        return (
            f"DomainGrid(kind={self.kind!r}, nodes={self.num_nodes}, "
            f"active={self.num_active})"
        )

    @property
    def num_nodes(self) -> int:
        return self.active.size

    @property
    def num_active(self) -> int:
        return self.active_index.size

    @property
    def is_log_polar(self) -> bool:
        return self.layout is not None

    def require_log_polar(self, operation: str) -> None:
        if not self.is_log_polar:
            raise WrongDomain(f"{operation} needs a log-polar grid, got a {self.kind} grid")

    # coordinates

    def radius(self) -> np.ndarray:
        """`|ζ|` of every node in the grid's own coordinate (`0` and `inf` at the cap origins)."""
        self.require_log_polar("radius")
        with np.errstate(over="ignore"):
            return np.exp(self.tau)

    def glued_radius(self) -> np.ndarray:
        return self.radius() * self.layout.glued_scale

    def complex_coordinate(self) -> np.ndarray:
        """Complex coordinate `ζ` of every node, `inf` at the outer-cap origin."""
        r = self.radius()
        with np.errstate(invalid="ignore"):
            z = r * np.exp(1j * self.angle)
        z[np.isinf(r)] = np.inf
        return z

    def inverse_coordinate(self) -> np.ndarray:
        """`1/ζ` of every node, `inf` at the inner-cap origin."""
        with np.errstate(over="ignore"):
            r = np.exp(-self.tau)
        with np.errstate(invalid="ignore"):
            q = r * np.exp(-1j * self.angle)
        q[np.isinf(r)] = np.inf
        return q

    def node_at(self, subgrid: int, local) -> int:
        """Index of the node of `subgrid` at lattice position `local` (row/col or `a`/`b`)."""
        a, b = local
        if subgrid == CORE:
            rows, cols = self.lattice["core_shape"]
            return int(a * cols + b)
        table, offset = self.lattice[subgrid]
        index = table[a + offset, b + offset]
        if index < 0:
            raise MissingNodes(f"No node at {local} of the {SUBGRID_NAMES[subgrid]}")
        return int(index)

    def cap_origin(self, subgrid: int) -> int:
        return self.node_at(subgrid, (0, 0))

    def _deepest(self, tau: np.ndarray) -> np.ndarray:
        """Subgrid each `τ` lies deepest in; the core owns the middle of both overlaps."""
        half = 0.5 * self.lattice["overlap"]
        deepest = np.full(tau.shape, CORE)
        deepest[tau - self.layout.tau_in <= -half] = INNER
        deepest[self.layout.tau_out - tau <= -half] = OUTER
        return deepest

    def owned(self) -> np.ndarray:
        """Nodes of the subgrid they lie deepest in.

        Every point of the domain is owned by exactly one subgrid, so sup norms over owned
        nodes skip the outer rows of each overlap band, where a coarse lattice resolves
        the other subgrid's scales.
        """
        if not self.is_log_polar:
            return np.ones(self.num_nodes, dtype=bool)
        return self.subgrid == self._deepest(self.tau)

    # regions

    def region(self, name: str, margin: float = 0.0) -> np.ndarray:
        """Boolean node mask of a named region.

        Radii refer to the glued coordinate `z`. Available names: `neck`
        (`δ/(2R) ≤ |z| ≤ 2/(δR)`), `omega1` (`δ/R ≤ |z| ≤ 1/R`), `omega2`
        (`1/R ≤ |z| ≤ 1/(δR)`), `off_neck` (outside `δ/R ≤ |z| ≤ 1/(δR)` widened by
        `margin` in `τ` units), `core`, `caps` and `all`.
        """
        if name == "all":
            return np.ones(self.num_nodes, dtype=bool)
        if name == "core":
            return self.subgrid == CORE
        if name == "caps":
            return (self.subgrid == INNER) | (self.subgrid == OUTER)
        if self.params is None:
            raise WrongDomain(f"Region '{name}' needs gluing parameters")
        d, R = self.params.delta, self.params.R
        with np.errstate(divide="ignore"):
            t = self.tau + np.log(self.layout.glued_scale)
        eps = SNAP

        def between(lo, hi):
            return (t >= np.log(lo) - eps) & (t <= np.log(hi) + eps)

        if name == "neck":
            return between(d / (2 * R), 2 / (d * R))
        if name == "omega1":
            return between(d / R, 1 / R)
        if name == "omega2":
            return between(1 / R, 1 / (d * R))
        if name == "off_neck":
            return (t > np.log(1 / (d * R)) + margin + eps) | (t < np.log(d / R) - margin - eps)
        raise KeyError(f"Unknown region '{name}'")

    # interpolation

    def _core_stencil(self, tau, angle):
        rows, cols = self.lattice["core_shape"]
        j_min = self.lattice["j_min"]
        d_tau, d_phi = self.lattice["d_tau"], self.lattice["d_phi"]
        finite = np.isfinite(tau)
        x = np.where(finite, (np.where(finite, tau, 0.0) - self.layout.anchor) / d_tau - j_min, -10.0)
        y = np.mod(angle, 2 * np.pi) / d_phi
        i0, tx = _split(x)
        k0, ty = _split(y)
        offsets = np.arange(-1, 3)
        row = i0[:, None] + offsets[None, :]
        col = np.mod(k0[:, None] + offsets[None, :], cols)
        wx, wy = lagrange_weights(tx), lagrange_weights(ty)
        index = (row[:, :, None] * cols + col[:, None, :]).reshape(-1, 16)
        coeff = (wx[:, :, None] * wy[:, None, :]).reshape(-1, 16)
        used = coeff != 0.0
        row16 = np.repeat(row, 4, axis=1)
        inside = (row16 >= 1) & (row16 <= rows - 2)
        valid = finite & np.all(inside | ~used, axis=1)
        index = np.where(inside, index, 0)
        return index, coeff, valid

    def _cap_stencil(self, subgrid, tau, angle):
        table, offset = self.lattice[subgrid]
        h = self.lattice["h_cap"]
        with np.errstate(over="ignore", invalid="ignore"):
            if subgrid == INNER:
                modulus = np.exp(tau - self.layout.tau_in)
                phase = angle
            else:
                modulus = np.exp(self.layout.tau_out - tau)
                phase = -angle
        finite = np.isfinite(modulus) & (modulus <= 2.0)
        modulus = np.where(finite, modulus, 0.0)
        a0, ta = _split(modulus * np.cos(phase) / h)
        b0, tb = _split(modulus * np.sin(phase) / h)
        offsets = np.arange(-1, 3)
        a = a0[:, None] + offsets[None, :] + offset
        b = b0[:, None] + offsets[None, :] + offset
        size = table.shape[0]
        aa = np.repeat(a, 4, axis=1)
        bb = np.tile(b, (1, 4))
        inside = (aa >= 0) & (aa < size) & (bb >= 0) & (bb < size)
        index = np.where(inside, table[np.clip(aa, 0, size - 1), np.clip(bb, 0, size - 1)], -1)
        coeff = (lagrange_weights(ta)[:, :, None] * lagrange_weights(tb)[:, None, :]).reshape(-1, 16)
        used = coeff != 0.0
        ok = index >= 0
        ok[ok] = self.active[index[ok]]
        valid = finite & np.all(ok | ~used, axis=1)
        return np.where(index >= 0, index, 0), coeff, valid

    def locate(
        self,
        tau: np.ndarray,
        angle: np.ndarray,
        prefer: Optional[np.ndarray] = None,
        forbid: Optional[np.ndarray] = None,
    ) -> Stencil:
        """Find active donors for points given by `(τ, angle)` in the grid's coordinate.

        An exact node of the `prefer`-ed subgrid wins when it exists. Otherwise the
        point is interpolated on the subgrid it lies deepest in, falling back to any
        subgrid whose stencil is fully active.

        Args:
            tau (np.ndarray): `log|ζ|` of the points, `±inf` at the cap origins.
            angle (np.ndarray): `arg ζ` of the points.
            prefer (Optional[np.ndarray]): Preferred subgrid per point for exact matches.
            forbid (Optional[np.ndarray]): Subgrid per point that may not donate.

        Returns:
            (Stencil): Donors and Lagrange coefficients of every point.

        Raises:
            MissingNodes: If some point has no fully active stencil.
        """
        self.require_log_polar("locate")
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        angle = np.atleast_1d(np.asarray(angle, dtype=float))
        m = tau.size
        candidates = {
            CORE: self._core_stencil(tau, angle),
            INNER: self._cap_stencil(INNER, tau, angle),
            OUTER: self._cap_stencil(OUTER, tau, angle),
        }
        if forbid is not None:
            for kind, (_, _, valid) in candidates.items():
                valid &= forbid != kind
        choice = np.full(m, -1)
        if prefer is not None:
            for kind, (_, coeff, valid) in candidates.items():
                exact = valid & (np.count_nonzero(coeff, axis=1) == 1)
                choice[(choice < 0) & (prefer == kind) & exact] = kind
        deepest = self._deepest(tau)
        for kind, (_, _, valid) in candidates.items():
            choice[(choice < 0) & (deepest == kind) & valid] = kind
        for kind in (CORE, INNER, OUTER):
            choice[(choice < 0) & candidates[kind][2]] = kind
        if np.any(choice < 0):
            raise MissingNodes(
                f"{int(np.sum(choice < 0))} point(s) have no active interpolation stencil "
                f"on the {self.kind} grid"
            )
        index = np.zeros((m, 16), dtype=np.int64)
        coeff = np.zeros((m, 16))
        for kind, (idx, cf, _) in candidates.items():
            mask = choice == kind
            index[mask] = idx[mask]
            coeff[mask] = cf[mask]
        return Stencil(index, coeff, choice)

    def prolongation(self) -> sparse.csr_matrix:
        """Scalar prolongation from active values to all nodes, shape `(N, N_act)`."""
        rows = [self.active_index]
        cols = [np.arange(self.num_active)]
        vals = [np.ones(self.num_active)]
        if self.fringe is not None:
            keep = self.fringe.coeff != 0.0
            rows.append(np.repeat(self.fringe_index, 16)[keep.ravel()])
            cols.append(self.position[self.fringe.index[keep]])
            vals.append(self.fringe.coeff[keep])
        return sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.num_nodes, self.num_active),
        )

    def extend(self, values: np.ndarray) -> np.ndarray:
        """Extend active nodal values (scalar or vector valued) to all nodes."""
        values = np.asarray(values, dtype=float)
        if values.shape[0] == self.num_nodes:
            return values
        if values.shape[0] != self.num_active:
            raise MissingNodes(
                f"Field has {values.shape[0]} values, expected {self.num_active} active "
                f"or {self.num_nodes} nodes"
            )
        full = np.zeros((self.num_nodes,) + values.shape[1:])
        full[self.active_index] = values
        if self.fringe is not None:
            keep = self.fringe.coeff != 0.0
            donors = values[self.position[np.where(keep, self.fringe.index, self.active_index[0])]]
            coeff = np.where(keep, self.fringe.coeff, 0.0)
            full[self.fringe_index] = np.einsum("md,md...->m...", coeff, donors)
        return full

    # export

    def node_table(self) -> Dict[str, np.ndarray]:
        table = {
            "node": np.arange(self.num_nodes),
            "subgrid": np.array([SUBGRID_NAMES[s] for s in self.subgrid]),
            "active": self.active.astype(int),
            "s": self.local[:, 0],
            "t": self.local[:, 1],
            "weight": self.weight,
            "mass": self.mass,
        }
        if self.is_log_polar:
            table["tau"] = self.tau
            table["angle"] = self.angle
        return table


def quadrature(grid: DomainGrid, field: np.ndarray) -> float:
    """Blended quadrature `∫ φ dv_g` of a nodal scalar field.

    Args:
        grid (DomainGrid): The grid.
        field (np.ndarray): Values at all nodes or at the active nodes.

    Returns:
        (float): The weighted integral.

    Raises:
        MissingNodes: If the field has the wrong length or is undefined at a weighted node.
    """
    field = np.asarray(field, dtype=float)
    if field.shape[0] == grid.num_active:
        weights = grid.weight[grid.active_index]
    elif field.shape[0] == grid.num_nodes:
        weights = grid.weight
    else:
        raise MissingNodes(
            f"Field has {field.shape[0]} values, the grid has {grid.num_nodes} nodes "
            f"({grid.num_active} active)"
        )
    if np.any(~np.isfinite(field[weights > 0])):
        raise MissingNodes("Field is undefined at nodes carrying quadrature weight")
    return float(np.sum(weights * np.where(weights > 0, field, 0.0)))


def involution_permutation(grid: DomainGrid) -> np.ndarray:
    """Node permutation of `z ↦ 1/(R² z)` on the glued grid.

    Core node `(j, k)` goes to `(−j, −k)` around the anchor row `|z| = 1/R`; inner-cap
    node `u` goes to the outer-cap node `w = u`.
    """
    if grid.kind != "glued":
        raise WrongDomain(f"The involution acts on the glued grid, got a {grid.kind} grid")
    rows, cols = grid.lattice["core_shape"]
    j_min = grid.lattice["j_min"]
    assert j_min + rows - 1 == -j_min, "The glued core rows are not symmetric"
    perm = np.empty(grid.num_nodes, dtype=np.int64)
    i, k = np.divmod(np.arange(rows * cols), cols)
    perm[: rows * cols] = (rows - 1 - i) * cols + np.mod(-k, cols)
    first_inner = rows * cols
    count = grid.lattice["cap_count"]
    perm[first_inner : first_inner + count] = np.arange(count) + first_inner + count
    perm[first_inner + count :] = np.arange(count) + first_inner
    return perm


# construction


def _cap_lattice(h: float):
    size = int(np.ceil(1.0 / h)) + 1
    a, b = np.meshgrid(np.arange(-size, size + 1), np.arange(-size, size + 1), indexing="ij")
    u = h * (a + 1j * b)
    active = np.abs(u) <= 1.0 + SNAP
    keep = ndimage.binary_dilation(active, structure=np.ones((3, 3), dtype=bool))
    table = np.full(a.shape, -1, dtype=np.int64)
    table[keep] = np.arange(int(keep.sum()))
    neighbors = np.full((int(keep.sum()), 8), -1, dtype=np.int64)
    ka, kb = np.nonzero(keep)
    for slot, (da, db) in enumerate(NEIGHBOR_OFFSETS):
        na, nb = ka + da, kb + db
        inside = (na >= 0) & (na < a.shape[0]) & (nb >= 0) & (nb < a.shape[1])
        neighbors[inside, slot] = table[na[inside], nb[inside]]
    return u[keep], active[keep], table, size, neighbors


def _log_polar_grid(
    layout: Layout, params: GluingParams, resolution: Resolution, quiet: bool = True
) -> DomainGrid:
    resolution.require_fine_enough()
    steps = max(1, int(np.ceil(params.log_inverse_delta / resolution.d_tau - SNAP)))
    d_tau = params.log_inverse_delta / steps
    cols = int(np.ceil(2 * np.pi / resolution.d_theta - SNAP))
    d_phi = 2 * np.pi / cols
    h = resolution.h_cap
    overlap = resolution.overlap_nodes * d_tau
    assert np.exp(-0.5 * overlap) + 3.0 * h <= 1.0, (
        "The overlap band is too narrow for the cap spacing: need exp(-o/2) + 3h <= 1"
    )

    j_min = int(np.floor((layout.tau_in - overlap - layout.anchor) / d_tau + SNAP))
    j_max = int(np.ceil((layout.tau_out + overlap - layout.anchor) / d_tau - SNAP))
    rows = j_max - j_min + 1
    row_tau = layout.anchor + d_tau * np.arange(j_min, j_max + 1)
    tau_first, tau_last = row_tau[1], row_tau[-2]

    def blend_in(tau):
        return smoothstep((tau - tau_first) / (layout.tau_in - tau_first))

    def blend_out(tau):
        return smoothstep((tau_last - tau) / (tau_last - layout.tau_out))

    # core
    ii, kk = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    core_tau = row_tau[ii].ravel()
    core_angle = (kk * d_phi).ravel()
    core_active = ((ii >= 1) & (ii <= rows - 2)).ravel()
    r = np.exp(core_tau)
    core_lam = r / layout.theta(r)
    core_blend = blend_in(core_tau) * blend_out(core_tau)
    core_omega = np.where((core_tau <= layout.tau_in) | (core_tau >= layout.tau_out), 0.5, 1.0)
    core_neighbors = np.full((rows * cols, 8), -1, dtype=np.int64)
    for slot, (di, dk) in enumerate(NEIGHBOR_OFFSETS):
        ni, nk = ii + di, np.mod(kk + dk, cols)
        inside = (ni >= 0) & (ni < rows)
        core_neighbors[:, slot] = np.where(inside, ni * cols + nk, -1).ravel()
    core_count = rows * cols

    # caps share one lattice
    u, cap_active, table, offset, cap_neighbors = _cap_lattice(h)
    count = u.size
    modulus = np.abs(u)
    with np.errstate(divide="ignore"):
        log_modulus = np.log(modulus)
    inner_tau = layout.tau_in + log_modulus
    inner_angle = np.angle(u)
    outer_tau = layout.tau_out - log_modulus
    outer_angle = np.mod(-np.angle(u), 2 * np.pi)
    e_in, e_out = np.exp(layout.tau_in), np.exp(layout.tau_out)
    inner_lam = e_in / layout.theta(e_in * modulus)
    outer_lam = e_out / (modulus**2 + e_out**2)
    inner_blend = 1.0 - blend_in(inner_tau)
    outer_blend = 1.0 - blend_out(outer_tau)
    inner_omega = np.where(inner_tau >= tau_first, 0.5, 1.0)
    outer_omega = np.where(outer_tau <= tau_last, 0.5, 1.0)

    def shift(nb, by):
        return np.where(nb >= 0, nb + by, -1)

    subgrid = np.concatenate(
        [np.full(core_count, CORE), np.full(count, INNER), np.full(count, OUTER)]
    ).astype(np.int8)
    active = np.concatenate([core_active, cap_active, cap_active])
    local = np.concatenate(
        [
            np.stack([core_tau, core_angle], axis=1),
            np.stack([u.real, u.imag], axis=1),
            np.stack([u.real, u.imag], axis=1),
        ]
    )
    spacing = np.concatenate(
        [np.tile([d_tau, d_phi], (core_count, 1)), np.full((2 * count, 2), h)]
    )
    lam = np.concatenate([core_lam, inner_lam, outer_lam])
    cell = np.concatenate([np.full(core_count, d_tau * d_phi), np.full(2 * count, h * h)])
    blend = np.concatenate([core_blend, inner_blend, outer_blend])
    omega = np.concatenate([core_omega, inner_omega, outer_omega])
    weight = np.where(active, blend * cell * lam**2, 0.0)
    mass = np.where(active, omega * cell * lam**2, 0.0)
    neighbors = np.concatenate(
        [core_neighbors, shift(cap_neighbors, core_count), shift(cap_neighbors, core_count + count)]
    )
    lattice = {
        "core_shape": (rows, cols),
        "j_min": j_min,
        "d_tau": d_tau,
        "d_phi": d_phi,
        "h_cap": h,
        "overlap": overlap,
        "cap_count": count,
        INNER: (np.where(table >= 0, table + core_count, -1), offset),
        OUTER: (np.where(table >= 0, table + core_count + count, -1), offset),
    }
    grid = DomainGrid(
        kind=layout.kind,
        subgrid=subgrid,
        active=active,
        local=local,
        spacing=spacing,
        lam=lam,
        neighbors=neighbors,
        weight=weight,
        mass=mass,
        tau=np.concatenate([core_tau, inner_tau, outer_tau]),
        angle=np.concatenate([core_angle, inner_angle, outer_angle]),
        layout=layout,
        params=params,
        resolution=Resolution(d_tau, d_phi, h, resolution.overlap_nodes),
        lattice=lattice,
    )
    if not quiet:
        wandb.termlog(
            f"Built {layout.kind} grid: {grid.num_nodes} nodes ({grid.num_active} active), "
            f"core {rows}x{cols}, Δτ={d_tau:.4g}"
        )
    return grid


def build_grid(
    params: GluingParams, resolution: Resolution = Resolution(), quiet: bool = True
) -> DomainGrid:
    """Discretize the glued sphere `S² #_{δ,R} S²` with the weighted metric `g^R`.

    The core rows are anchored on `|z| = 1/R`, with `Δτ` reduced so that `log(1/δ)` is a
    whole number of rows; the circles `δ/R`, `1/R` and `1/(δR)` are then grid circles.
    The inner cap uses `u = R² z`, the outer cap `w = 1/z`.

    **Usage:**

    ```python
    from harmonic_gluing.domain import GluingParams, Resolution, build_grid, quadrature

    grid = build_grid(GluingParams(delta=0.1, R=100.0, delta0=0.2), Resolution())
    area = quadrature(grid, np.ones(grid.num_nodes))  # ≈ 2πR² / (1 + R²)
    ```

    Args:
        params (GluingParams): Admissible gluing parameters.
        resolution (Resolution): Grid spacings.
        quiet (bool): Suppress the construction log line.

    Returns:
        (DomainGrid): The glued grid.

    Raises:
        InadmissibleParams: If `(δ, R)` is not admissible.
        ResolutionTooCoarse: If a spacing exceeds the minimum resolution.
    """
    params.require_admissible()
    log_R = float(np.log(params.R))
    layout = Layout(
        kind="glued",
        tau_in=-2.0 * log_R,
        tau_out=0.0,
        anchor=-log_R,
        theta=lambda r: theta_of_radius(r, params.R),
    )
    return _log_polar_grid(layout, params, resolution, quiet)


def build_sphere_grid(
    params: GluingParams, side: str, resolution: Resolution = Resolution(), quiet: bool = True
) -> DomainGrid:
    """Discretize one unglued round sphere on a lattice aligned with the glued grid.

    `side="zero"` carries `Σ₁` in its coordinate `z` with the gluing point `x₁ = 0` at
    the inner-cap origin. `side="infinity"` carries `Σ₂` in `w = R² z` with the gluing
    point `x₂ = ∞` at the outer-cap origin. Both use the round weight `1 + |ζ|²`, and
    their core lattices coincide node for node with the glued core.
    """
    params.require_admissible()
    log_R = float(np.log(params.R))
    if side == "zero":
        layout = Layout("sphere-zero", -log_R, 0.0, -log_R, round_theta, 1.0)
    elif side == "infinity":
        layout = Layout("sphere-infinity", 0.0, log_R, log_R, round_theta, params.R**-2)
    else:
        raise WrongDomain(f"Unknown sphere side '{side}', expected 'zero' or 'infinity'")
    return _log_polar_grid(layout, params, resolution, quiet)


def build_patch_grid(side_length: float = 1.0, nodes_per_side: int = 64) -> DomainGrid:
    """A periodic square patch `[0, L)²` with the flat unit weight `θ ≡ 1`."""
    assert side_length > 0 and nodes_per_side >= 4, "The patch needs a positive side and 4+ nodes"
    n = int(nodes_per_side)
    h = side_length / n
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    neighbors = np.empty((n * n, 8), dtype=np.int64)
    for slot, (di, dj) in enumerate(NEIGHBOR_OFFSETS):
        neighbors[:, slot] = (np.mod(ii + di, n) * n + np.mod(jj + dj, n)).ravel()
    count = n * n
    return DomainGrid(
        kind="patch",
        subgrid=np.full(count, PATCH, dtype=np.int8),
        active=np.ones(count, dtype=bool),
        local=np.stack([ii.ravel() * h, jj.ravel() * h], axis=1),
        spacing=np.full((count, 2), h),
        lam=np.ones(count),
        neighbors=neighbors,
        weight=np.full(count, h * h),
        mass=np.full(count, h * h),
        lattice={"patch_shape": (n, n), "side_length": side_length, "h": h},
    )
