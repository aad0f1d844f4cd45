from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy import sparse

from ..domain import DomainGrid
from ..domain.grid import E, N, NE, NW, S, SE, SW, W
from ..errors import MissingNodes
from ..manifold import TargetModel, TargetPoint


def interpolate_points(
    model: TargetModel,
    coords: np.ndarray,
    charts: np.ndarray,
    index: np.ndarray,
    coeff: np.ndarray,
    ref_charts: Optional[np.ndarray] = None,
):
    """Interpolate target points from donor nodes in the chart of the leading donor.

    Args:
        model (TargetModel): The target.
        coords (np.ndarray): Coordinates of every donor candidate, shape `(N, n)`.
        charts (np.ndarray): Chart ids of every donor candidate, shape `(N,)`.
        index (np.ndarray): Donor indices, shape `(M, K)`.
        coeff (np.ndarray): Interpolation coefficients summing to one, shape `(M, K)`.
        ref_charts (Optional[np.ndarray]): Charts to interpolate in; defaults to the chart
            of the donor with the largest coefficient.

    Returns:
        Normalized points, the interpolated coordinates in the reference charts, the
        reference charts and the donor indices with unused slots replaced.
    """
    m, k = index.shape
    n = coords.shape[1]
    keep = coeff != 0.0
    main = index[np.arange(m), np.argmax(np.abs(coeff), axis=1)]
    donors = np.where(keep, index, main[:, None])
    if ref_charts is None:
        ref_charts = charts[main]
    anchor = model.transition(coords[main], charts[main], ref_charts)
    flat = donors.ravel()
    expressed = model.transition(
        coords[flat],
        charts[flat],
        np.repeat(ref_charts, k),
        near=np.repeat(anchor, k, axis=0),
    ).reshape(m, k, n)
    p_ref = np.einsum("mk,mki->mi", np.where(keep, coeff, 0.0), expressed)
    point = model.normalize(TargetPoint(p_ref, ref_charts))
    return point, p_ref, np.asarray(ref_charts), donors


def vector_interpolation_blocks(
    model: TargetModel,
    coords: np.ndarray,
    charts: np.ndarray,
    donors: np.ndarray,
    coeff: np.ndarray,
    p_ref: np.ndarray,
    ref_charts: np.ndarray,
    out_charts: np.ndarray,
) -> np.ndarray:
    """Linearization of `interpolate_points`, shape `(M, K, n, n)`.

    Block `(ℓ, d)` maps a donor vector in the donor's chart to the interpolated point's
    chart: `c_d · J_{ref→out}(p_ref) · J_{d→ref}(f(d))`.
    """
    m, k = donors.shape
    n = coords.shape[1]
    flat = donors.ravel()
    j_in = model.transition_jacobian(
        coords[flat], charts[flat], np.repeat(ref_charts, k)
    ).reshape(m, k, n, n)
    j_out = model.transition_jacobian(p_ref, ref_charts, out_charts)
    return np.where(coeff != 0.0, coeff, 0.0)[:, :, None, None] * np.einsum(
        "mij,mkjl->mkil", j_out, j_in
    )


@dataclass
class LocalGeometry:
    """Per active node stencil data of a discrete map, in the chart of the node's value."""

    center: np.ndarray
    charts: np.ndarray
    neighbors: np.ndarray
    nb_values: np.ndarray
    nb_jacobian: np.ndarray
    h_s: np.ndarray
    h_t: np.ndarray
    lam: np.ndarray
    df: np.ndarray
    d2f: np.ndarray
    gamma: np.ndarray
    metric: np.ndarray
    _dgamma: Optional[np.ndarray] = field(default=None, repr=False)


class DiscreteMap:
    """A map from a domain grid into the target, sampled at the grid nodes.

    Values are stored for every node. Active values are the data; fringe values are
    always re-interpolated from active donors, in the chart of the leading donor, and
    normalized. All derived quantities (differences, Christoffel symbols, prolongation of
    sections) are cached on first use.

    **Usage:**

    ```python
    from harmonic_gluing.domain import GluingParams, build_sphere_grid
    from harmonic_gluing.harmonic import DiscreteMap
    from harmonic_gluing.manifold import RoundSphere, TargetPoint

    grid = build_sphere_grid(GluingParams(delta=0.2, R=20.0), "zero")
    sphere = RoundSphere()
    f = DiscreteMap.constant(grid, sphere, TargetPoint.single([0.0, 0.0]))
    ```

    Arguments:
        grid (DomainGrid): The domain grid.
        model (TargetModel): The target.
        coords (np.ndarray): Chart coordinates at the active nodes, shape
            `(N_act, n)`, or at all nodes (fringe values are then recomputed).
        charts (np.ndarray): Chart ids, same leading length as `coords`.
        ref_charts (Optional[np.ndarray]): Charts used to interpolate the fringe nodes,
            inherited by perturbations of this map so that the fringe stays smooth in
            the perturbation.
        name (str): Label used in node tables and log lines.
    """

    def __init__(
        self,
        grid: DomainGrid,
        model: TargetModel,
        coords: np.ndarray,
        charts: np.ndarray,
        ref_charts: Optional[np.ndarray] = None,
        name: str = "map",
    ) -> None:
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        charts = np.broadcast_to(np.asarray(charts, dtype=np.int64), coords.shape[:1])
        if coords.shape[0] == grid.num_nodes:
            coords = coords[grid.active_index]
            charts = charts[grid.active_index]
        if coords.shape[0] != grid.num_active:
            raise MissingNodes(
                f"Map '{name}' has {coords.shape[0]} values, expected {grid.num_active} "
                f"active or {grid.num_nodes} nodes"
            )
        assert coords.shape[1] == model.dimension, "Map values must match the target dimension"
        self.grid = grid
        self.model = model
        self.name = name
        active = model.normalize(TargetPoint(coords, charts))
        self.coords = np.zeros((grid.num_nodes, model.dimension))
        self.charts = np.zeros(grid.num_nodes, dtype=np.int64)
        self.coords[grid.active_index] = active.coords
        self.charts[grid.active_index] = active.charts
        self.ref_charts = None
        self._fringe_p_ref = None
        self._fringe_donors = None
        self._local = None
        self._prolongation = None
        self._fringe_blocks = None
        self._sync(ref_charts)

    def __repr__(self) -> str:
        return f"DiscreteMap(name={self.name!r}, grid={self.grid!r})"

    # construction

    @classmethod
    def constant(cls, grid: DomainGrid, model: TargetModel, y: TargetPoint, name: str = "constant"):
        y = model.normalize(y)
        return cls(
            grid,
            model,
            np.repeat(y.coords[:1], grid.num_active, axis=0),
            np.repeat(y.charts[:1], grid.num_active),
            name=name,
        )

    @classmethod
    def from_function(
        cls,
        grid: DomainGrid,
        model: TargetModel,
        function: Callable[[DomainGrid, np.ndarray], TargetPoint],
        name: str = "map",
    ):
        """Sample `function(grid, active_index) -> TargetPoint` at the active nodes."""
        point = function(grid, grid.active_index)
        return cls(grid, model, point.coords, point.charts, name=name)

    def _sync(self, ref_charts: Optional[np.ndarray]) -> None:
        stencil = self.grid.fringe
        if stencil is None:
            return
        point, p_ref, ref, donors = interpolate_points(
            self.model, self.coords, self.charts, stencil.index, stencil.coeff, ref_charts
        )
        fringe = self.grid.fringe_index
        self.coords[fringe] = point.coords
        self.charts[fringe] = point.charts
        self.ref_charts = ref
        self._fringe_p_ref = p_ref
        self._fringe_donors = donors

    def with_values(self, coords: np.ndarray, charts: np.ndarray, name: Optional[str] = None):
        """A map on the same grid with new active values and the same fringe charts."""
        return DiscreteMap(
            self.grid, self.model, coords, charts, self.ref_charts, name or self.name
        )

    def perturb(self, xi: "Section") -> "DiscreteMap":
        """`exp_f(ξ)` at the active nodes, fringe re-interpolated.

        Nodes where `ξ` vanishes keep their value bit for bit.
        """
        values = _values(xi)
        point = self.active_point()
        coords, charts = point.coords.copy(), point.charts.copy()
        moving = np.any(values != 0.0, axis=1)
        if np.any(moving):
            end = self.model.exp(point.take(moving), values[moving])
            coords[moving] = end.coords
            charts[moving] = end.charts
        return self.with_values(coords, charts, name=f"exp({self.name})")

    # access

    @property
    def dimension(self) -> int:
        return self.model.dimension

    @property
    def num_active(self) -> int:
        return self.grid.num_active

    def active_point(self) -> TargetPoint:
        index = self.grid.active_index
        return TargetPoint(self.coords[index], self.charts[index])

    def point(self, node: int) -> TargetPoint:
        return TargetPoint(self.coords[node : node + 1], self.charts[node : node + 1])

    def section(self, values: np.ndarray) -> "Section":
        return Section(self, values)

    def zero_section(self) -> "Section":
        return Section(self, np.zeros((self.num_active, self.dimension)))

    def same_values(self, other: "DiscreteMap") -> np.ndarray:
        """Active nodes where both maps hold identical coordinates and charts."""
        index = self.grid.active_index
        return np.all(self.coords[index] == other.coords[index], axis=1) & (
            self.charts[index] == other.charts[index]
        )

    # local geometry

    @property
    def local(self) -> LocalGeometry:
        if self._local is None:
            self._local = self._build_local()
        return self._local

    def _build_local(self) -> LocalGeometry:
        grid, model = self.grid, self.model
        index = grid.active_index
        nb = grid.neighbors[index]
        if np.any(nb < 0):
            raise MissingNodes(f"Active nodes of the {grid.kind} grid lack stencil neighbours")
        n = self.dimension
        center = self.coords[index]
        charts = self.charts[index]
        flat = nb.ravel()
        to_charts = np.repeat(charts, 8)
        nb_values = model.transition(
            self.coords[flat], self.charts[flat], to_charts, near=np.repeat(center, 8, axis=0)
        ).reshape(-1, 8, n)
        nb_jacobian = model.transition_jacobian(
            self.coords[flat], self.charts[flat], to_charts
        ).reshape(-1, 8, n, n)
        h_s = grid.spacing[index, 0][:, None]
        h_t = grid.spacing[index, 1][:, None]
        df, d2f = _differences(center, nb_values, h_s, h_t)
        return LocalGeometry(
            center=center,
            charts=charts,
            neighbors=nb,
            nb_values=nb_values,
            nb_jacobian=nb_jacobian,
            h_s=h_s,
            h_t=h_t,
            lam=grid.lam[index],
            df=df,
            d2f=d2f,
            gamma=model.christoffel(center, charts),
            metric=model.metric(center, charts),
        )

    def christoffel_derivative(self) -> np.ndarray:
        local = self.local
        if local._dgamma is None:
            local._dgamma = self.model.christoffel_derivative(local.center, local.charts)
        return local._dgamma

    def hessian(self) -> np.ndarray:
        """Covariant Hessian `∇df` at active nodes, slots `(ss, tt, st)`, shape `(m, 3, n)`.

        With `φ = log λ` the domain connection contributes `∓φ_s f_s ± φ_t f_t` on the
        diagonal and `−φ_t f_s − φ_s f_t` off it; the target adds `Γ(∂_a f, ∂_b f)`.
        """
        local = self.local
        log_lam = np.log(self.grid.lam[local.neighbors])
        phi_s = ((log_lam[:, E] - log_lam[:, W]) / (2.0 * local.h_s[:, 0]))[:, None]
        phi_t = ((log_lam[:, N] - log_lam[:, S]) / (2.0 * local.h_t[:, 0]))[:, None]
        f_s, f_t = local.df[:, 0], local.df[:, 1]
        domain = np.stack(
            [-phi_s * f_s + phi_t * f_t, phi_s * f_s - phi_t * f_t, -phi_t * f_s - phi_s * f_t],
            axis=1,
        )
        pairs = np.stack([f_s, f_t, f_s], axis=1), np.stack([f_s, f_t, f_t], axis=1)
        target = np.einsum("mkij,mai,maj->mak", local.gamma, *pairs)
        return local.d2f + domain + target

    def differential_norms(self) -> Tuple[np.ndarray, np.ndarray]:
        """Pointwise `|df|` and `|∇df|` measured with the domain and target metrics."""
        local = self.local
        h = local.metric
        first = np.sqrt(np.einsum("mai,mij,maj->m", local.df, h, local.df)) / local.lam
        weights = np.array([1.0, 1.0, 2.0])
        hess = self.hessian()
        second = np.sqrt(np.einsum("a,mai,mij,maj->m", weights, hess, h, hess)) / local.lam**2
        return first, second

    # sections

    def fringe_blocks(self) -> Optional[np.ndarray]:
        """Vector interpolation blocks of the fringe nodes, shape `(N_f, 16, n, n)`."""
        if self.grid.fringe is None:
            return None
        if self._fringe_blocks is None:
            fringe = self.grid.fringe_index
            self._fringe_blocks = vector_interpolation_blocks(
                self.model,
                self.coords,
                self.charts,
                self._fringe_donors,
                self.grid.fringe.coeff,
                self._fringe_p_ref,
                self.ref_charts,
                self.charts[fringe],
            )
        return self._fringe_blocks

    def extend_vectors(self, values: np.ndarray) -> np.ndarray:
        """Extend active tangent vectors to every node, shape `(N, n)`."""
        values = np.asarray(values, dtype=float)
        full = np.zeros((self.grid.num_nodes, self.dimension))
        full[self.grid.active_index] = values
        blocks = self.fringe_blocks()
        if blocks is not None:
            donors = values[self.grid.position[self._fringe_donors]]
            full[self.grid.fringe_index] = np.einsum("mkij,mkj->mi", blocks, donors)
        return full

    def prolongation(self) -> sparse.csr_matrix:
        """Sparse prolongation of flattened sections, shape `(N·n, N_act·n)`."""
        if self._prolongation is None:
            grid, n = self.grid, self.dimension
            comp = np.arange(n)
            rows = [(grid.active_index[:, None] * n + comp).ravel()]
            cols = [(np.arange(grid.num_active)[:, None] * n + comp).ravel()]
            vals = [np.ones(grid.num_active * n)]
            blocks = self.fringe_blocks()
            if blocks is not None:
                fringe = grid.fringe_index
                donors = grid.position[self._fringe_donors]
                shape = blocks.shape
                r = fringe[:, None, None, None] * n + comp[None, None, :, None]
                c = donors[:, :, None, None] * n + comp[None, None, None, :]
                rows.append(np.broadcast_to(r, shape).ravel())
                cols.append(np.broadcast_to(c, shape).ravel())
                vals.append(blocks.ravel())
            self._prolongation = sparse.csr_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                shape=(grid.num_nodes * n, grid.num_active * n),
            )
        return self._prolongation

    # export

    def node_table(self) -> Dict[str, np.ndarray]:
        table = self.grid.node_table()
        table["chart"] = self.charts
        for i in range(self.dimension):
            table[f"y{i}"] = self.coords[:, i]
        return table


def _differences(center, nb_values, h_s, h_t):
    east, west = nb_values[:, E], nb_values[:, W]
    north, south = nb_values[:, N], nb_values[:, S]
    d_s = (east - west) / (2.0 * h_s)
    d_t = (north - south) / (2.0 * h_t)
    d_ss = (east - 2.0 * center + west) / h_s**2
    d_tt = (north - 2.0 * center + south) / h_t**2
    d_st = (nb_values[:, NE] - nb_values[:, NW] - nb_values[:, SE] + nb_values[:, SW]) / (
        4.0 * h_s * h_t
    )
    return np.stack([d_s, d_t], axis=1), np.stack([d_ss, d_tt, d_st], axis=1)


def _values(xi) -> np.ndarray:
    return xi.values if isinstance(xi, Section) else np.asarray(xi, dtype=float)


@dataclass
class Section:
    """A section of `f⁻¹TN`: one tangent vector at `f(node)` per active node.

    Components are written in the chart of the base map's value at each node.
    """

    base: DiscreteMap
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(
            self.base.num_active, self.base.dimension
        )

    # arithmetic

    def _check(self, other: "Section") -> None:
        assert other.base is self.base, "Sections must share their base map"

    def __add__(self, other: "Section") -> "Section":
        self._check(other)
        return Section(self.base, self.values + other.values)

    def __sub__(self, other: "Section") -> "Section":
        self._check(other)
        return Section(self.base, self.values - other.values)

    def __mul__(self, scalar: float) -> "Section":
        return Section(self.base, scalar * self.values)

    __rmul__ = __mul__

    def __neg__(self) -> "Section":
        return Section(self.base, -self.values)

    def copy(self) -> "Section":
        return Section(self.base, self.values.copy())

    def flat(self) -> np.ndarray:
        return self.values.ravel()

    @classmethod
    def from_flat(cls, base: DiscreteMap, vector: np.ndarray) -> "Section":
        return cls(base, np.asarray(vector).reshape(base.num_active, base.dimension))

    # pointwise geometry

    def full(self) -> np.ndarray:
        return self.base.extend_vectors(self.values)

    def pointwise_norm(self) -> np.ndarray:
        return self.base.model.norm(self.base.active_point(), self.values)

    def derivatives(self) -> Tuple[np.ndarray, np.ndarray]:
        """Coordinate first and second differences, shapes `(N_act, 2, n)` and `(N_act, 3, n)`."""
        local = self.base.local
        full = self.full()
        nb = np.einsum("maij,maj->mai", local.nb_jacobian, full[local.neighbors])
        return _differences(self.values, nb, local.h_s, local.h_t)

    def covariant(self) -> Tuple[np.ndarray, np.ndarray]:
        """`∇ξ` and `∇²ξ` with the pulled-back connection, in local domain coordinates.

        Second derivatives are ordered `(ss, tt, st)`.
        """
        local = self.base.local
        xi = self.values
        d1, d2 = self.derivatives()
        gamma = local.gamma
        df, d2f = local.df, local.d2f
        nabla = d1 + np.einsum("mkij,mai,mj->mak", gamma, df, xi)
        dgamma = self.base.christoffel_derivative()
        pairs = [(0, 0), (1, 1), (0, 1)]
        second = np.empty_like(d2)
        for slot, (a, b) in enumerate(pairs):
            fa, fb = df[:, a], df[:, b]
            inner = np.einsum("mkij,mi,mj->mk", gamma, fb, xi)
            second[:, slot] = (
                d2[:, slot]
                + np.einsum("mpkij,mp,mi,mj->mk", dgamma, fa, fb, xi)
                + np.einsum("mkij,mi,mj->mk", gamma, d2f[:, slot], xi)
                + np.einsum("mkij,mi,mj->mk", gamma, fb, d1[:, a])
                + np.einsum("mkij,mi,mj->mk", gamma, fa, d1[:, b])
                + np.einsum("mkij,mi,mj->mk", gamma, fa, inner)
            )
        return nabla, second

    def derivative_norms(self) -> Tuple[np.ndarray, np.ndarray]:
        """`λ⁻¹|∇ξ|` and `λ⁻²|∇²ξ|` per active node."""
        local = self.base.local
        nabla, second = self.covariant()
        h = local.metric
        first = np.sqrt(np.einsum("mai,mij,maj->m", nabla, h, nabla)) / local.lam
        weights = np.array([1.0, 1.0, 2.0])
        hess = np.sqrt(np.einsum("a,mai,mij,maj->m", weights, second, h, second))
        return first, hess / local.lam**2


@dataclass
class ExtendedVector:
    """A pair `(ξ, ṽ)` of a section and coordinates in the obstruction basis."""

    section: Section
    coords: np.ndarray

    def __post_init__(self):
        self.coords = np.atleast_1d(np.asarray(self.coords, dtype=float))

    def __add__(self, other: "ExtendedVector") -> "ExtendedVector":
        return ExtendedVector(self.section + other.section, self.coords + other.coords)

    def __sub__(self, other: "ExtendedVector") -> "ExtendedVector":
        return ExtendedVector(self.section - other.section, self.coords - other.coords)

    def __mul__(self, scalar: float) -> "ExtendedVector":
        return ExtendedVector(scalar * self.section, scalar * self.coords)

    __rmul__ = __mul__

    def __neg__(self) -> "ExtendedVector":
        return ExtendedVector(-self.section, -self.coords)

    @classmethod
    def zeros(cls, base: DiscreteMap, k: int) -> "ExtendedVector":
        return cls(base.zero_section(), np.zeros(k))

    def flat(self) -> np.ndarray:
        return np.concatenate([self.section.flat(), self.coords])


def transport_identify(f_from: DiscreteMap, f_to: DiscreteMap, xi: Section) -> Section:
    """Parallel transport `ξ` nodewise along the geodesics from `f_from` to `f_to`.

    Nodes where both maps hold identical values are copied unchanged.

    Raises:
        OutOfInjectivityRadius: If some pair of values is too far apart.
    """
    assert f_from.grid is f_to.grid, "Both maps must live on the same grid"
    model = f_from.model
    out = np.array(_values(xi), dtype=float)
    moving = ~f_from.same_values(f_to)
    if np.any(moving):
        index = f_from.grid.active_index[moving]
        start = TargetPoint(f_from.coords[index], f_from.charts[index])
        goal = TargetPoint(f_to.coords[index], f_to.charts[index])
        v = model.log(start, goal)
        moved = model.parallel_transport(start, v, out[moving])
        end = model.exp(start, v)
        jac = model.transition_jacobian(end.coords, end.charts, goal.charts)
        out[moving] = np.einsum("mij,mj->mi", jac, moved)
    return Section(f_to, out)
