from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from ..errors import ChartEscape, NoConvergence, OutOfInjectivityRadius, VectorTooLong

STEPS_PER_UNIT_LENGTH = 64
H_CHRISTOFFEL = 1e-4
H_EXP = 1e-5

_MODEL_REGISTRY: Dict[str, type] = {}


def register_model(kind: str):
    def decorator(cls):
        _MODEL_REGISTRY[kind] = cls
        cls.kind = kind
        return cls

    return decorator


def get_model(kind: str, **kwargs) -> "TargetModel":
    """Instantiate a registered target model by its descriptor kind.

    Args:
        kind (str): One of the registered kinds, e.g. `"sphere"`, `"flat-torus"` or
            `"chart"`.
        **kwargs: Keyword arguments forwarded to the model constructor.

    Returns:
        (TargetModel): The constructed model.
    """
    kind = kind.lower()
    if kind not in _MODEL_REGISTRY:
        raise KeyError(
            f"Target model kind '{kind}' is not registered. "
            f"Available kinds: {sorted(_MODEL_REGISTRY)}"
        )
    return _MODEL_REGISTRY[kind](**kwargs)


def registered_models() -> List[str]:
    return sorted(_MODEL_REGISTRY)


@dataclass
class TargetPoint:
    """A batch of points of the target, each tagged with the chart it is written in.

    Arguments:
        coords (np.ndarray): Chart coordinates of shape `(M, n)`.
        charts (np.ndarray): Integer chart ids of shape `(M,)`.
    """

    coords: np.ndarray
    charts: np.ndarray

    def __post_init__(self):
        self.coords = np.atleast_2d(np.asarray(self.coords, dtype=float))
        self.charts = np.broadcast_to(
            np.asarray(self.charts, dtype=np.int64), (self.coords.shape[0],)
        ).copy()

    @classmethod
    def single(cls, coords, chart: int = 0) -> "TargetPoint":
        return cls(np.asarray(coords, dtype=float)[None, :], np.array([chart]))

    def __len__(self) -> int:
        return self.coords.shape[0]

    def take(self, index) -> "TargetPoint":
        return TargetPoint(self.coords[index], self.charts[index])


@dataclass
class TangentVector:
    """A batch of tangent vectors, components in the chart frame of their base points."""

    base: TargetPoint
    components: np.ndarray

    def __post_init__(self):
        self.components = np.atleast_2d(np.asarray(self.components, dtype=float))
        assert (
            self.components.shape == self.base.coords.shape
        ), "Tangent vector components must match the shape of their base points"

    def __len__(self) -> int:
        return self.components.shape[0]


@dataclass
class GeodesicSolution:
    endpoint: TargetPoint
    velocity: np.ndarray
    transported: Optional[np.ndarray]
    steps: int
    speed_drift: np.ndarray = field(default_factory=lambda: np.zeros(0))


class TargetModel(ABC):
    """Base class for the closed Riemannian target N.

    Every evaluator is vectorized over a leading batch axis and is a pure function of
    its inputs, so a constructed model can be shared read-only by any number of
    workers. Subclasses supply the metric, the Christoffel symbols and the chart
    bookkeeping. Geodesics, parallel transport and curvature fall back to the
    coordinate formulas below unless a subclass has a closed form.

    !!! note "Conventions"
        - Christoffel arrays are indexed `[m, k, i, j]` for `Γ^k_ij` at batch item `m`.
        - Curvature follows `R(X, Y)Z = ∇_X∇_Y Z − ∇_Y∇_X Z − ∇_[X,Y] Z`.

    Arguments:
        dimension (int): Dimension `n` of the target.
        injectivity_bound (float): Lower bound for the injectivity radius, in length
            units.
        steps_per_unit (int): Fixed RK4 steps per unit of geodesic length.
    """

    kind = "abstract"

    def __init__(
        self,
        dimension: int,
        injectivity_bound: float,
        steps_per_unit: int = STEPS_PER_UNIT_LENGTH,
    ) -> None:
        assert dimension >= 1, "The target dimension must be a positive integer"
        assert injectivity_bound > 0, "The injectivity bound must be positive"
        self.dimension = int(dimension)
        self.injectivity_bound = float(injectivity_bound)
        self.steps_per_unit = int(steps_per_unit)

    def __repr__(self) -> str:
        return (
            f"{self.__class__.__name__}(dimension={self.dimension}, "
            f"injectivity_bound={self.injectivity_bound:.6g})"
        )

    @property
    @abstractmethod
    def chart_boxes(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        """Declared coordinate box `(lower, upper)` of each chart."""

    @abstractmethod
    def metric(self, coords: np.ndarray, charts: np.ndarray) -> np.ndarray:
        """Metric matrices `h_ij` of shape `(M, n, n)`."""

    @abstractmethod
    def christoffel(self, coords: np.ndarray, charts: np.ndarray) -> np.ndarray:
        """Christoffel symbols of shape `(M, n, n, n)` indexed `[m, k, i, j]`."""

    def descriptor(self) -> dict:
        return {
            "kind": self.kind,
            "dimension": self.dimension,
            "injectivity_bound": self.injectivity_bound,
        }

    # chart bookkeeping

    def normalize(self, point: TargetPoint) -> TargetPoint:
        """Rewrite points in their preferred chart."""
        return TargetPoint(point.coords.copy(), point.charts.copy())

    def transition(
        self,
        coords: np.ndarray,
        from_charts: np.ndarray,
        to_charts: np.ndarray,
        near: Optional[np.ndarray] = None,
    ) -> np.ndarray:
        """Coordinates of the same points in `to_charts`.

        `near` selects the representative closest to a reference point in models with
        periodic charts.
        """
        if np.any(np.asarray(from_charts) != np.asarray(to_charts)):
            raise ChartEscape(
                f"{self.__class__.__name__} has no transition data between charts"
            )
        return np.array(coords, dtype=float)

    def transition_jacobian(
        self, coords: np.ndarray, from_charts: np.ndarray, to_charts: np.ndarray
    ) -> np.ndarray:
        """Jacobians of the chart transitions at `coords`, shape `(M, n, n)`."""
        m = np.asarray(coords).shape[0]
        return np.broadcast_to(np.eye(self.dimension), (m, self.dimension, self.dimension)).copy()

    def express(self, point: TargetPoint, to_charts: np.ndarray, near=None) -> np.ndarray:
        return self.transition(point.coords, point.charts, to_charts, near=near)

    def express_vector(self, vector: TangentVector, to_charts: np.ndarray) -> np.ndarray:
        jac = self.transition_jacobian(vector.base.coords, vector.base.charts, to_charts)
        return np.einsum("mij,mj->mi", jac, vector.components)

    def check_chart(self, coords: np.ndarray, charts: np.ndarray) -> None:
        for chart_id, (lower, upper) in enumerate(self.chart_boxes):
            mask = charts == chart_id
            if not np.any(mask):
                continue
            outside = np.any((coords[mask] < lower) | (coords[mask] > upper), axis=1)
            if np.any(outside):
                raise ChartEscape(
                    f"{int(outside.sum())} point(s) left the box of chart {chart_id}"
                )

    # metric helpers

    def inner(self, point: TargetPoint, u: np.ndarray, w: np.ndarray) -> np.ndarray:
        h = self.metric(point.coords, point.charts)
        return np.einsum("mi,mij,mj->m", u, h, w)

    def norm(self, point: TargetPoint, u: np.ndarray) -> np.ndarray:
        return np.sqrt(np.maximum(self.inner(point, u, u), 0.0))

    def christoffel_contract(
        self, coords: np.ndarray, charts: np.ndarray, a: np.ndarray, b: np.ndarray
    ) -> np.ndarray:
        """`Γ^k_ij a^i b^j` per batch item."""
        return np.einsum("mkij,mi,mj->mk", self.christoffel(coords, charts), a, b)

    def christoffel_derivative(
        self, coords: np.ndarray, charts: np.ndarray, step: float = H_CHRISTOFFEL
    ) -> np.ndarray:
        """Centered differences `∂_p Γ^k_ij`, shape `(M, n, n, n, n)` indexed `[m, p, k, i, j]`."""
        n = self.dimension
        out = np.empty((coords.shape[0], n, n, n, n))
        for p in range(n):
            shift = np.zeros(n)
            shift[p] = step
            forward = self.christoffel(coords + shift, charts)
            backward = self.christoffel(coords - shift, charts)
            out[:, p] = (forward - backward) / (2.0 * step)
        return out

    def _check_length(self, point: TargetPoint, v: np.ndarray) -> np.ndarray:
        lengths = self.norm(point, v)
        if np.any(lengths >= self.injectivity_bound):
            raise VectorTooLong(
                f"|v| = {lengths.max():.6g} is not below the injectivity bound "
                f"{self.injectivity_bound:.6g}"
            )
        return lengths

    # geodesic ODE

    def geodesic_ode(
        self,
        point: TargetPoint,
        v: np.ndarray,
        carry: Optional[np.ndarray] = None,
        track_speed: bool = False,
    ) -> GeodesicSolution:
        """Integrate the coupled geodesic and parallel-transport system.

        Solves `γ̈^k + Γ^k_ij γ̇^i γ̇^j = 0` and `V̇^k + Γ^k_ij γ̇^i V^j = 0` for
        `t ∈ [0, 1]` with the classical fixed-step RK4 scheme. The step count is
        `steps_per_unit` per unit of geodesic length, taken from the longest vector of
        the batch.

        Args:
            point (TargetPoint): Start points.
            v (np.ndarray): Initial velocities, shape `(M, n)`.
            carry (Optional[np.ndarray]): Vectors to transport, shape `(M, K, n)`.
            track_speed (bool): Whether to record the drift of `⟨γ̇, γ̇⟩`.

        Returns:
            (GeodesicSolution): Endpoint, final velocity, transported vectors and the
                speed drift when requested.
        """
        y = point.coords.astype(float).copy()
        charts = point.charts
        vel = np.array(v, dtype=float)
        lengths = self.norm(point, vel)
        max_length = float(lengths.max()) if lengths.size else 0.0
        steps = max(1, int(np.ceil(self.steps_per_unit * max_length)))
        h = 1.0 / steps
        U = None if carry is None else np.array(carry, dtype=float)

        def rhs(y_, v_, U_):
            gamma = self.christoffel(y_, charts)
            acc = -np.einsum("mkij,mi,mj->mk", gamma, v_, v_)
            dU = None
            if U_ is not None:
                dU = -np.einsum("mkij,mi,mcj->mck", gamma, v_, U_)
            return v_, acc, dU

        speed0 = self.inner(TargetPoint(y, charts), vel, vel) if track_speed else None
        drift = np.zeros(y.shape[0])
        for _ in range(steps):
            k1 = rhs(y, vel, U)
            k2 = rhs(
                y + 0.5 * h * k1[0],
                vel + 0.5 * h * k1[1],
                None if U is None else U + 0.5 * h * k1[2],
            )
            k3 = rhs(
                y + 0.5 * h * k2[0],
                vel + 0.5 * h * k2[1],
                None if U is None else U + 0.5 * h * k2[2],
            )
            k4 = rhs(
                y + h * k3[0], vel + h * k3[1], None if U is None else U + h * k3[2]
            )
            y = y + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            vel = vel + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            if U is not None:
                U = U + h / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
            self.check_chart(y, charts)
            if track_speed:
                speed = self.inner(TargetPoint(y, charts), vel, vel)
                drift = np.maximum(drift, np.abs(speed - speed0))
        return GeodesicSolution(
            endpoint=TargetPoint(y, charts.copy()),
            velocity=vel,
            transported=U,
            steps=steps,
            speed_drift=drift,
        )

    def exp_ode(self, point: TargetPoint, v: np.ndarray) -> TargetPoint:
        return self.geodesic_ode(point, v).endpoint

    def transport_ode(self, point: TargetPoint, v_dir: np.ndarray, u: np.ndarray) -> np.ndarray:
        solution = self.geodesic_ode(point, v_dir, carry=np.asarray(u)[:, None, :])
        return solution.transported[:, 0, :]

    def geodesic_speed_drift(self, point: TargetPoint, v: np.ndarray) -> np.ndarray:
        return self.geodesic_ode(point, v, track_speed=True).speed_drift

    # geometry, overridden by closed-form models

    def exp(self, point: TargetPoint, v: np.ndarray) -> TargetPoint:
        """Exponential map `exp_p(v)`.

        Raises:
            VectorTooLong: If `|v|` reaches the injectivity bound.
            ChartEscape: If the integrated geodesic leaves its chart.
        """
        self._check_length(point, v)
        return self.normalize(self.exp_ode(point, v))

    def log(self, point: TargetPoint, other: TargetPoint, tol: float = 1e-12, max_iter: int = 30) -> np.ndarray:
        """Inverse of `exp`, by Newton shooting on the geodesic ODE."""
        target = self.express(other, point.charts, near=point.coords)
        v = target - point.coords
        self._check_distance(point, v)
        n = self.dimension
        for _ in range(max_iter):
            reached = self.express(self.exp_ode(point, v), point.charts, near=target)
            residual = reached - target
            if np.max(np.abs(residual)) <= tol:
                return v
            jac = np.empty((v.shape[0], n, n))
            step = 1e-6
            for j in range(n):
                dv = np.zeros(n)
                dv[j] = step
                plus = self.express(self.exp_ode(point, v + dv), point.charts, near=target)
                minus = self.express(self.exp_ode(point, v - dv), point.charts, near=target)
                jac[:, :, j] = (plus - minus) / (2.0 * step)
            v = v - np.linalg.solve(jac, residual[..., None])[..., 0]
            self._check_distance(point, v)
        raise NoConvergence(
            f"Geodesic shooting did not converge in {max_iter} iterations "
            f"(residual {np.max(np.abs(residual)):.3e})"
        )

    def _check_distance(self, point: TargetPoint, v: np.ndarray) -> None:
        lengths = self.norm(point, v)
        if np.any(lengths >= self.injectivity_bound):
            raise OutOfInjectivityRadius(
                f"d(p, q) = {lengths.max():.6g} is not below the injectivity bound "
                f"{self.injectivity_bound:.6g}"
            )

    def parallel_transport(self, point: TargetPoint, v_dir: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Transport `u` along `t ↦ exp_p(t v_dir)`, `t ∈ [0, 1]`.

        The result is written in the chart of `normalize(exp_p(v_dir))`.
        """
        self._check_length(point, v_dir)
        solution = self.geodesic_ode(point, v_dir, carry=np.asarray(u)[:, None, :])
        end = self.normalize(solution.endpoint)
        jac = self.transition_jacobian(solution.endpoint.coords, point.charts, end.charts)
        return np.einsum("mij,mj->mi", jac, solution.transported[:, 0, :])

    def curvature(
        self, point: TargetPoint, X: np.ndarray, Y: np.ndarray, Z: np.ndarray
    ) -> np.ndarray:
        """`R(X, Y)Z` from centered differences of the Christoffel symbols."""
        gamma = self.christoffel(point.coords, point.charts)
        dgamma = self.christoffel_derivative(point.coords, point.charts)
        riemann = (
            np.einsum("mplij->mlpij", dgamma)
            - np.einsum("mjlip->mlpji", dgamma)
            + np.einsum("mlpq,mqji->mlpji", gamma, gamma)
            - np.einsum("mljq,mqpi->mlpji", gamma, gamma)
        )
        # riemann[m, l, x, y, z] = R^l_{xyz}, with R(∂x, ∂y)∂z = R^l_{xyz} ∂l
        return np.einsum("mlxyz,mx,my,mz->ml", riemann, X, Y, Z)

    # derivative maps

    def d_exp(
        self, point: TargetPoint, xi: np.ndarray, xi_prime: np.ndarray, step: float = H_EXP
    ) -> Tuple[TargetPoint, np.ndarray]:
        """`E_p(ξ)ξ′ = d/dt exp_p(ξ + tξ′)` at `t = 0`, by centered differences."""
        base = self.exp(point, xi)
        scale = np.linalg.norm(xi_prime, axis=1)
        safe = np.where(scale > 0, scale, 1.0)[:, None]
        direction = xi_prime / safe
        plus = self.express(self.exp(point, xi + step * direction), base.charts, near=base.coords)
        minus = self.express(self.exp(point, xi - step * direction), base.charts, near=base.coords)
        derivative = (plus - minus) / (2.0 * step) * safe
        derivative[scale == 0] = 0.0
        return base, derivative

    def d_exp_and_d_transport(
        self, point: TargetPoint, xi: np.ndarray, xi_prime: np.ndarray, step: float = H_EXP
    ) -> Tuple[TangentVector, "TransportDerivative"]:
        """Return `E_p(ξ)ξ′` and a handle evaluating `Ψ_p(ξ; ξ′, η)`.

        Both derivatives use centered differences with step `step` along the unit
        direction of `ξ′`.
        """
        base, derivative = self.d_exp(point, xi, xi_prime, step=step)
        handle = TransportDerivative(self, point, xi, xi_prime, base, derivative, step)
        return TangentVector(base, derivative), handle

    def flip_christoffel_sign(self) -> "TargetModel":
        """A copy of the model with negated Christoffel symbols; a negative control."""
        return _FlippedModel(self)


class TransportDerivative:
    """Evaluates `Ψ_p(ξ; ξ′, η) = ∇_t(Φ(ξ + tξ′)η)` at `t = 0` for any `η` at `p`."""

    def __init__(self, model, point, xi, xi_prime, base, e_xi_prime, step):
        self.model = model
        self.point = point
        self.xi = xi
        self.xi_prime = xi_prime
        self.base = base
        self.e_xi_prime = e_xi_prime
        self.step = step

    def _transported(self, xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
        end = self.model.exp(self.point, xi)
        moved = self.model.parallel_transport(self.point, xi, eta)
        jac = self.model.transition_jacobian(end.coords, end.charts, self.base.charts)
        return np.einsum("mij,mj->mi", jac, moved)

    def __call__(self, eta: np.ndarray) -> np.ndarray:
        scale = np.linalg.norm(self.xi_prime, axis=1)
        safe = np.where(scale > 0, scale, 1.0)[:, None]
        direction = self.xi_prime / safe
        h = self.step
        plus = self._transported(self.xi + h * direction, eta)
        minus = self._transported(self.xi - h * direction, eta)
        coordinate_rate = (plus - minus) / (2.0 * h) * safe
        coordinate_rate[scale == 0] = 0.0
        center = self._transported(self.xi, eta)
        correction = self.model.christoffel_contract(
            self.base.coords, self.base.charts, self.e_xi_prime, center
        )
        return coordinate_rate + correction


class _FlippedModel(TargetModel):
    def __init__(self, inner: TargetModel) -> None:
        super().__init__(inner.dimension, inner.injectivity_bound, inner.steps_per_unit)
        self._inner = inner
        self.kind = f"{inner.kind}-flipped"

    @property
    def chart_boxes(self):
        return self._inner.chart_boxes

    def metric(self, coords, charts):
        return self._inner.metric(coords, charts)

    def christoffel(self, coords, charts):
        return -self._inner.christoffel(coords, charts)

    def normalize(self, point):
        return self._inner.normalize(point)

    def transition(self, coords, from_charts, to_charts, near=None):
        return self._inner.transition(coords, from_charts, to_charts, near=near)

    def transition_jacobian(self, coords, from_charts, to_charts):
        return self._inner.transition_jacobian(coords, from_charts, to_charts)


ChristoffelTable = Callable[[np.ndarray], np.ndarray]
