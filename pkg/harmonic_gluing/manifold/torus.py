from typing import List, Sequence, Tuple

import numpy as np

from .base import TargetModel, TargetPoint, register_model


@register_model("flat-torus")
class FlatTorus(TargetModel):
    """Flat torus `ℝⁿ / (L₁ℤ × … × Lₙℤ)`.

    All structure is trivial: one periodic chart, `Γ ≡ 0`, `R ≡ 0`, straight-line
    geodesics and identity transport. This is the linear oracle of the package.

    Arguments:
        dimension (int): Dimension `n`.
        periods (Sequence[float]): Periods `Lᵢ`; a single value is broadcast.
        injectivity_bound (float): Defaults to `min(Lᵢ) / 2`.
    """

    def __init__(
        self,
        dimension: int = 2,
        periods: Sequence[float] = (1.0,),
        injectivity_bound: float = None,
        **kwargs,
    ) -> None:
        periods = np.broadcast_to(np.asarray(periods, dtype=float), (dimension,)).copy()
        assert np.all(periods > 0), "Torus periods must be positive"
        self.periods = periods
        super().__init__(
            dimension,
            0.5 * float(periods.min()) if injectivity_bound is None else injectivity_bound,
            **kwargs,
        )

    def descriptor(self) -> dict:
        return {**super().descriptor(), "periods": self.periods.tolist()}

    @property
    def chart_boxes(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        return [(np.full(self.dimension, -np.inf), np.full(self.dimension, np.inf))]

    def metric(self, coords, charts):
        m = np.atleast_2d(coords).shape[0]
        return np.broadcast_to(np.eye(self.dimension), (m, self.dimension, self.dimension)).copy()

    def christoffel(self, coords, charts):
        m = np.atleast_2d(coords).shape[0]
        n = self.dimension
        return np.zeros((m, n, n, n))

    def christoffel_derivative(self, coords, charts, step=None):
        m = np.atleast_2d(coords).shape[0]
        n = self.dimension
        return np.zeros((m, n, n, n, n))

    def normalize(self, point: TargetPoint) -> TargetPoint:
        return TargetPoint(np.mod(point.coords, self.periods), np.zeros_like(point.charts))

    def transition(self, coords, from_charts, to_charts, near=None):
        coords = np.array(coords, dtype=float)
        if near is None:
            return coords
        return coords + self.periods * np.round((near - coords) / self.periods)

    def wrap(self, difference: np.ndarray) -> np.ndarray:
        """Shortest representative of a coordinate difference."""
        return difference - self.periods * np.round(difference / self.periods)

    def exp(self, point: TargetPoint, v: np.ndarray) -> TargetPoint:
        self._check_length(point, v)
        return self.normalize(TargetPoint(point.coords + v, point.charts))

    def log(self, point: TargetPoint, other: TargetPoint, **kwargs) -> np.ndarray:
        v = self.wrap(other.coords - point.coords)
        self._check_distance(point, v)
        return v

    def parallel_transport(self, point, v_dir, u):
        self._check_length(point, v_dir)
        return np.array(u, dtype=float)

    def curvature(self, point, X, Y, Z):
        return np.zeros_like(np.asarray(X, dtype=float))
