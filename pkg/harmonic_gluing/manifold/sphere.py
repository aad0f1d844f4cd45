from typing import List, Tuple

import numpy as np

from ..errors import OutOfInjectivityRadius
from .base import TargetModel, TargetPoint, register_model


def conformal_christoffel(coords: np.ndarray, radius: float = 1.0) -> np.ndarray:
    """Christoffel symbols of the stereographic metric `(2a / (1 + |y|²))² δ`.

    For `h = e^{2φ} δ` one has `Γ^k_ij = δ_ik ∂_jφ + δ_jk ∂_iφ − δ_ij ∂_kφ`, here with
    `∂_iφ = −2 y_i / (1 + |y|²)`. The radius only rescales the metric and drops out.
    """
    coords = np.atleast_2d(coords)
    m, n = coords.shape
    grad_phi = -2.0 * coords / (1.0 + np.sum(coords**2, axis=1))[:, None]
    eye = np.eye(n)
    gamma = (
        np.einsum("ki,mj->mkij", eye, grad_phi)
        + np.einsum("kj,mi->mkij", eye, grad_phi)
        - np.einsum("ij,mk->mkij", eye, grad_phi)
    )
    return gamma


def conformal_metric(coords: np.ndarray, radius: float = 1.0) -> np.ndarray:
    coords = np.atleast_2d(coords)
    factor = (2.0 * radius / (1.0 + np.sum(coords**2, axis=1))) ** 2
    return factor[:, None, None] * np.eye(coords.shape[1])[None]


@register_model("sphere")
class RoundSphere(TargetModel):
    """Round sphere `Sⁿ` of radius `a` with closed-form geometry.

    Two stereographic charts cover the sphere: chart `0` projects from the north pole,
    chart `1` from the south pole, and the transition between them is the inversion
    `y ↦ y / |y|²`. Points are kept in the chart where `|y| ≤ 1`. Exponential map,
    logarithm and parallel transport are evaluated in the ambient space `ℝⁿ⁺¹` by the
    great-circle formulas and pulled back to charts.

    **Usage:**

    ```python
    import numpy as np
    from harmonic_gluing.manifold import RoundSphere, TargetPoint

    sphere = RoundSphere(dimension=2)
    south = TargetPoint.single([0.0, 0.0])
    equator = sphere.exp(south, np.array([[np.pi / 2, 0.0]]))
    ```

    Arguments:
        dimension (int): Dimension `n` of the sphere.
        radius (float): Radius `a`.
        injectivity_bound (float): Injectivity radius bound, `π a` when omitted.
    """

    def __init__(
        self, dimension: int = 2, radius: float = 1.0, injectivity_bound: float = None, **kwargs
    ) -> None:
        assert radius > 0, "The sphere radius must be positive"
        self.radius = float(radius)
        super().__init__(
            dimension,
            np.pi * self.radius if injectivity_bound is None else injectivity_bound,
            **kwargs,
        )

    def descriptor(self) -> dict:
        return {**super().descriptor(), "radius": self.radius}

    @property
    def chart_boxes(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        box = np.full(self.dimension, 10.0)
        return [(-box, box), (-box, box)]

    def metric(self, coords, charts):
        return conformal_metric(coords, self.radius)

    def christoffel(self, coords, charts):
        return conformal_christoffel(coords, self.radius)

    # charts

    def normalize(self, point: TargetPoint) -> TargetPoint:
        coords = point.coords.copy()
        charts = point.charts.copy()
        sq = np.sum(coords**2, axis=1)
        flip = sq > 1.0
        coords[flip] = coords[flip] / sq[flip, None]
        charts[flip] = 1 - charts[flip]
        return TargetPoint(coords, charts)

    def transition(self, coords, from_charts, to_charts, near=None):
        coords = np.array(coords, dtype=float)
        flip = np.asarray(from_charts) != np.asarray(to_charts)
        if np.any(flip):
            sq = np.sum(coords[flip] ** 2, axis=1)
            coords[flip] = coords[flip] / sq[:, None]
        return coords

    def transition_jacobian(self, coords, from_charts, to_charts):
        coords = np.atleast_2d(coords)
        m, n = coords.shape
        jac = np.broadcast_to(np.eye(n), (m, n, n)).copy()
        flip = np.asarray(from_charts) != np.asarray(to_charts)
        if np.any(flip):
            y = coords[flip]
            sq = np.sum(y**2, axis=1)[:, None, None]
            jac[flip] = (np.eye(n)[None] * sq - 2.0 * np.einsum("mi,mj->mij", y, y)) / sq**2
        return jac

    # ambient embedding

    def to_ambient(self, point: TargetPoint) -> np.ndarray:
        y = point.coords
        sq = np.sum(y**2, axis=1)
        s = 1.0 + sq
        sign = np.where(point.charts == 0, 1.0, -1.0)
        last = sign * (sq - 1.0) / s
        return self.radius * np.concatenate([2.0 * y / s[:, None], last[:, None]], axis=1)

    def from_ambient(self, X: np.ndarray) -> TargetPoint:
        a = self.radius
        charts = np.where(X[:, -1] <= 0.0, 0, 1)
        sign = np.where(charts == 0, -1.0, 1.0)
        coords = X[:, :-1] / (a + sign * X[:, -1])[:, None]
        return TargetPoint(coords, charts)

    def pushforward(self, point: TargetPoint) -> np.ndarray:
        """Jacobian of the chart parametrization, shape `(M, n + 1, n)`."""
        y = point.coords
        m, n = y.shape
        s = 1.0 + np.sum(y**2, axis=1)
        a = self.radius
        top = 2.0 * a * (
            np.eye(n)[None] / s[:, None, None]
            - 2.0 * np.einsum("mi,mj->mij", y, y) / (s**2)[:, None, None]
        )
        sign = np.where(point.charts == 0, 1.0, -1.0)
        bottom = (sign * 4.0 * a / s**2)[:, None] * y
        return np.concatenate([top, bottom[:, None, :]], axis=1)

    def vector_to_ambient(self, point: TargetPoint, u: np.ndarray) -> np.ndarray:
        return np.einsum("mij,mj->mi", self.pushforward(point), u)

    def vector_from_ambient(self, point: TargetPoint, U: np.ndarray) -> np.ndarray:
        jac = self.pushforward(point)
        s = 1.0 + np.sum(point.coords**2, axis=1)
        scale = (s / (2.0 * self.radius)) ** 2
        return scale[:, None] * np.einsum("mij,mi->mj", jac, U)

    # closed-form geometry

    def exp(self, point: TargetPoint, v: np.ndarray) -> TargetPoint:
        self._check_length(point, v)
        X = self.to_ambient(point)
        V = self.vector_to_ambient(point, v)
        a = self.radius
        speed = np.linalg.norm(V, axis=1)
        angle = speed / a
        direction = V / np.where(speed > 0, speed, 1.0)[:, None]
        end = np.cos(angle)[:, None] * X + a * np.sin(angle)[:, None] * direction
        end *= a / np.linalg.norm(end, axis=1)[:, None]
        return self.from_ambient(end)

    def log(self, point: TargetPoint, other: TargetPoint, **kwargs) -> np.ndarray:
        X = self.to_ambient(point)
        Y = self.to_ambient(other)
        a = self.radius
        cos_angle = np.clip(np.sum(X * Y, axis=1) / a**2, -1.0, 1.0)
        angle = np.arccos(cos_angle)
        if np.any(a * angle >= self.injectivity_bound):
            raise OutOfInjectivityRadius(
                f"d(p, q) = {a * angle.max():.6g} is not below the injectivity bound "
                f"{self.injectivity_bound:.6g}"
            )
        U = Y - cos_angle[:, None] * X
        u_norm = np.linalg.norm(U, axis=1)
        V = np.where(
            (u_norm > 0)[:, None], a * angle[:, None] * U / np.where(u_norm > 0, u_norm, 1.0)[:, None], 0.0
        )
        return self.vector_from_ambient(point, V)

    def parallel_transport(self, point: TargetPoint, v_dir: np.ndarray, u: np.ndarray) -> np.ndarray:
        self._check_length(point, v_dir)
        X = self.to_ambient(point)
        V = self.vector_to_ambient(point, v_dir)
        U = self.vector_to_ambient(point, u)
        a = self.radius
        speed = np.linalg.norm(V, axis=1)
        angle = speed / a
        e = V / np.where(speed > 0, speed, 1.0)[:, None]
        along = np.sum(U * e, axis=1)
        moved = (
            U
            - along[:, None] * e
            + along[:, None] * (np.cos(angle)[:, None] * e - np.sin(angle)[:, None] * X / a)
        )
        end = self.exp(point, v_dir)
        return self.vector_from_ambient(end, moved)

    def curvature(self, point, X, Y, Z):
        h = self.metric(point.coords, point.charts)
        yz = np.einsum("mi,mij,mj->m", Y, h, Z)
        xz = np.einsum("mi,mij,mj->m", X, h, Z)
        return (yz[:, None] * X - xz[:, None] * Y) / self.radius**2
