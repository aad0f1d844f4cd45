from dataclasses import dataclass, field

import numpy as np

from ..errors import InadmissibleParams, ResolutionTooCoarse

MAX_D_TAU = 0.1
MAX_D_THETA = np.pi / 32
MAX_H_CAP = 0.1


def theta_weight(z, R: float) -> np.ndarray:
    """The weight `θ^R` of the glued metric `(θ^R)⁻²(ds² + dt²)`.

    `θ^R(z) = R⁻² + R²|z|²` for `|z| ≤ 1/R` and `1 + |z|²` for `|z| ≥ 1/R`. Both
    branches equal `1 + R⁻²` on the circle `|z| = 1/R`.

    Args:
        z: Complex scalar or array.
        R (float): Neck scale, `R > 0`.

    Returns:
        (np.ndarray): The weight, same shape as `z`.
    """
    assert R > 0, "The neck scale R must be positive"
    r = np.abs(np.asarray(z))
    return theta_of_radius(r, R)


def theta_of_radius(r, R: float) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    inner = R**-2 + (R * r) ** 2
    outer = 1.0 + r**2
    return np.where(r * R <= 1.0, inner, outer)


def round_theta(r) -> np.ndarray:
    """Stereographic weight `1 + r²` of the unit round sphere."""
    r = np.asarray(r, dtype=float)
    return 1.0 + r**2


def glued_area(R: float) -> float:
    """Closed-form area `∫_ℂ (θ^R)⁻² = 2πR² / (1 + R²)`."""
    return 2.0 * np.pi * R**2 / (1.0 + R**2)


@dataclass(frozen=True)
class GluingParams:
    """Gluing parameters `(δ, R)` together with the admissibility threshold `δ₀`.

    Arguments:
        delta (float): Neck cutoff parameter, `0 < δ < 1`.
        R (float): Neck scale, `R > 1`.
        delta0 (float): Admissibility threshold.
    """

    delta: float
    R: float
    delta0: float = 0.5
    r: float = field(init=False)

    def __post_init__(self):
        assert 0.0 < self.delta < 1.0, f"delta must lie in (0, 1), got {self.delta}"
        assert self.R > 1.0, f"R must exceed 1, got {self.R}"
        object.__setattr__(self, "r", self.delta * self.R)

    @property
    def log_inverse_delta(self) -> float:
        return float(np.log(1.0 / self.delta))

    def neck_radii(self) -> np.ndarray:
        """The five neck circles `δ/(2R), δ/R, 1/R, 1/(δR), 2/(δR)`."""
        d, R = self.delta, self.R
        return np.array([d / (2 * R), d / R, 1.0 / R, 1.0 / (d * R), 2.0 / (d * R)])

    def require_admissible(self) -> None:
        if not admissible(self):
            raise InadmissibleParams(
                f"(δ, R) = ({self.delta:.6g}, {self.R:.6g}) is not admissible for "
                f"δ₀ = {self.delta0:.6g}: need δ < δ₀ and δR = {self.r:.6g} > {1 / self.delta0:.6g}"
            )

    def to_dict(self) -> dict:
        return {"delta": self.delta, "R": self.R, "delta0": self.delta0, "r": self.r}


def admissible(params: GluingParams) -> bool:
    """Membership of `(δ, R)` in the admissible set: `0 < δ < δ₀` and `δR > 1/δ₀`."""
    return bool(0.0 < params.delta < params.delta0 and params.r > 1.0 / params.delta0)


@dataclass(frozen=True)
class Resolution:
    """Grid spacings.

    Arguments:
        d_tau (float): Radial log-polar spacing `Δτ`; reduced so that `log(1/δ)` is an
            integer number of rows.
        d_theta (float): Angular spacing `Δθ`; reduced to divide `2π`.
        h_cap (float): Cartesian spacing of the cap charts.
        overlap_nodes (int): Width of the core/cap overlap band in core rows.
    """

    d_tau: float = MAX_D_TAU
    d_theta: float = MAX_D_THETA
    h_cap: float = MAX_H_CAP
    overlap_nodes: int = 8

    def __post_init__(self):
        assert self.d_tau > 0 and self.d_theta > 0 and self.h_cap > 0, "Spacings must be positive"
        assert self.overlap_nodes >= 6, "The overlap band needs at least 6 rows"

    def require_fine_enough(self) -> None:
        eps = 1e-12
        if (
            self.d_tau > MAX_D_TAU + eps
            or self.d_theta > MAX_D_THETA + eps
            or self.h_cap > MAX_H_CAP + eps
        ):
            raise ResolutionTooCoarse(
                f"Resolution (Δτ={self.d_tau:.4g}, Δθ={self.d_theta:.4g}, h={self.h_cap:.4g}) "
                f"is coarser than the minimum (Δτ={MAX_D_TAU}, Δθ=π/32, h={MAX_H_CAP})"
            )

    def refine(self) -> "Resolution":
        return Resolution(self.d_tau / 2, self.d_theta / 2, self.h_cap / 2, 2 * self.overlap_nodes)

    def to_dict(self) -> dict:
        return {
            "d_tau": self.d_tau,
            "d_theta": self.d_theta,
            "h_cap": self.h_cap,
            "overlap_nodes": self.overlap_nodes,
        }


def smoothstep(t) -> np.ndarray:
    """Degree-5 smoothstep `κ(t) = 6t⁵ − 15t⁴ + 10t³` clamped to `[0, 1]`.

    `κ(t) + κ(1 − t) = 1` and `κ` is `C²` at both plateaus.
    """
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return t**3 * (10.0 + t * (-15.0 + 6.0 * t))


def smoothstep_derivatives(t):
    """First and second derivatives of `κ`, zero outside `(0, 1)`."""
    t = np.asarray(t, dtype=float)
    inside = (t > 0.0) & (t < 1.0)
    first = np.where(inside, 30.0 * t**2 * (1.0 - t) ** 2, 0.0)
    second = np.where(inside, 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t), 0.0)
    return first, second
