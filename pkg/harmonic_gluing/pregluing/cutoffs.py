from dataclasses import dataclass
from typing import Dict

import numpy as np

from ..domain import DomainGrid, GluingParams, Resolution, build_grid, smoothstep
from ..domain.grid import SNAP
from ..harmonic import DiscreteMap
from ..manifold import FlatTorus, TargetPoint


def kappa(t) -> np.ndarray:
    """The smooth step `κ`, `0` for `t ≤ 0` and `1` for `t ≥ 1`."""
    return smoothstep(t)


def _snap_unit(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    t = np.where(t < SNAP, 0.0, t)
    return np.where(t > 1.0 - SNAP, 1.0, t)


def rho_of_modulus(modulus) -> np.ndarray:
    """`ρ` as a function of `|x|`; plateau values are hit exactly on the circles."""
    with np.errstate(invalid="ignore"):
        t = np.asarray(modulus, dtype=float) - 1.0
    return smoothstep(_snap_unit(np.nan_to_num(t, nan=0.0, posinf=1.0)))


def rho(x) -> np.ndarray:
    """Radial cutoff `ρ(x) = κ(|x| − 1)`: `0` on `|x| ≤ 1` and `1` on `|x| ≥ 2`."""
    return rho_of_modulus(np.abs(np.asarray(x)))


def beta_of_log_radius(log_radius, params: GluingParams) -> np.ndarray:
    """`β_{δ,R}` evaluated from `log|z|`, with the plateau circles snapped."""
    t = (np.asarray(log_radius, dtype=float) - np.log(params.delta / params.R)) / (
        params.log_inverse_delta
    )
    t = np.nan_to_num(t, nan=0.0, posinf=1.0, neginf=0.0)
    return smoothstep(_snap_unit(t))


def beta(z, params: GluingParams) -> np.ndarray:
    """Neck cutoff `β_{δ,R}(z) = κ(log(R|z|/δ) / log(1/δ))`.

    `β` vanishes on `|z| ≤ δ/R` and equals one on `|z| ≥ 1/R`.

    **Usage:**

    ```python
    from harmonic_gluing.domain import GluingParams
    from harmonic_gluing.pregluing import beta

    params = GluingParams(delta=0.01, R=1000.0, delta0=0.1)
    beta(np.sqrt(params.delta) / params.R, params)  # 0.5
    ```
    """
    with np.errstate(divide="ignore"):
        return beta_of_log_radius(np.log(np.abs(np.asarray(z))), params)


def _beta_map(grid: DomainGrid, params: GluingParams) -> DiscreteMap:
    # β as the first coordinate of a map into a torus wide enough that [0, 1] never wraps
    model = FlatTorus(dimension=2, periods=(4.0,))

    def values(grid, nodes):
        with np.errstate(divide="ignore"):
            log_radius = np.log(grid.glued_radius()[nodes])
        coords = np.zeros((len(nodes), 2))
        coords[:, 0] = beta_of_log_radius(log_radius, params)
        return TargetPoint(coords, np.zeros(len(nodes), dtype=np.int64))

    return DiscreteMap.from_function(grid, model, values, name="beta")


def cutoff_derivative_bounds(params: GluingParams, resolution: Resolution = Resolution()) -> Dict[str, float]:
    """Measured derivative maxima of the discrete `β_{δ,R}` on the glued grid.

    `|dβ|` and `|∇dβ|` are taken from the grid's own differences in the metric `g^R` and
    rescaled by `λ` and `λ²` of the node's log-polar frame, i.e. to the cylinder
    `dτ² + dθ²`, over the owned neck nodes.

    Returns:
        `first = max λ|dβ| log(1/δ)` and `second = max λ²|∇dβ| log(1/δ)`. In the cylinder
        frame `λ|dβ| = |z||∂_r β|`, so both stay bounded as `δ → 0` and, once `δR` is
        large, do not depend on `R`.
    """
    grid = build_grid(params, resolution)
    b = _beta_map(grid, params)
    first, second = b.differential_norms()
    active = grid.active_index
    nodes = (grid.region("neck") & grid.owned())[active]
    lam = grid.lam[active][nodes]
    log_inv = params.log_inverse_delta
    return {
        "first": float(np.max(lam * first[nodes]) * log_inv),
        "second": float(np.max(lam**2 * second[nodes]) * log_inv),
    }


@dataclass(frozen=True)
class CutoffProfile:
    """Sampled curves of the three cutoffs, for plots and the `cutoff_profile.csv` table.

    Arguments:
        samples (int): Number of samples per curve.
    """

    samples: int = 201

    def __post_init__(self):
        assert self.samples >= 3, "A cutoff profile needs at least 3 samples"

    def table(self, params: GluingParams) -> Dict[str, np.ndarray]:
        """Columns `t, kappa, x, rho, radius, beta`.

        `t` runs over `[−0.25, 1.25]`, `x` over `[0, 3]` and `radius` over
        `[δ/(2R), 2/R]` geometrically.
        """
        t = np.linspace(-0.25, 1.25, self.samples)
        x = np.linspace(0.0, 3.0, self.samples)
        radius = np.geomspace(params.delta / (2 * params.R), 2.0 / params.R, self.samples)
        return {
            "t": t,
            "kappa": kappa(t),
            "x": x,
            "rho": rho(x),
            "radius": radius,
            "beta": beta(radius, params),
        }

    def symmetry_defect(self) -> float:
        """`max |κ(t) + κ(1 − t) − 1|` on `[0, 1]`."""
        t = np.linspace(0.0, 1.0, self.samples)
        return float(np.max(np.abs(kappa(t) + kappa(1.0 - t) - 1.0)))
