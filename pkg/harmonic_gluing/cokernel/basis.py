from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
import wandb

from ..domain import GluingParams
from ..domain.grid import SNAP
from ..errors import SpanningFailure
from ..harmonic import DiscreteMap, Section, transport_identify
from ..pregluing import rho_of_modulus, transfer_section
from ..pregluing.transfer import glued_log_radius
from .paired import PairedSystem, mass_metric_factors
from .spectral import Spectrum, WeightedOperator, orthonormalize, weighted_spectrum

MAX_ATTEMPTS = 5


@dataclass
class CokernelBasis:
    """Orthonormal cokernel representatives `ṽ_1, …, ṽ_k` supported away from `x₁, x₂`.

    Arguments:
        f1 (DiscreteMap): Base map on the `sphere-zero` grid.
        f2 (DiscreteMap): Base map on the `sphere-infinity` grid.
        vectors (np.ndarray): Full paired vectors, one column per representative.
        exclusion_radius (float): Radius of the excluded discs, in `z` around `x₁` and in
            `1/w` around `x₂`.
        attempts (int): Number of radii tried.
        gram_min_singular (float): Smallest singular value of the projections onto the
            exact cokernel.
        spectrum (Optional[Spectrum]): Spectrum the representatives came from.
    """

    f1: DiscreteMap
    f2: DiscreteMap
    vectors: np.ndarray
    exclusion_radius: float = 0.0
    attempts: int = 0
    gram_min_singular: float = float("inf")
    spectrum: Optional[Spectrum] = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return self.vectors.shape[1]

    @classmethod
    def empty(cls, f1: DiscreteMap, f2: DiscreteMap) -> "CokernelBasis":
        size = (f1.num_active + f2.num_active) * f1.dimension
        return cls(f1, f2, np.zeros((size, 0)))

    def sections(self, j: int):
        size1 = self.f1.num_active * self.f1.dimension
        return (
            Section.from_flat(self.f1, self.vectors[:size1, j]),
            Section.from_flat(self.f2, self.vectors[size1:, j]),
        )

    def to_dict(self) -> Dict[str, object]:
        record = {
            "k": self.k,
            "exclusion_radius": self.exclusion_radius,
            "attempts": self.attempts,
            "gram_min_singular": self.gram_min_singular,
        }
        if self.spectrum is not None:
            record["spectrum"] = self.spectrum.to_dict()
        return record


def exclusion_cutoffs(f1: DiscreteMap, f2: DiscreteMap, radius: float) -> np.ndarray:
    """`ρ(|z|/r)` on the first sphere and `ρ(|1/w|/r)` on the second, per active node."""
    with np.errstate(invalid="ignore", over="ignore"):
        near1 = np.abs(f1.grid.complex_coordinate()[f1.grid.active_index])
        near2 = np.abs(f2.grid.inverse_coordinate()[f2.grid.active_index])
    return np.concatenate([rho_of_modulus(near1 / radius), rho_of_modulus(near2 / radius)])


def cokernel_basis(
    system: PairedSystem,
    params: GluingParams,
    spectrum: Optional[Spectrum] = None,
    exclusion_radius: Optional[float] = None,
    svd_atol: float = 0.0,
    svd_rtol: float = 1e-6,
    min_gram: float = 0.1,
    max_attempts: int = MAX_ATTEMPTS,
    quiet: bool = True,
) -> CokernelBasis:
    """Cut off the exact cokernel near the gluing points and re-orthonormalize.

    The exclusion radius starts at `8/(δR)` and halves while the cut-off vectors fail to
    span the cokernel, never dropping below `2/(δR)`.

    Args:
        system (PairedSystem): Paired system of the unperturbed maps.
        params (GluingParams): Gluing parameters, for the exclusion radius.
        spectrum (Optional[Spectrum]): Precomputed spectrum of `system`.
        exclusion_radius (Optional[float]): Initial radius, `8/(δR)` when omitted.
        svd_atol (float): Absolute override of the null threshold; off at zero.
        svd_rtol (float): Null threshold as a fraction of `σ_max`.
        min_gram (float): Smallest admissible singular value of the projected Gram.
        max_attempts (int): Number of radii to try.
        quiet (bool): Suppress log lines.

    Returns:
        (CokernelBasis): The representatives.

    Raises:
        SpanningFailure: If no radius gives spanning representatives.
    """
    if spectrum is None:
        spectrum = weighted_spectrum(
            WeightedOperator.from_system(system), svd_atol, svd_rtol, quiet=quiet
        )
    exact = orthonormalize(spectrum.cokernel, system.row_factor)
    k = exact.shape[1]
    if k == 0:
        basis = CokernelBasis.empty(system.f1, system.f2)
        basis.spectrum = spectrum
        return basis
    floor = 2.0 / params.r
    radius = 8.0 / params.r if exclusion_radius is None else exclusion_radius
    history = []
    for attempt in range(1, max_attempts + 1):
        cut = exclusion_cutoffs(system.f1, system.f2, radius)
        vectors = np.repeat(cut, system.dimension)[:, None] * exact
        gram = system.row_inner(vectors, vectors)
        values, rotation = np.linalg.eigh(gram)
        if values.min() > 1e-14 * max(values.max(), 1e-300):
            vectors = vectors @ (rotation / np.sqrt(values)) @ rotation.T
            projection = system.row_inner(exact, vectors)
            spread = float(np.linalg.svd(projection, compute_uv=False).min())
        else:
            spread = 0.0
        history.append((radius, spread))
        if spread >= min_gram:
            if not quiet:
                wandb.termlog(
                    f"Cokernel basis: k = {k}, exclusion radius {radius:.4g}, "
                    f"projected Gram σ_min {spread:.3f}"
                )
            return CokernelBasis(
                system.f1, system.f2, vectors, radius, attempt, spread, spectrum
            )
        next_radius = max(radius / 2.0, floor)
        if next_radius == radius:
            break
        wandb.termwarn(
            f"Cut-off cokernel vectors do not span (σ_min {spread:.3f} < {min_gram}); "
            f"shrinking the exclusion radius to {next_radius:.4g}"
        )
        radius = next_radius
    raise SpanningFailure(
        f"No exclusion radius in {[f'{r:.4g}' for r, _ in history]} gives spanning "
        f"cokernel representatives (best projected σ_min {max(s for _, s in history):.3f}, "
        f"need {min_gram}); check the null tolerance",
        context={"history": history, "k": k},
    )


@dataclass
class SigmaMap:
    """`σ: ℝ^k → sections`, the representatives carried to another pair of maps.

    Arguments:
        g1 (DiscreteMap): Target map on the `sphere-zero` grid.
        g2 (DiscreteMap): Target map on the `sphere-infinity` grid.
        columns (np.ndarray): `σ(e_j)` as full paired vectors.
        gram_condition (float): Condition number of the transported Gram matrix.
    """

    g1: DiscreteMap
    g2: DiscreteMap
    columns: np.ndarray
    gram_condition: float

    @property
    def k(self) -> int:
        return self.columns.shape[1]

    def __call__(self, coords: np.ndarray):
        coords = np.atleast_1d(np.asarray(coords, dtype=float))
        full = self.columns @ coords if self.k else np.zeros(self.columns.shape[0])
        size1 = self.g1.num_active * self.g1.dimension
        return (
            Section.from_flat(self.g1, full[:size1]),
            Section.from_flat(self.g2, full[size1:]),
        )


def sigma_map(
    basis: CokernelBasis, g1: Optional[DiscreteMap] = None, g2: Optional[DiscreteMap] = None
) -> SigmaMap:
    """Transport the representatives to `(g₁, g₂)` by nodewise parallel transport.

    Nodes where the target maps equal the base maps keep the representatives exactly.

    Raises:
        OutOfInjectivityRadius: If a target value is too far from the base value.
    """
    g1 = basis.f1 if g1 is None else g1
    g2 = basis.f2 if g2 is None else g2
    columns = np.zeros_like(basis.vectors)
    size1 = basis.f1.num_active * basis.f1.dimension
    for j in range(basis.k):
        v1, v2 = basis.sections(j)
        columns[:size1, j] = transport_identify(basis.f1, g1, v1).flat()
        columns[size1:, j] = transport_identify(basis.f2, g2, v2).flat()
    condition = 1.0
    if basis.k:
        blocks = np.concatenate([mass_metric_factors(g1), mass_metric_factors(g2)])
        n = g1.dimension
        weighted = np.einsum("mij,mjk->mik", blocks, columns.reshape(-1, n, basis.k))
        gram = np.einsum("mij,mik->jk", weighted, weighted)
        condition = float(np.linalg.cond(gram))
    return SigmaMap(g1, g2, columns, condition)


def glued_sigma(sigma: SigmaMap, f_R: DiscreteMap) -> np.ndarray:
    """Representatives moved onto the glued grid, one flattened section per column.

    The first sphere contributes on `|z| > 1/R` and the second on `|z| < 1/R`; the
    representatives vanish near the circle, where `f^R ≡ y`.
    """
    log_R = np.log(f_R.grid.params.R)
    t = glued_log_radius(f_R.grid)[f_R.grid.active_index]
    outer = (t > -log_R + SNAP).astype(float)
    inner = (t < -log_R - SNAP).astype(float)
    columns = np.zeros((f_R.num_active * f_R.dimension, sigma.k))
    for j in range(sigma.k):
        e = np.zeros(sigma.k)
        e[j] = 1.0
        v1, v2 = sigma(e)
        columns[:, j] = (transfer_section(v1, f_R, outer) + transfer_section(v2, f_R, inner)).flat()
    return columns
