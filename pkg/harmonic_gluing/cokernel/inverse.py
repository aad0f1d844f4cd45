from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import wandb
from scipy import sparse
from scipy.sparse.linalg import splu
from tqdm.auto import tqdm

from ..domain import DomainGrid, build_grid
from ..errors import NoContraction, NoConvergence, SingularSystem
from ..harmonic import DiscreteMap, ExtendedVector, Section, assemble_D
from ..norms import DEFAULT_P, extended_norm, random_section, weighted_norm
from ..pregluing import MapPair, patch_xi, perturbed_maps, preglue, split_eta
from ..report import InvariantCheck, ResultRecord, stage
from .basis import CokernelBasis, SigmaMap, cokernel_basis, glued_sigma, sigma_map
from .paired import PairedSystem, assemble_paired, block_diagonal, mass_metric_factors
from .spectral import WeightedOperator, orthonormalize, weighted_spectrum

SINGULAR_RESIDUAL = 1e-10
ROUNDING_FLOOR = 32.0 * np.finfo(float).eps
STALL_RATIO = 0.9


def _equilibrate(matrix: sparse.spmatrix) -> Tuple[sparse.csc_matrix, np.ndarray]:
    """Rows scaled to unit largest entry, with the scales."""
    matrix = sparse.csr_matrix(matrix)
    largest = np.asarray(abs(matrix).max(axis=1).todense()).ravel()
    scale = 1.0 / np.where(largest > 0.0, largest, 1.0)
    return (sparse.diags(scale) @ matrix).tocsc(), scale


def _bordered_factor(matrix: sparse.spmatrix, border: np.ndarray, constraint: np.ndarray):
    """Sparse LU of the row-equilibrated `[[A, S], [Cᵀ, 0]]`, with the row scales."""
    extra = constraint.shape[1]
    top = sparse.hstack([matrix, sparse.csr_matrix(border)], format="csr")
    if extra:
        bottom = sparse.hstack(
            [sparse.csr_matrix(constraint.T), sparse.csr_matrix((extra, border.shape[1]))],
            format="csr",
        )
        top = sparse.vstack([top, bottom], format="csr")
    if top.shape[0] != top.shape[1]:
        raise SingularSystem(f"The bordered system is not square: {top.shape}")
    bordered, scale = _equilibrate(top)
    try:
        return bordered, splu(bordered), scale
    except RuntimeError as error:
        raise SingularSystem(
            f"Sparse LU of the {bordered.shape[0]}x{bordered.shape[1]} bordered system "
            f"failed: {error}"
        ) from error


def _refined_solve(bordered, lu, rhs: np.ndarray) -> Tuple[np.ndarray, float]:
    """One LU solve plus one step of iterative refinement, with the relative residual.

    `bordered` and `rhs` are the equilibrated system, so the residual is relative to
    rows of unit scale.
    """
    scale = float(np.linalg.norm(rhs))
    if scale == 0.0:
        return np.zeros(bordered.shape[1]), 0.0
    x = lu.solve(rhs)
    x = x + lu.solve(rhs - bordered @ x)
    return x, float(np.linalg.norm(rhs - bordered @ x)) / scale


@dataclass
class PairedSolver:
    """Factorized `D_{0,∞,r} ⊕ σ` with solutions confined to the complement of its kernel.

    The kernel is represented by the `k − n` smallest right singular vectors of the paired
    operator, which is exactly the count that makes the bordered system square.

    Arguments:
        system (PairedSystem): Paired system of `(f^{0,r}, f^{∞,r})`.
        sigma (SigmaMap): Representatives transported to the same maps.
        kernel (np.ndarray): Kernel vectors in reduced unknowns.
        bordered (sparse.csc_matrix): The factorized, row-equilibrated matrix.
        lu: `splu` factorization of `bordered`.
        row_scale (np.ndarray): Row scales of the equilibration.
        kernel_dim (int): Null dimension detected by the threshold.
        last_residual (float): Relative residual of the latest solve.
    """

    system: PairedSystem
    sigma: SigmaMap
    kernel: np.ndarray
    bordered: sparse.csc_matrix = field(repr=False)
    lu: object = field(repr=False)
    row_scale: np.ndarray = field(default=None, repr=False)
    kernel_dim: int = 0
    last_residual: float = 0.0
    last_kernel_inner: float = 0.0

    @property
    def k(self) -> int:
        return self.sigma.k

    def solve(self, eta0: Section, eta_inf: Section) -> Tuple[Section, Section, np.ndarray]:
        """`(ξ⁰, ξ^∞, ṽ)` with `D_{0,∞,r}(ξ⁰, ξ^∞) + σ(ṽ) = (η⁰, η^∞)`.

        Raises:
            SingularSystem: If the solve misses its residual contract.
        """
        system = self.system
        count = self.kernel.shape[1]
        rhs = np.concatenate([system.join(eta0, eta_inf), np.zeros(count)])
        x, residual = _refined_solve(self.bordered, self.lu, self.row_scale * rhs)
        self.last_residual = residual
        if residual > SINGULAR_RESIDUAL:
            raise SingularSystem(
                f"Paired solve residual {residual:.3e} exceeds {SINGULAR_RESIDUAL:.0e}; "
                "the representatives do not complement the range",
                context={"residual": residual},
            )
        reduced, coords = x[: system.shape[1]], x[system.shape[1] :]
        if count:
            inner = system.col_inner(self.kernel, reduced)
            self.last_kernel_inner = float(np.max(np.abs(inner)))
        xi0, xi_inf = system.expand(reduced)
        return xi0, xi_inf, coords


def paired_solver(
    system: PairedSystem,
    sigma: SigmaMap,
    svd_atol: float = 0.0,
    svd_rtol: float = 1e-6,
    quiet: bool = True,
) -> PairedSolver:
    """Factorize the bordered system `[[A_r, σ], [K_rᵀ W, 0]]`.

    Raises:
        SingularSystem: If there are fewer representatives than matching rows, or if the
            factorization fails.
    """
    n, k = system.dimension, sigma.k
    count = k - n
    if count < 0:
        raise SingularSystem(
            f"{k} cokernel representatives cannot complete a paired system that loses "
            f"{n} columns to the matching constraint"
        )
    spectrum = weighted_spectrum(
        WeightedOperator.from_system(system), svd_atol, svd_rtol, min_right=count, quiet=quiet
    )
    kernel = orthonormalize(spectrum.smallest_right(count), system.col_factor)
    if spectrum.kernel_dim != count:
        wandb.termwarn(
            f"The perturbed paired operator has {spectrum.kernel_dim} null directions, "
            f"expected {count}; using the {count} smallest"
        )
    constraint = system.col_factor.T @ (system.col_factor @ kernel)
    bordered, lu, scale = _bordered_factor(system.matrix, sigma.columns, constraint)
    return PairedSolver(system, sigma, kernel, bordered, lu, scale, spectrum.kernel_dim)


def solve_Q0infr(
    eta0: Section, eta_inf: Section, solver: PairedSolver
) -> Tuple[Section, Section, np.ndarray]:
    """`Q_{0,∞,r}(η⁰, η^∞) = (ξ⁰, ξ^∞, ṽ)` through a factorized paired solver."""
    return solver.solve(eta0, eta_inf)


@dataclass
class GluingContext:
    """Everything the approximate and true inverses need for one `(δ, R)`.

    Arguments:
        pair (MapPair): The maps being glued.
        grid (DomainGrid): The glued grid.
        f_R (DiscreteMap): The pregluing.
        f0r (DiscreteMap): `f^{0,r}`.
        finfr (DiscreteMap): `f^{∞,r}`.
        basis (CokernelBasis): Representatives on `(f⁰, f^∞)`.
        sigma (SigmaMap): Representatives on `(f^{0,r}, f^{∞,r})`.
        solver (PairedSolver): Factorized `D_{0,∞,r} ⊕ σ`.
        sigma_columns (np.ndarray): `σ(e_j)` on the glued grid.
        D_R (sparse.csr_matrix): Linearization at `f^R`.
        p (float): Norm exponent.
    """

    pair: MapPair
    grid: DomainGrid
    f_R: DiscreteMap
    f0r: DiscreteMap
    finfr: DiscreteMap
    basis: CokernelBasis
    sigma: SigmaMap
    solver: PairedSolver
    sigma_columns: np.ndarray = field(repr=False)
    D_R: sparse.csr_matrix = field(repr=False)
    p: float = DEFAULT_P
    contraction: Optional[float] = None
    _abs_D: Optional[sparse.csr_matrix] = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return self.basis.k

    def rounding_floor(self, x: ExtendedVector) -> float:
        """Rounding error of `(D ⊕ σ)x` in double precision, the smallest attainable residual."""
        if self._abs_D is None:
            self._abs_D = abs(self.D_R).tocsr()
        values = self._abs_D @ np.abs(x.section.flat())
        if self.k:
            values = values + np.abs(self.sigma_columns) @ np.abs(x.coords)
        return ROUNDING_FLOOR * float(np.max(values, initial=0.0))

    @property
    def params(self):
        return self.grid.params

    def sigma_glued(self, coords: np.ndarray) -> Section:
        coords = np.atleast_1d(np.asarray(coords, dtype=float))
        if not self.k:
            return self.f_R.zero_section()
        return Section.from_flat(self.f_R, self.sigma_columns @ coords)

    def zeros(self) -> ExtendedVector:
        return ExtendedVector.zeros(self.f_R, self.k)

    def to_dict(self) -> Dict[str, object]:
        return {
            "nodes": self.grid.num_nodes,
            "active": self.f_R.num_active,
            "k": self.k,
            "basis": self.basis.to_dict(),
            "sigma_gram_condition": self.sigma.gram_condition,
            "perturbed_kernel_dim": self.solver.kernel_dim,
            "contraction": self.contraction,
        }


def build_context(
    pair: MapPair,
    grid: Optional[DomainGrid] = None,
    p: float = DEFAULT_P,
    svd_atol: float = 0.0,
    svd_rtol: float = 1e-6,
    min_gram: float = 0.1,
    record: Optional[ResultRecord] = None,
    quiet: bool = True,
) -> GluingContext:
    """Preglue a pair and set up the extended linear problem at `f^R`.

    Runs the `preglue`, `perturbed_maps`, `assemble`, `cokernel` and `inverse` stages;
    errors are tagged with the stage they come from and stage timings go to `record`.

    **Usage:**

    ```python
    from harmonic_gluing.cokernel import approx_inverse_T, build_context

    context = build_context(pair)
    x = approx_inverse_T(eta, context)
    ```
    """
    if grid is None:
        with stage(record, "build_grid"):
            grid = build_grid(pair.params, pair.zero.grid.resolution, quiet=quiet)
    with stage(record, "preglue"):
        f_R = preglue(pair, grid)
    with stage(record, "perturbed_maps"):
        f0r, finfr = perturbed_maps(f_R, pair)
    with stage(record, "assemble"):
        system = assemble_paired(pair.zero, pair.infinity)
        perturbed = assemble_paired(f0r, finfr)
        D_R = assemble_D(f_R)
    with stage(record, "cokernel"):
        basis = cokernel_basis(
            system, pair.params, svd_atol=svd_atol, svd_rtol=svd_rtol, min_gram=min_gram, quiet=quiet
        )
        sigma = sigma_map(basis, f0r, finfr)
        columns = glued_sigma(sigma, f_R)
    with stage(record, "inverse"):
        solver = paired_solver(perturbed, sigma, svd_atol, svd_rtol, quiet=quiet)
    if record is not None:
        record.add(
            "cokernel_basis",
            k=basis.k,
            exclusion_radius=basis.exclusion_radius,
            gram_min_singular=basis.gram_min_singular,
        )
        if basis.spectrum is not None:
            record.add(
                "assemble_paired",
                kernel_dim=basis.spectrum.kernel_dim,
                cokernel_dim=basis.spectrum.cokernel_dim,
                spectrum_head=basis.spectrum.to_dict()["left_head"],
            )
        record.add("sigma_map", gram_condition=sigma.gram_condition)
    return GluingContext(
        pair=pair,
        grid=grid,
        f_R=f_R,
        f0r=f0r,
        finfr=finfr,
        basis=basis,
        sigma=sigma,
        solver=solver,
        sigma_columns=columns,
        D_R=D_R,
        p=p,
    )


def approx_inverse_T(eta: Section, context: GluingContext) -> ExtendedVector:
    """The approximate right inverse `T_{f^R}η = (ξ^R, ṽ)`.

    Cut `η` along `|z| = 1/R`, solve on the two perturbed spheres, and patch the two
    solutions with the cutoff `β` around their common value `ξ₀ = ξ⁰(x₁)`.
    """
    eta0, eta_inf = split_eta(eta, context.f0r, context.finfr)
    xi0, xi_inf, coords = solve_Q0infr(eta0, eta_inf, context.solver)
    x1 = context.f0r.grid.position[context.solver.system.x1]
    xi_zero = xi0.values[x1]
    return ExtendedVector(patch_xi(xi0, xi_inf, xi_zero, context.f_R), coords)


def apply_extended(context: GluingContext, x: ExtendedVector) -> Section:
    """`(D_{f^R} ⊕ σ)(ξ, ṽ) = D_{f^R}ξ + σ(ṽ)`."""
    values = context.D_R @ x.section.flat()
    if context.k:
        values = values + context.sigma_columns @ x.coords
    return Section.from_flat(context.f_R, values)


def _sup(section: Section) -> float:
    norms = section.pointwise_norm()
    return float(norms.max()) if norms.size else 0.0


def probe_contraction(
    context: GluingContext, probes: int = 5, seed: int = 0, quiet: bool = True
) -> List[float]:
    """Ratios `‖(D ⊕ σ)Tη − η‖_{0,p,R} / ‖η‖_{0,p,R}` over seeded random `η`."""
    rng = np.random.default_rng(seed)
    ratios = []
    for _ in tqdm(range(probes), desc="Probing T", leave=False, disable=quiet):
        eta = random_section(context.f_R, rng)
        defect = apply_extended(context, approx_inverse_T(eta, context)) - eta
        ratios.append(weighted_norm(defect, 0, context.p) / weighted_norm(eta, 0, context.p))
    context.contraction = float(max(ratios)) if ratios else 0.0
    return ratios


def true_inverse_Q(
    eta: Section,
    context: GluingContext,
    tail_tol: float = 1e-10,
    max_iter: int = 100,
    trace: Optional[List[Dict[str, float]]] = None,
) -> ExtendedVector:
    """The right inverse `Q_{f^R}η = Σ_k T(1 − (D ⊕ σ)T)^k η` by iterative refinement.

    Iterates `x ← x + T(η − (D ⊕ σ)x)` until `sup|η − (D ⊕ σ)x| ≤ tail_tol · sup|η|`, or
    until the residual stalls below the rounding floor of `(D ⊕ σ)x`.

    Args:
        eta (Section): Right-hand side on the glued grid.
        context (GluingContext): The gluing context; its contraction factor is probed
            first if it is not known yet.
        tail_tol (float): Relative tail tolerance.
        max_iter (int): Largest number of refinement steps.
        trace (Optional[list]): Receives one row per step with the residual, the ratio to
            the previous one and the rounding floor, all relative to `sup|η|`.

    Returns:
        (ExtendedVector): `Qη`.

    Raises:
        NoContraction: If the probed contraction factor is at least 1, or if the residual
            grows twice in a row.
        NoConvergence: If `max_iter` steps do not reach the tail tolerance.
    """
    if context.contraction is None:
        probe_contraction(context, probes=3)
    if context.contraction >= 1.0:
        raise NoContraction(
            f"The approximate inverse does not contract (q = {context.contraction:.3f}); "
            "enlarge δR or shrink δ",
            context={"q": context.contraction},
        )
    scale = _sup(eta)
    if scale == 0.0:
        return context.zeros()
    x = approx_inverse_T(eta, context)
    residual = eta - apply_extended(context, x)
    previous, growth = _sup(residual), 0
    floor = context.rounding_floor(x)
    if trace is not None:
        trace.append({"step": 0, "residual": previous / scale, "ratio": float("nan"), "floor": floor / scale})
    step = 0
    while previous > tail_tol * scale:
        step += 1
        if step > max_iter:
            raise NoConvergence(
                f"Neumann series stopped at relative residual {previous / scale:.3e} after "
                f"{max_iter} steps (tail tolerance {tail_tol:.1e})",
                context={"trace": trace},
            )
        x = x + approx_inverse_T(residual, context)
        residual = eta - apply_extended(context, x)
        current = _sup(residual)
        floor = context.rounding_floor(x)
        if trace is not None:
            trace.append(
                {"step": step, "residual": current / scale, "ratio": current / previous, "floor": floor / scale}
            )
        if current <= floor and current >= STALL_RATIO * previous:
            break
        growth = growth + 1 if current > previous else 0
        if growth >= 2:
            raise NoContraction(
                f"Neumann residual grew twice in a row (to {current / scale:.3e})",
                context={"trace": trace},
            )
        previous = current
    return x


def _region_ratio(defect: Section, eta: Section, region: np.ndarray, p: float) -> float:
    denominator = weighted_norm(eta, 0, p, region)
    return weighted_norm(defect, 0, p, region) / denominator if denominator > 0 else 0.0


def contraction_report(
    context: GluingContext, probes: int = 20, seed: int = 0, quiet: bool = True
) -> Dict[str, object]:
    """Probe the defect of `T` overall and on `Ω₁`, `Ω₂` and away from the neck.

    The off-neck value is `sup|(D ⊕ σ)Tη − η|` outside `δ/R ≤ |z| ≤ 1/(δR)` relative to
    `sup|η|`; the residual vanishes there node for node.

    Returns:
        Maximum ratios (`max_ratio`, `omega1`, `omega2`, `off_neck`), the fitted `‖T‖`
        constant, the per-probe ratios and the corresponding checks.
    """
    grid, p = context.grid, context.p
    regions = {name: grid.region(name) for name in ("omega1", "omega2", "off_neck")}
    rng = np.random.default_rng(seed)
    rows = []
    for _ in tqdm(range(probes), desc="Contraction probes", leave=False, disable=quiet):
        eta = random_section(context.f_R, rng)
        x = approx_inverse_T(eta, context)
        defect = apply_extended(context, x) - eta
        norm = weighted_norm(eta, 0, p)
        outside = regions["off_neck"][grid.active_index]
        rows.append(
            {
                "ratio": weighted_norm(defect, 0, p) / norm,
                "omega1": _region_ratio(defect, eta, regions["omega1"], p),
                "omega2": _region_ratio(defect, eta, regions["omega2"], p),
                "off_neck": float(np.max(defect.pointwise_norm()[outside], initial=0.0)) / _sup(eta),
                "t_norm": extended_norm(x, p) / norm,
            }
        )
    summary = {key: max(row[key] for row in rows) for key in rows[0]} if rows else {}
    context.contraction = summary.get("ratio", 0.0)
    checks = [
        InvariantCheck("approx_inverse_contraction", summary["ratio"], 0.5, producer="approx_inverse_T"),
        InvariantCheck("omega1_contraction", summary["omega1"], 0.35, producer="approx_inverse_T"),
        InvariantCheck("omega2_contraction", summary["omega2"], 0.35, producer="approx_inverse_T"),
        InvariantCheck("off_neck_residual", summary["off_neck"], 1e-9, producer="approx_inverse_T"),
    ]
    if not quiet:
        wandb.termlog(
            f"Contraction at δ={context.params.delta:g}, R={context.params.R:g}: "
            f"max {summary['ratio']:.3f}, Ω₁ {summary['omega1']:.3f}, Ω₂ {summary['omega2']:.3f}"
        )
    return {
        "delta": context.params.delta,
        "R": context.params.R,
        "max_ratio": summary["ratio"],
        "omega1": summary["omega1"],
        "omega2": summary["omega2"],
        "off_neck": summary["off_neck"],
        "t_norm": summary["t_norm"],
        "contracting": summary["ratio"] < 1.0,
        "ratios": [row["ratio"] for row in rows],
        "checks": checks,
    }


@dataclass
class ExtendedKernel:
    """Kernel of `D_{f^R} ⊕ σ` with the inner product it is orthonormal in."""

    vectors: np.ndarray
    factor: sparse.csr_matrix = field(repr=False)

    def project_out(self, x: ExtendedVector) -> np.ndarray:
        """`x` minus its orthogonal projection onto the kernel, as a flat vector."""
        flat = x.flat()
        if not self.vectors.shape[1]:
            return flat
        weights = (self.factor @ self.vectors).T @ (self.factor @ flat)
        return flat - self.vectors @ weights


def extended_matrix(context: GluingContext) -> sparse.csr_matrix:
    """`[D_{f^R}, σ]` acting on flattened extended vectors."""
    return sparse.hstack([context.D_R, sparse.csr_matrix(context.sigma_columns)], format="csr")


def extended_kernel(
    context: GluingContext, svd_atol: float = 0.0, svd_rtol: float = 1e-6, quiet: bool = True
) -> ExtendedKernel:
    """The `k` smallest right singular vectors of `D_{f^R} ⊕ σ`.

    The extended operator is surjective with `k` more columns than rows, so its kernel
    is `k`-dimensional.
    """
    blocks = mass_metric_factors(context.f_R)
    rows, rows_inv = block_diagonal(blocks), block_diagonal(np.linalg.inv(blocks))
    cols, cols_inv = rows, rows_inv
    if context.k:
        cols = sparse.block_diag([rows, sparse.identity(context.k)], format="csr")
        cols_inv = sparse.block_diag([rows_inv, sparse.identity(context.k)], format="csr")
    f_R = context.f_R
    scale = np.repeat(f_R.grid.lam[f_R.grid.active_index], f_R.dimension)
    op = WeightedOperator(
        extended_matrix(context),
        rows,
        rows_inv,
        cols,
        cols_inv,
        row_scale=scale,
        col_scale=np.concatenate([scale, np.ones(context.k)]),
    )
    spectrum = weighted_spectrum(op, svd_atol, svd_rtol, min_right=context.k, quiet=quiet)
    return ExtendedKernel(orthonormalize(spectrum.smallest_right(context.k), cols), cols)


def monolithic_solve(
    eta: Section, context: GluingContext, kernel: Optional[ExtendedKernel] = None
) -> Tuple[ExtendedVector, ExtendedKernel]:
    """Solve `(D_{f^R} ⊕ σ)x = η` directly, with `x` orthogonal to the extended kernel.

    This is the oracle the Newton iteration is compared against on affine problems.

    Returns:
        The solution and the kernel used to fix it.
    """
    kernel = extended_kernel(context) if kernel is None else kernel
    matrix = extended_matrix(context)
    constraint = kernel.factor.T @ (kernel.factor @ kernel.vectors)
    size = matrix.shape[1]
    full = matrix
    if kernel.vectors.shape[1]:
        full = sparse.vstack([matrix, sparse.csr_matrix(constraint.T)], format="csr")
    if full.shape[0] != size:
        raise SingularSystem(f"The monolithic system is not square: {full.shape}")
    bordered, scale = _equilibrate(full)
    try:
        lu = splu(bordered)
    except RuntimeError as error:
        raise SingularSystem(f"Sparse LU of the monolithic system failed: {error}") from error
    rhs = np.concatenate([eta.flat(), np.zeros(kernel.vectors.shape[1])])
    x, residual = _refined_solve(bordered, lu, scale * rhs)
    if residual > SINGULAR_RESIDUAL:
        raise SingularSystem(f"Monolithic solve residual {residual:.3e} exceeds {SINGULAR_RESIDUAL:.0e}")
    split = context.f_R.num_active * context.f_R.dimension
    return ExtendedVector(Section.from_flat(context.f_R, x[:split]), x[split:]), kernel
