from .basis import (
    CokernelBasis,
    SigmaMap,
    cokernel_basis,
    exclusion_cutoffs,
    glued_sigma,
    sigma_map,
)
from .inverse import (
    ExtendedKernel,
    GluingContext,
    PairedSolver,
    apply_extended,
    approx_inverse_T,
    build_context,
    contraction_report,
    extended_kernel,
    extended_matrix,
    monolithic_solve,
    paired_solver,
    probe_contraction,
    solve_Q0infr,
    true_inverse_Q,
)
from .paired import PairedSystem, assemble_paired, block_diagonal, mass_metric_factors
from .perturbation import cokernel_stability, operator_perturbation_sweep
from .spectral import Spectrum, WeightedOperator, null_threshold, orthonormalize, weighted_spectrum
