from .cutoffs import (
    CutoffProfile,
    beta,
    beta_of_log_radius,
    cutoff_derivative_bounds,
    kappa,
    rho,
    rho_of_modulus,
)
from .gluing import (
    constancy_annulus,
    patch_xi,
    perturbation_size,
    perturbed_maps,
    preglue,
    seam_mismatch,
    split_eta,
    zeta_fields,
    zeta_growth,
)
from .pairs import (
    MapPair,
    constant_pair,
    file_pair,
    identity_sphere_pair,
    in_moduli,
    make_pair,
    register_pair,
    registered_pairs,
    torus_spherical_pair,
)
from .transfer import (
    glued_log_radius,
    locate_nodes,
    resample_points,
    resample_vectors,
    transfer_section,
)
