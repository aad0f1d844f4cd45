from .grid import (
    CORE,
    INNER,
    OUTER,
    PATCH,
    SUBGRID_NAMES,
    DomainGrid,
    Layout,
    Stencil,
    build_grid,
    build_patch_grid,
    build_sphere_grid,
    involution_permutation,
    lagrange_weights,
    quadrature,
)
from .weight import (
    GluingParams,
    Resolution,
    admissible,
    glued_area,
    round_theta,
    smoothstep,
    smoothstep_derivatives,
    theta_of_radius,
    theta_weight,
)
