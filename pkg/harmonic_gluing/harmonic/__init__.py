from .maps import (
    DiscreteMap,
    ExtendedVector,
    LocalGeometry,
    Section,
    interpolate_points,
    transport_identify,
    vector_interpolation_blocks,
)
from .operators import (
    apply_D,
    assemble_D,
    conformal_cancellation,
    dF_at,
    energy,
    energy_density,
    linearization_consistency,
    operator_F,
    tension,
)
