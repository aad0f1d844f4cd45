from .embedding import (
    apriori_constant_estimate,
    embedding_constant_estimate,
    holder_embedding_fit,
)
from .probes import bump_field, bump_section, random_section, section_from_fields, smooth_field
from .weighted import (
    DEFAULT_P,
    NormSpec,
    density,
    extended_norm,
    norm_breakdown,
    sphere_sobolev_norm,
    weighted_norm,
)
