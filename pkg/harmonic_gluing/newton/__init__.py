from .constants import IFTConstants, estimate_constants, residual_at_zero, threshold_search
from .pipeline import GluingOptions, glue_pipeline, is_flat
from .solve import (
    EXTENDED,
    HARMONIC,
    GluingResult,
    extended_residual,
    harmonicity_verdict,
    ift_solve,
    im_q_defect,
    uniqueness_probe,
)
