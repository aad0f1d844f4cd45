from .commands import (
    COMMANDS,
    cmd_check,
    cmd_contraction,
    cmd_glue,
    cmd_norms,
    cmd_residual_scaling,
)
from .config import (
    DiagnosticsConfig,
    GridConfig,
    PairConfig,
    RunConfig,
    SweepConfig,
    TargetConfig,
    ToleranceConfig,
    TrackingConfig,
    load_config,
    parse_config,
    save_config,
)
from .parallel import run_cells
