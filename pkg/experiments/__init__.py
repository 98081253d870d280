from .commands import (
    RunSummary,
    cmd_convergence_study,
    cmd_metrics,
    cmd_oracle,
    cmd_simulate,
    cmd_train,
    verify_summary,
)
from .run_config import (
    ConfigError,
    RunConfig,
    construct_run_config,
    dump_config,
    load_run_config,
)
