from ._core import (
    ConfigError,
    EstimatorGain,
    IntegrationFault,
    __version__,
    error_bound,
    lyapunov_residual,
    make_gain,
    output_bound,
    parse_config,
    probe_bounds,
    resolved_config,
    run_scenario,
    solve_qp,
)

__all__ = [
    "ConfigError",
    "EstimatorGain",
    "IntegrationFault",
    "__version__",
    "error_bound",
    "lyapunov_residual",
    "make_gain",
    "output_bound",
    "parse_config",
    "probe_bounds",
    "resolved_config",
    "run_scenario",
    "solve_qp",
]
