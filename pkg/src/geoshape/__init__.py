"""Geometric constellation shaping for AWGN and nonlinear optical channels."""

__version__ = "0.1.0"

from .air import (
    AirReport,
    AwgnChannel,
    GhqGrid,
    capacity_2d,
    evaluate,
    ghq_grid,
    gmi,
    mi,
    mi_monte_carlo,
    r_star,
)
from .constellation import (
    Constellation,
    FecParams,
    excess_kurtosis,
    generate,
    load_csv,
    normalize,
    save_csv,
)
from .fibre import FibreModel, snr_for_constellation
from .grad import (
    ObjectiveGradient,
    compose_awgn_objective,
    compose_nonlinear_objective,
    fd_gradient,
    gmi_gradient,
    mi_gradient,
)
from .labeling import assign_labels, graymap
from .optim import OptimizerConfig, fold_orthant, make_objective, multi_start, optimize

__all__ = [
    "AirReport", "AwgnChannel", "GhqGrid", "capacity_2d", "evaluate", "ghq_grid", "gmi", "mi",
    "mi_monte_carlo", "r_star", "Constellation", "FecParams", "excess_kurtosis", "generate",
    "load_csv", "normalize", "save_csv", "FibreModel", "snr_for_constellation",
    "ObjectiveGradient", "compose_awgn_objective", "compose_nonlinear_objective", "fd_gradient",
    "gmi_gradient", "mi_gradient", "assign_labels", "graymap", "OptimizerConfig", "fold_orthant",
    "make_objective", "multi_start", "optimize",
]
