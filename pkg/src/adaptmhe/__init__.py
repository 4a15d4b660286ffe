"""Moving horizon estimation for joint state and time-varying-parameter
estimation with observability-adaptive regularization."""

from .certificates import (
    CertificateSet,
    IossCertificate,
    ObservabilityCertificate,
    ParamUbebsCertificate,
    ViolationReport,
    check_ioss,
    check_ubebs,
    membership_E,
)
from .harness import (
    DisturbanceSpec,
    ExperimentConfig,
    RunRecord,
    compare_runs,
    emit_plots,
    generate_disturbances,
    preset,
    run_experiment,
)
from .mhe import EstimateRecord, MheConfig, MovingHorizonEstimator, WindowSolution
from .model import Box, ConstraintSets, Jacobians, SystemModel, Trajectory, simulate_truth
from .monitor import MonitorConfig, MonitorOutput, is_observable, observability_gramian
from .solver import NlsProblem, SolveOptions, SolveResult, solve
from .systems import MODELS, chua_model, linear_model, toy_certificates, toy_model
from .analysis import (
    TheoryConstants,
    check_contraction,
    compute_constants,
    min_horizon,
    partition_horizons,
    run_certified,
    theory_mhe_config,
)

__version__ = "0.1.0"
