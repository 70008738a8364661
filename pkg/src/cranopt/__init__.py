"""Uplink C-RAN joint beamforming and fronthaul compression toolkit."""

from .errors import (
    ConfigError,
    ConvergenceError,
    CranoptError,
    DimensionMismatchError,
    DimensionTooLargeError,
    EigenConvergenceError,
    InfeasibleStartError,
    InvalidLayoutError,
    NewtonMaxIterationsError,
    NonMonotoneProgressError,
    SingularMatrixError,
)
from .hermitian import eigh, herm_psd, hermitize, logdet2, psd_project, solve_psd
from .network import (
    ChannelParams,
    ChannelRealization,
    ClusterAssignment,
    NetworkTopology,
    UserDrop,
    build_hex_layout,
    drop_users,
    form_clusters,
    generate_channels,
    load_channels,
    save_channels,
    schedule_round_robin,
)
from .rates import (
    BeamformerSet,
    DecompressionOrder,
    QuantCovSet,
    SchemeConfig,
    cutset_bound,
    fronthaul_usage_su,
    fronthaul_usage_wz,
    fronthaul_violation,
    mmse_receiver,
    user_rates,
    weighted_sum_rate,
)
from .sca import (
    OptimizerState,
    SolverOptions,
    build_subproblem,
    heuristic_decompression_order,
    solve_inner,
    update_aux,
    wmmse_sca,
)
from .separate import (
    MacCovariances,
    beamformers_from_covariance,
    bisect_beta_su,
    bisect_beta_wz,
    mac_covariances,
    separate_design,
)

__version__ = "0.1.0"

from .harness import (        # noqa: E402  (depends on the names above)
    ExperimentResult,
    ScenarioConfig,
    brute_force_oracle,
    emit_cdf,
    run_experiment,
    write_cdf_csv,
    write_sweep_csv,
)
