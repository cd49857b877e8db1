"""Multi-band Rydberg-atomic receiver MIMO simulator and transceiver optimizer."""

from .errors import (
    DegenerateOperatingPointError,
    ModelInconsistencyError,
    NumericalDegeneracyError,
    OptimizerFailureError,
    RydmimoError,
)
from .physics import (
    AtomicSystem,
    LOConfig,
    QuantumGains,
    SteadyStateSolution,
    build_generator,
    build_hamiltonian,
    probe_transmission,
    reduce_generator,
    solve_steady_state,
    transconductances,
)
from .signal_model import (
    BandFrontEnd,
    NoiseModel,
    bbr_covariance,
    received_covariance_sdma,
    signal_coefficient,
    total_noise_covariance,
    user_se,
    weighted_se,
)
from .wmmse import (
    ArmijoConfig,
    Scenario,
    SolverConfig,
    TransceiverState,
    lo_gradient_step,
    mse_matrix,
    objective_fq,
    qwmmse_solve,
    update_combiners,
    update_precoders,
    update_weights,
)
from .montecarlo import (
    CampaignConfig,
    ChannelModel,
    ScenarioTemplate,
    classical_baseline_solve,
    run_campaign,
    sample_channel,
)

__version__ = "0.1.0"
