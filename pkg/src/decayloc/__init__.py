"""Anderson model with a decaying random potential: Prufer asymptotics, finite-box spectra and transport."""
from .model import (
    BandEdgeError,
    DecayEnvelope,
    DisorderRealization,
    DisorderSpec,
    EnergyPoint,
    ModelParams,
    UnsupportedDistribution,
    derive_seed,
    energy_point,
    potential,
    potential_value,
    sample_disorder,
)
from .prufer import (
    PruferState,
    TransferMatrix,
    TransferProduct,
    accumulate,
    norm_upper_from_angles,
    prufer_init,
    prufer_step,
    reconstruct_solution,
    single_transfer,
)
from .asymptotics import (
    decomposition_trace,
    estimate_beta,
    fourth_moment_curve,
    normalizer,
    oscillatory_sum_ratio,
    theoretical_beta,
)
from .spectrum import build_box, decay_fit, decaying_direction, diagonalize, solution_floor
from .dynamics import (
    abel_moment,
    correlator,
    correlator_decay_experiment,
    greens_fractional_moment,
    inverse_transfer_moment,
    moment_curve,
    stretched_divergence_witness,
    transport_exponent,
)
from .config import ExperimentConfig
from .experiments import phase_sweep, run_experiment

__version__ = "0.1.0"
