"""Simulation, finite-key analysis and planning for fully connected MDI-QKD networks."""

from .config import ConfigError, SessionConfig, load_config
from .finitekey import (
    InfeasibleError,
    KeyRateReport,
    binary_entropy,
    chernoff_delta,
    estimate_e11ph_upper,
    estimate_s11_lower,
    expectation_bounds,
    finite_key_pipeline,
    key_rate,
)
from .gaintable import GainRecord, ingest_gain_table, write_gain_table
from .kernels import BACKEND
from .model import (
    Counts,
    DataError,
    GainTally,
    IntensityClass,
    IntensityProtocol,
    LinkModel,
    TimeBinQubit,
    encode,
    default_protocol,
    transmittance,
)
from .network import Topology, TdmSchedule, build_tdm_schedule, plan_full_mesh, resource_counts
from .optimizer import (
    OptimizationResult,
    optimize_protocol,
    rate_vs_loss,
    reference_link,
    simultaneity_rate,
)
from .photonic import (
    click_probability,
    expected_gains,
    four_fold_count,
    hom_scan,
    kappa_for_visibility,
    simulate_tally,
)

__version__ = "0.1.0"
