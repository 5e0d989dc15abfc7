"""Simulator for a four-user time-division-multiplexed QKD receiver chip."""

__version__ = "0.1.0"

from .chip_model import (
    DetectorOutcome,
    MziSetting,
    Polarization,
    ReceiverConfig,
    VoltagePhaseCal,
    chip_transfer,
    detection_distribution,
    mzi_matrix,
    phase_from_voltage,
    routing_config,
)
from .decoy_bb84 import (
    DecoyBounds,
    DecoyObservables,
    KeyRateReport,
    binary_entropy,
    calibrate_misalignment,
    decoy_bounds,
    key_rate_report,
    predict_observables,
    secret_key_rate,
)
from .link_model import (
    ChannelParams,
    DetectorParams,
    LinkParams,
    SourceParams,
    click_probability,
    dark_prob_per_gate,
    system_transmittance,
)
from .sim_engine import TallyCounts, simulate, tallies_to_observables
from .tdm_network import CrosstalkScenario, Schedule, crosstalk_run, run_schedule
