"""Linear feedback coding for Gaussian two-way channels."""

from .model import (
    ChannelParams,
    DecoderPair,
    EncoderPair,
    NativeEncoderPair,
    PowerReport,
    Targets,
    effective_to_native,
    native_to_effective,
    optimal_combiners,
    q1_matrix,
    q2_matrix,
    snr_pair,
    transmit_powers,
)
from .optimizer import OptimizerConfig, OptimReport, two_way_optimize
from .simulator import SimConfig, SimulationReport, run_exchange

__all__ = [
    "ChannelParams", "DecoderPair", "EncoderPair", "NativeEncoderPair", "PowerReport",
    "Targets", "effective_to_native", "native_to_effective", "optimal_combiners",
    "q1_matrix", "q2_matrix", "snr_pair", "transmit_powers",
    "OptimizerConfig", "OptimReport", "two_way_optimize",
    "SimConfig", "SimulationReport", "run_exchange",
]
