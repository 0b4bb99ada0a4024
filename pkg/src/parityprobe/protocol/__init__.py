"""Pulse schedules and open-system simulation of subset-parity measurements."""
from .params import (OPERATOR_LABELS, ConfigError, DeviceParams, SubsetParitySpec,
                     default_theta)
from .schedule import (AncillaMeasure, CavityReset, Displace, FreeEvolve, Herald,
                       PulseSchedule, QubitGate, ScheduleOptions, build_schedule,
                       echo_separations, fock_tail, mapping_time, max_pointer_photons,
                       pointer_separation, required_cutoff)
from .shots import OutcomeRecord, product_state, sample_outcomes, shot_uniforms, simulate_shots
from .simulate import (IntegratorError, SimOptions, SimulationError, TruncationError,
                       ideal_instrument, postselect, simulate_instrument, simulate_variants)

__all__ = [
    "OPERATOR_LABELS", "ConfigError", "DeviceParams", "SubsetParitySpec", "default_theta",
    "AncillaMeasure", "CavityReset", "Displace", "FreeEvolve", "Herald", "PulseSchedule",
    "QubitGate", "ScheduleOptions", "build_schedule", "echo_separations", "fock_tail",
    "mapping_time", "max_pointer_photons", "pointer_separation", "required_cutoff",
    "IntegratorError", "SimOptions", "SimulationError", "TruncationError",
    "ideal_instrument", "postselect", "simulate_instrument", "simulate_variants",
    "OutcomeRecord", "product_state", "sample_outcomes", "shot_uniforms", "simulate_shots",
]
