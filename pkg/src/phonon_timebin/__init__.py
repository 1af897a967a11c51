"""Desk-scale simulator of heralded photon-phonon time-bin entanglement with
round-trip phonon propagation, interferometric readout, and the full
statistical analysis battery (g2, E, S, R, visibility, calibrations)."""

from .core import (
    CavityParams,
    ConfigError,
    EngineSpec,
    ExperimentConfig,
    ExperimentKind,
    NoiseModel,
    OutcomeDistribution,
    PhaseSettings,
    PulseRole,
    PulseSpec,
    ValidationError,
    WaveguideParams,
    build_pulse_sequence,
    config_digest,
    load_config,
    sample_phase_jitter,
    save_config,
    scattering_probability_from_energy,
    with_overrides,
)

__all__ = [
    "CavityParams",
    "ConfigError",
    "EngineSpec",
    "ExperimentConfig",
    "ExperimentKind",
    "NoiseModel",
    "OutcomeDistribution",
    "PhaseSettings",
    "PulseRole",
    "PulseSpec",
    "ValidationError",
    "WaveguideParams",
    "build_pulse_sequence",
    "config_digest",
    "load_config",
    "sample_phase_jitter",
    "save_config",
    "scattering_probability_from_energy",
    "with_overrides",
]

__version__ = "0.1.0"
