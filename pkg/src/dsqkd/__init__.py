"""Desk-scale simulator for simultaneous classical data transmission and
continuous-variable QKD on displaced coherent states."""

__version__ = "0.1.0"

from .channel import ChannelParams, PhaseTrack, propagate, step_phase
from .classical import (
    LinkReport,
    ber_from_q,
    count_bit_errors,
    demodulate_psk,
    q_factor,
)
from .config import ConfigError, ExperimentConfig, load_config
from .core import (
    N0,
    ComplexAmplitude,
    DomainError,
    QuadraturePair,
    RngStream,
    SlotKind,
    SlotRole,
    amplitude_to_quadratures,
    gaussian_sample,
    quadratures_to_amplitude,
)
from .dsp import (
    CalibrationResult,
    PatternSet,
    Quadrature,
    calibrate_shot_noise,
    derotate,
    estimate_displacement,
    estimate_packet_phase,
    remove_displacement,
    smooth_phase,
)
from .experiment import ExperimentReport, keyrate_only, run_experiment, sweep
from .receiver import RawSample, ReceiverParams, heterodyne_measure, measure_vacuum
from .security import (
    SecurityEstimate,
    SecurityParams,
    g_holevo,
    holevo_bound,
    max_tolerable_excess_noise,
    mutual_information,
    noise_decomposition,
    secret_key_rate,
    symplectic_spectrum,
)
from .transmitter import (
    ModulationParams,
    Packet,
    PacketLayout,
    apply_displacement,
    beamsplitter_displace,
    build_packet,
    gaussian_modulate,
    psk_displacement,
)

__all__ = [name for name in dir() if not name.startswith("_")]
