"""Experiment configuration: defaults, file loading, and validation.

The config file format is flat ``key = value`` text with ``#`` comments,
one key per line; CLI flags override file values.  Defaults reproduce the
reference operating point of the study this simulator models: V_A = 5,
receive-side displacement 13 sqrt(N0), T = 0.28, xi = 0.055, eta = 0.62,
v_ele = 0.01, heterodyne gamma = 1/2, 400-slot packets at a 2 MHz clock.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

from .channel import ChannelParams
from .core import DomainError
from .receiver import ReceiverParams
from .security import SecurityParams
from .transmitter import (
    ModulationParams,
    PacketLayout,
    alice_displacement_magnitude,
)


class ConfigError(Exception):
    """Invalid configuration input (bad key, bad value, failed validation)."""


MODULATION_NAMES = {"bpsk": 2, "qpsk": 4, "8psk": 8}


@dataclass(frozen=True)
class ExperimentConfig:
    # Alice
    v_a: float = 5.0  # Gaussian modulation variance [N0]
    delta_bob: float = 13.0  # target displacement magnitude at Bob [sqrt(N0)]
    psk_order: int = 2  # constellation size M (2, 4, 8)
    gray_coding: bool = True
    bs_reflectivity: float = 0.01  # displacement beam-splitter reflectivity
    # packet layout
    slots_per_packet: int = 400
    pilot_pulses: int = 36  # 12 triplets
    shot_noise_slots: int = 120
    data_slots: int = 244
    # channel
    transmittance: float = 0.28
    excess_noise: float = 0.055  # [N0], Alice-referred
    phase_step_std: float = 5e-6  # drift per pulse [rad]; see README on defaults
    initial_phase: float = 0.0
    # receiver
    eta: float = 0.62
    v_ele: float = 0.01  # [N0]
    gamma: float = 0.5  # 1/2 = heterodyne, 1 = homodyne
    gain_mv: float = 10.0  # detector millivolts per sqrt(N0)
    # post-processing
    smoothing_weight: float = 0.01  # EWMA weight for packet phase tracking
    phase_correction: bool = True
    displacement_enabled: bool = True
    # security
    reconciliation_efficiency: float = 0.9
    # harness
    n_packets: int = 5000
    clock_hz: float = 2.0e6
    seed: int = 20260809
    workers: int = 1
    output_dir: str = "out"
    emit_traces: bool = False

    def __post_init__(self) -> None:
        try:
            self.modulation()
            self.layout()
            self.channel()
            self.receiver()
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc
        if self.n_packets < 1:
            raise ConfigError(f"n_packets must be >= 1, got {self.n_packets}")
        if self.clock_hz <= 0:
            raise ConfigError(f"clock_hz must be > 0, got {self.clock_hz}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if not 0.0 < self.smoothing_weight <= 1.0:
            raise ConfigError(
                f"smoothing_weight must be in (0, 1], got {self.smoothing_weight}"
            )
        if not 0.0 < self.reconciliation_efficiency <= 1.0:
            raise ConfigError(
                "reconciliation_efficiency must be in (0, 1], got "
                f"{self.reconciliation_efficiency}"
            )

    # component views -----------------------------------------------------
    def modulation(self) -> ModulationParams:
        return ModulationParams(
            v_a=self.v_a,
            delta_bob=self.delta_bob,
            psk_order=self.psk_order,
            gray_coding=self.gray_coding,
            bs_reflectivity=self.bs_reflectivity,
        )

    def layout(self) -> PacketLayout:
        return PacketLayout(
            slots_per_packet=self.slots_per_packet,
            pilot_pulses=self.pilot_pulses,
            shot_noise_slots=self.shot_noise_slots,
            data_slots=self.data_slots,
        )

    def channel(self) -> ChannelParams:
        return ChannelParams(
            transmittance=self.transmittance,
            excess_noise=self.excess_noise,
            phase_step_std=self.phase_step_std,
            initial_phase=self.initial_phase,
        )

    def receiver(self) -> ReceiverParams:
        return ReceiverParams(
            eta=self.eta, v_ele=self.v_ele, gamma=self.gamma, gain_mv=self.gain_mv
        )

    def security(self, transmittance: float | None = None, excess_noise: float | None = None) -> SecurityParams:
        return SecurityParams(
            v_a=self.v_a,
            transmittance=self.transmittance if transmittance is None else transmittance,
            excess_noise=self.excess_noise if excess_noise is None else excess_noise,
            eta=self.eta,
            v_ele=self.v_ele,
            gamma=self.gamma,
            reconciliation_efficiency=self.reconciliation_efficiency,
            effective_rate_hz=self.effective_rate_hz,
        )

    # derived quantities --------------------------------------------------
    @property
    def delta_alice(self) -> float:
        """Alice-side displacement magnitude backed out of the nominal chain."""
        return alice_displacement_magnitude(
            self.delta_bob, self.gamma, self.eta, self.transmittance
        )

    @property
    def effective_rate_hz(self) -> float:
        """Data-slot share of the clock: the usable symbol rate."""
        return self.clock_hz * self.data_slots / self.slots_per_packet

    @property
    def data_rate_bps(self) -> float:
        return self.effective_rate_hz * math.log2(self.psk_order)

    @property
    def pulses(self) -> int:
        return self.n_packets * self.slots_per_packet


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def config_field_names() -> tuple[str, ...]:
    return tuple(_FIELDS)


def _parse_value(key: str, raw: str):
    if key not in _FIELDS:
        raise ConfigError(
            f"unknown config key {key!r}; valid keys: {', '.join(sorted(_FIELDS))}"
        )
    target = _FIELDS[key].type
    text = raw.strip()
    try:
        if target in ("bool", bool):
            low = text.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if target in ("int", int):
            return int(text, 0)
        if target in ("float", float):
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from exc


def parse_config_text(text: str) -> dict:
    """Parse flat ``key = value`` lines with ``#`` comments into overrides."""
    overrides: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        overrides[key] = _parse_value(key, raw)
    return overrides


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Build a config from defaults, an optional file, then overrides."""
    merged: dict = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        merged.update(parse_config_text(p.read_text()))
    for key, value in (overrides or {}).items():
        if key not in _FIELDS:
            raise ConfigError(
                f"unknown config key {key!r}; valid keys: {', '.join(sorted(_FIELDS))}"
            )
        merged[key] = value
    try:
        return ExperimentConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
