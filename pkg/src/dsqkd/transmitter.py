"""Alice: Gaussian quadrature modulation, PSK-keyed displacement, packets.

A packet interleaves three kinds of slots: pilot triplets with a known
three-phase pattern (used downstream for phase tracking and displacement
estimation), empty shot-noise slots (used for detector calibration), and
data slots carrying a Gaussian-modulated state displaced along one of M
PSK directions.  The displacement magnitude prepared at Alice is chosen so
that the magnitude seen after the nominal channel and detector matches the
configured receive-side target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from .core import (
    ComplexAmplitude,
    DomainError,
    QuadraturePair,
    SlotKind,
    SlotRole,
    gaussian_sample,
)


@dataclass(frozen=True)
class ModulationParams:
    """Gaussian modulation variance plus the PSK displacement format."""

    v_a: float = 5.0
    delta_bob: float = 13.0
    psk_order: int = 2
    gray_coding: bool = True
    bs_reflectivity: float = 0.01

    def __post_init__(self) -> None:
        if self.v_a <= 0:
            raise DomainError(f"v_a must be > 0, got {self.v_a}")
        if self.delta_bob <= 0:
            raise DomainError(f"delta_bob must be > 0, got {self.delta_bob}")
        m = self.psk_order
        if m < 2 or m & (m - 1):
            raise DomainError(f"psk_order must be a power of two >= 2, got {m}")
        if not 0.0 < self.bs_reflectivity < 0.5:
            raise DomainError(
                f"bs_reflectivity must be in (0, 0.5), got {self.bs_reflectivity}"
            )

    @property
    def bits_per_symbol(self) -> int:
        return self.psk_order.bit_length() - 1

    @property
    def rotation_offset(self) -> float:
        # BPSK sits on the +-x axis; larger constellations are rotated by
        # pi/M so no point lies on a quadrature axis.  Any fixed offset is
        # equivalent once the receiver derotates with pilot estimates.
        return 0.0 if self.psk_order == 2 else math.pi / self.psk_order

    def constellation_angle(self, symbol: int) -> float:
        if not 0 <= symbol < self.psk_order:
            raise DomainError(
                f"symbol must be in [0, {self.psk_order}), got {symbol}"
            )
        return 2.0 * math.pi * symbol / self.psk_order + self.rotation_offset


@dataclass(frozen=True)
class PacketLayout:
    """Slot budget of one packet and the pilot phase pattern step."""

    slots_per_packet: int = 400
    pilot_pulses: int = 36
    shot_noise_slots: int = 120
    data_slots: int = 244
    pilot_phase_step: float = 2.0 * math.pi / 3.0

    def __post_init__(self) -> None:
        total = self.pilot_pulses + self.shot_noise_slots + self.data_slots
        if total != self.slots_per_packet:
            raise DomainError(
                f"slot counts {self.pilot_pulses}+{self.shot_noise_slots}"
                f"+{self.data_slots} != slots_per_packet {self.slots_per_packet}"
            )
        if self.pilot_pulses <= 0 or self.pilot_pulses % 3:
            raise DomainError(
                f"pilot_pulses must be a positive multiple of 3, got {self.pilot_pulses}"
            )
        if self.slots_per_packet // self.pilot_sets < 3:
            raise DomainError("pilot triplets do not fit the packet")

    @property
    def pilot_sets(self) -> int:
        return self.pilot_pulses // 3

    def slot_roles(self) -> tuple[SlotRole, ...]:
        return _slot_roles(self)

    def data_fraction(self) -> float:
        return self.data_slots / self.slots_per_packet


@lru_cache(maxsize=8)
def _slot_indices(layout: PacketLayout) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(pilot slot indices, pilot position within triplet, data slot indices
    in symbol order) for vectorized packet assembly."""
    roles = _slot_roles(layout)
    pilot_idx = np.array([i for i, r in enumerate(roles) if r.kind is SlotKind.PILOT])
    pilot_pos = np.array([roles[i].position_in_set for i in pilot_idx])
    data_idx = np.array([i for i, r in enumerate(roles) if r.kind is SlotKind.DATA])
    return pilot_idx, pilot_pos, data_idx


@lru_cache(maxsize=8)
def _slot_roles(layout: PacketLayout) -> tuple[SlotRole, ...]:
    """Deterministic slot map: pilot triplets evenly interleaved, shot-noise
    slots evenly spread over the remainder, data slots filling the rest."""
    n = layout.slots_per_packet
    roles: list[SlotRole | None] = [None] * n
    spacing = n // layout.pilot_sets
    for t in range(layout.pilot_sets):
        start = t * spacing
        for i in range(3):
            roles[start + i] = SlotRole.pilot(t, i)
    free = [s for s in range(n) if roles[s] is None]
    placed = 0
    for j, s in enumerate(free):
        take = ((j + 1) * layout.shot_noise_slots) // len(free)
        if take > placed:
            roles[s] = SlotRole.shot_noise()
            placed = take
    sym = 0
    for s in free:
        if roles[s] is None:
            roles[s] = SlotRole.data(sym)
            sym += 1
    assert placed == layout.shot_noise_slots and sym == layout.data_slots
    return tuple(roles)  # type: ignore[arg-type]


@dataclass(frozen=True)
class Packet:
    """Ground truth for one transmitted packet.

    ``tx_x``/``tx_p`` hold the prepared quadratures of all slots in slot
    order; ``symbols`` and ``bits`` only cover the data slots.
    """

    packet_index: int
    layout: PacketLayout
    tx_x: np.ndarray
    tx_p: np.ndarray
    symbols: np.ndarray
    bits: np.ndarray

    @property
    def roles(self) -> tuple[SlotRole, ...]:
        return self.layout.slot_roles()

    def slots(self) -> Iterator[tuple[SlotRole, QuadraturePair]]:
        for role, x, p in zip(self.roles, self.tx_x, self.tx_p):
            yield role, QuadraturePair(float(x), float(p))


def gray_encode(n: int) -> int:
    return n ^ (n >> 1)


def gray_decode(g: int) -> int:
    n = 0
    while g:
        n ^= g
        g >>= 1
    return n


def gaussian_modulate(rng: np.random.Generator, v_a: float, n: int) -> np.ndarray:
    """Draw n i.i.d. N(0, v_a) quadrature pairs; returns shape (n, 2)."""
    if v_a <= 0:
        raise DomainError(f"v_a must be > 0, got {v_a}")
    return np.asarray(gaussian_sample(rng, 0.0, v_a, size=(n, 2)))


def psk_displacement(symbol: int, mod: ModulationParams, delta_alice: float) -> QuadraturePair:
    """Displacement vector of magnitude delta_alice at the symbol's angle."""
    angle = mod.constellation_angle(symbol)
    return QuadraturePair(delta_alice * math.cos(angle), delta_alice * math.sin(angle))


def psk_displacements(symbols: np.ndarray, mod: ModulationParams, delta_alice: float) -> np.ndarray:
    """Vectorized :func:`psk_displacement`; returns shape (n, 2)."""
    symbols = np.asarray(symbols)
    if symbols.size and (symbols.min() < 0 or symbols.max() >= mod.psk_order):
        raise DomainError("symbol out of range for constellation")
    angles = 2.0 * np.pi * symbols / mod.psk_order + mod.rotation_offset
    return delta_alice * np.stack([np.cos(angles), np.sin(angles)], axis=-1)


def apply_displacement(state: QuadraturePair, delta: QuadraturePair) -> QuadraturePair:
    """Ideal displacement: componentwise sum (ensemble variance unchanged)."""
    return state.displaced_by(delta)


def beamsplitter_displace(
    signal: ComplexAmplitude, pump: ComplexAmplitude, r: float
) -> ComplexAmplitude:
    """Exact beam-splitter output sqrt(1-r)*signal + sqrt(r)*pump.

    For r -> 0 with sqrt(r)*pump held fixed this converges to the ideal
    displacement implemented by :func:`apply_displacement`.
    """
    if not 0.0 < r < 1.0:
        raise DomainError(f"reflectivity must be in (0, 1), got {r}")
    t_amp = math.sqrt(1.0 - r)
    r_amp = math.sqrt(r)
    return ComplexAmplitude(
        t_amp * signal.re + r_amp * pump.re,
        t_amp * signal.im + r_amp * pump.im,
    )


def pilot_quadratures(layout: PacketLayout, delta_alice: float) -> np.ndarray:
    """Pilot pattern for one triplet: positions i = 0, 1, 2 at phases
    i * pilot_phase_step with amplitude delta_alice; returns shape (3, 2)."""
    phases = np.arange(3) * layout.pilot_phase_step
    return delta_alice * np.stack([np.cos(phases), np.sin(phases)], axis=-1)


def bits_to_symbols(bits: Sequence[int], mod: ModulationParams) -> np.ndarray:
    """Group bits (MSB first) into constellation indices.

    With Gray coding on, the bit group is interpreted as the Gray label of
    the point, so adjacent constellation points differ in a single bit.
    """
    k = mod.bits_per_symbol
    arr = np.asarray(bits, dtype=np.uint8)
    if arr.size % k:
        raise DomainError(f"bit count {arr.size} not a multiple of {k}")
    groups = arr.reshape(-1, k)
    weights = 1 << np.arange(k - 1, -1, -1)
    labels = (groups * weights).sum(axis=1)
    if mod.gray_coding:
        table = np.array([gray_decode(g) for g in range(mod.psk_order)])
        return table[labels]
    return labels.astype(np.int64)


def symbols_to_bits(symbols: np.ndarray, mod: ModulationParams) -> np.ndarray:
    """Inverse of :func:`bits_to_symbols`."""
    k = mod.bits_per_symbol
    symbols = np.asarray(symbols, dtype=np.int64)
    labels = (
        np.array([gray_encode(s) for s in range(mod.psk_order)])[symbols]
        if mod.gray_coding
        else symbols
    )
    shifts = np.arange(k - 1, -1, -1)
    return ((labels[:, None] >> shifts) & 1).astype(np.uint8).reshape(-1)


def build_packet(
    rng: np.random.Generator,
    bits: Sequence[int],
    mod: ModulationParams,
    layout: PacketLayout,
    delta_alice: float,
    packet_index: int = 0,
    pilot_amplitude: float | None = None,
) -> Packet:
    """Assemble one packet from a bit sequence.

    Consumes exactly data_slots * log2(M) leading bits; pilots carry the
    three-phase pattern, shot-noise slots are vacuum, data slots are
    Gaussian modulation plus the PSK displacement.  The pilot amplitude
    equals the displacement magnitude unless overridden (the override
    exists for displacement-free diagnostic runs, which still need working
    pilots).
    """
    needed = layout.data_slots * mod.bits_per_symbol
    bits_arr = np.asarray(bits, dtype=np.uint8)
    if bits_arr.size < needed:
        raise DomainError(
            f"insufficient bits: need {needed}, got {bits_arr.size}"
            f" ({needed - bits_arr.size} missing)"
        )
    bits_arr = bits_arr[:needed]
    symbols = bits_to_symbols(bits_arr, mod)

    gauss = gaussian_modulate(rng, mod.v_a, layout.data_slots)
    data_q = gauss + psk_displacements(symbols, mod, delta_alice)
    pilot_q = pilot_quadratures(
        layout, delta_alice if pilot_amplitude is None else pilot_amplitude
    )

    pilot_idx, pilot_pos, data_idx = _slot_indices(layout)
    tx = np.zeros((layout.slots_per_packet, 2))
    tx[pilot_idx] = pilot_q[pilot_pos]
    tx[data_idx] = data_q  # data_idx is in symbol order by construction
    return Packet(
        packet_index=packet_index,
        layout=layout,
        tx_x=tx[:, 0],
        tx_p=tx[:, 1],
        symbols=symbols,
        bits=bits_arr,
    )


def alice_displacement_magnitude(
    delta_bob: float, gamma: float, eta: float, transmittance_nominal: float
) -> float:
    """Back-compute the Alice-side displacement so the received magnitude
    equals delta_bob through the nominal channel and detector chain."""
    scale = math.sqrt(gamma * eta * transmittance_nominal)
    if scale <= 0:
        raise DomainError("gamma * eta * transmittance must be > 0")
    return delta_bob / scale
