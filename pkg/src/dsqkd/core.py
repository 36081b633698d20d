"""Shared domain types, the shot-noise unit convention, and seeded randomness.

Unit convention used everywhere in this package:

* Quadratures follow X = a + a-dagger, so a vacuum ensemble has variance
  N0 = 1 per quadrature.  All quadrature values are expressed in sqrt(N0)
  units; raw detector millivolts exist only at the receiver boundary.
* A coherent amplitude alpha maps to mean quadratures (2 Re alpha,
  2 Im alpha), hence mean photon number = (x^2 + p^2) / 4.
* A global phase of the optical field is not represented: it cancels from
  every measured statistic, and only phases relative to the local
  oscillator are observable.  One fixed right-handed phase-space frame is
  used throughout.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

#: Vacuum (shot-noise) variance per quadrature in package units.
N0 = 1.0

_MAX_U64 = 2**64


class DomainError(ValueError):
    """An operation was called outside its input contract."""


def _require_finite(name: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise DomainError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class QuadraturePair:
    """One (x, p) point in phase space, in sqrt(N0) units."""

    x: float
    p: float

    def __post_init__(self) -> None:
        _require_finite("quadrature", self.x, self.p)

    def magnitude(self) -> float:
        return math.hypot(self.x, self.p)

    def rotated(self, theta: float) -> "QuadraturePair":
        c, s = math.cos(theta), math.sin(theta)
        return QuadraturePair(c * self.x - s * self.p, s * self.x + c * self.p)

    def displaced_by(self, delta: "QuadraturePair") -> "QuadraturePair":
        return QuadraturePair(self.x + delta.x, self.p + delta.p)


@dataclass(frozen=True)
class ComplexAmplitude:
    """Dimensionless coherent amplitude; photon number is re^2 + im^2."""

    re: float
    im: float

    def __post_init__(self) -> None:
        _require_finite("amplitude", self.re, self.im)

    @property
    def photon_number(self) -> float:
        return self.re * self.re + self.im * self.im


class SlotKind(enum.IntEnum):
    PILOT = 0
    SHOT_NOISE = 1
    DATA = 2


@dataclass(frozen=True)
class SlotRole:
    """Role tag of one pulse slot inside a packet.

    Pilot slots carry (set_index, position_in_set) with position in
    {0, 1, 2}; data slots carry the index of the symbol they encode.
    """

    kind: SlotKind
    set_index: int = -1
    position_in_set: int = -1
    symbol_index: int = -1

    def __post_init__(self) -> None:
        if self.kind is SlotKind.PILOT and self.position_in_set not in (0, 1, 2):
            raise DomainError(
                f"pilot position_in_set must be 0, 1 or 2, got {self.position_in_set}"
            )

    @staticmethod
    def pilot(set_index: int, position_in_set: int) -> "SlotRole":
        return SlotRole(SlotKind.PILOT, set_index=set_index, position_in_set=position_in_set)

    @staticmethod
    def shot_noise() -> "SlotRole":
        return SlotRole(SlotKind.SHOT_NOISE)

    @staticmethod
    def data(symbol_index: int) -> "SlotRole":
        return SlotRole(SlotKind.DATA, symbol_index=symbol_index)


@dataclass(frozen=True)
class RngStream:
    """Identifier of one deterministic, independent random stream.

    Identical (seed, stream_id) pairs reproduce bit-identical sample
    sequences; distinct stream_ids give statistically independent streams.
    Philox is counter-based, so constructing a generator is cheap and the
    mapping (seed, stream_id) -> sequence is stable across processes.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.seed < _MAX_U64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if not 0 <= self.stream_id < _MAX_U64:
            raise DomainError(f"stream_id must be a 64-bit unsigned integer, got {self.stream_id}")

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


def amplitude_to_quadratures(a: ComplexAmplitude) -> QuadraturePair:
    """Map a coherent amplitude to its mean quadratures (2 re, 2 im)."""
    return QuadraturePair(2.0 * a.re, 2.0 * a.im)


def quadratures_to_amplitude(q: QuadraturePair) -> ComplexAmplitude:
    """Inverse of :func:`amplitude_to_quadratures`."""
    return ComplexAmplitude(0.5 * q.x, 0.5 * q.p)


def gaussian_sample(rng: np.random.Generator, mean: float, variance: float, size=None):
    """Draw from N(mean, variance); variance 0 returns the mean exactly.

    ``rng`` is a live generator (typically ``RngStream.generator()``); the
    draw advances its state, so repeated calls walk the stream.
    """
    if variance < 0:
        raise DomainError(f"variance must be >= 0, got {variance}")
    return rng.normal(mean, math.sqrt(variance), size=size)


def rotate(x, p, theta):
    """Rotate quadrature arrays (or scalars) by ``theta`` radians."""
    c, s = np.cos(theta), np.sin(theta)
    return c * x - s * p, s * x + c * p


def wrap_angle(theta):
    """Wrap angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(theta), 2.0 * np.pi)
