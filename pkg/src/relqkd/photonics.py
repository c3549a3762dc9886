"""
Physical-layer models.

Pulse pairs are carried as complex coherent amplitudes; ``|amp|**2`` is the
mean photon number of a pulse. Bob's delay interferometer is reduced to its
middle time slot at the destructive (detector) port, where the long-arm copy
of the reference pulse overlaps the short-arm copy of the data pulse.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace
from typing import Literal, NamedTuple

import numpy as np

from relqkd.errors import DomainError

__all__ = [
    "PulsePair",
    "InterferometerModel",
    "DetectorModel",
    "BeamDesign",
    "BeamOptimum",
    "db_to_transmittance",
    "encode_phase",
    "attenuate",
    "middle_slot_mean_photons",
    "middle_slot_mean_photons_array",
    "click_probability",
    "beam_channel_length",
    "max_beam_length",
]


@dataclass(frozen=True)
class PulsePair:
    amp1: complex  # reference pulse
    amp2: complex  # data pulse
    emission_time: float = 0.0
    separation: float = 22e-9

    def __post_init__(self) -> None:
        if not self.separation > 0:
            raise DomainError("pulse separation must be positive")

    @property
    def photons(self) -> tuple[float, float]:
        return abs(self.amp1) ** 2, abs(self.amp2) ** 2


@dataclass(frozen=True)
class InterferometerModel:
    """Delay interferometer at Bob's station.

    ``visibility`` is the fringe visibility, ``static_phase`` the bias of the
    detector port (0 gives perfect destructive interference for equal
    phases), ``insertion_transmittance`` the lumped insertion loss.
    """

    visibility: float = 0.99
    static_phase: float = 0.0
    insertion_transmittance: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.visibility <= 1.0:
            raise DomainError(f"visibility must lie in [0, 1], got {self.visibility!r}")
        if not 0.0 < self.insertion_transmittance <= 1.0:
            raise DomainError("insertion_transmittance must lie in (0, 1]")
        if not math.isfinite(self.static_phase):
            raise DomainError("static_phase must be finite")


@dataclass(frozen=True)
class DetectorModel:
    # dark_prob: per detection window; the 1e-5 default is an uncalibrated placeholder
    efficiency: float = 0.3
    dark_prob: float = 1e-5

    def __post_init__(self) -> None:
        if not 0.0 <= self.efficiency <= 1.0:
            raise DomainError(f"efficiency must lie in [0, 1], got {self.efficiency!r}")
        if not 0.0 <= self.dark_prob < 1.0:
            raise DomainError(f"dark_prob must lie in [0, 1), got {self.dark_prob!r}")


@dataclass(frozen=True)
class BeamDesign:
    wavelength: float  # m
    lens_radius: float  # m, beam radius at the lens
    waist_radius: float  # m

    def __post_init__(self) -> None:
        if not self.wavelength > 0:
            raise DomainError("wavelength must be positive")
        if not 0 < self.waist_radius <= self.lens_radius:
            raise DomainError("need 0 < waist_radius <= lens_radius")


class BeamOptimum(NamedTuple):
    length: float
    waist_radius: float
    rayleigh_length: float


def db_to_transmittance(loss_db: float) -> float:
    return 10.0 ** (-loss_db / 10.0)


def encode_phase(p: PulsePair, which: Literal["first", "second"], phase: float) -> PulsePair:
    """Multiply one pulse amplitude by ``exp(i * phase)``."""
    factor = cmath.exp(1j * phase)
    if which == "first":
        return replace(p, amp1=p.amp1 * factor)
    if which == "second":
        return replace(p, amp2=p.amp2 * factor)
    raise ValueError(f"which must be 'first' or 'second', got {which!r}")


def attenuate(p: PulsePair, transmittance: float) -> PulsePair:
    if not 0.0 <= transmittance <= 1.0:
        raise DomainError(f"transmittance must lie in [0, 1], got {transmittance!r}")
    s = math.sqrt(transmittance)
    return replace(p, amp1=p.amp1 * s, amp2=p.amp2 * s)


def middle_slot_mean_photons(p: PulsePair, m: InterferometerModel) -> float:
    """
    Mean photon number in the detector-port middle slot.

    ``T_ins * [(|a1|^2 + |a2|^2)/4 - (V/2)|a1||a2| cos(arg a2 - arg a1 + static)]``
    """
    return float(middle_slot_mean_photons_array(p.amp1, p.amp2, m))


def middle_slot_mean_photons_array(amp1, amp2, m: InterferometerModel):
    """Vectorised form of :func:`middle_slot_mean_photons` over amplitude arrays."""
    a1 = np.asarray(amp1, dtype=np.complex128)
    a2 = np.asarray(amp2, dtype=np.complex128)
    n1 = np.abs(a1)
    n2 = np.abs(a2)
    # cos of the relative phase without calling angle() on vacuum components
    cross = np.real(np.conj(a1) * a2 * cmath.exp(1j * m.static_phase))
    mean = m.insertion_transmittance * (
        (n1 * n1 + n2 * n2) / 4.0 - (m.visibility / 2.0) * cross
    )
    # rounding can leave tiny negatives at perfect extinction
    return np.maximum(mean, 0.0)


def click_probability(mean_photons, d: DetectorModel):
    """Probability of at least one count (signal or dark) in the window.

    Accepts a scalar or an array of mean photon numbers.
    """
    n = np.asarray(mean_photons, dtype=float)
    if np.any(n < 0):
        raise DomainError("mean photon number must be >= 0")
    p = 1.0 - (1.0 - d.dark_prob) * np.exp(-d.efficiency * n)
    return float(p) if p.ndim == 0 else p


def beam_channel_length(b: BeamDesign) -> float:
    """Diffraction-limited length of a symmetric Gaussian-beam link."""
    r = b.waist_radius / b.lens_radius
    return 2.0 * math.pi * b.lens_radius**2 / b.wavelength * r * math.sqrt(max(0.0, 1.0 - r * r))


def max_beam_length(wavelength: float, lens_radius: float) -> BeamOptimum:
    """Best link length for a given lens radius, reached at waist = w / sqrt(2)."""
    if not (wavelength > 0 and lens_radius > 0):
        raise DomainError("wavelength and lens_radius must be positive")
    length = math.pi * lens_radius**2 / wavelength
    return BeamOptimum(length, lens_radius / math.sqrt(2.0), length / 2.0)
