"""
Closed-form information quantities for the two-state coherent signal set.

The signal alphabet is the pair of weak coherent states |alpha> and
|e^{i phi} alpha> with alpha = sqrt(mu) e^{i phase0}. Everything here is a
pure function of its arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from relqkd.errors import DomainError

__all__ = [
    "SignalAlphabet",
    "KeyRateInputs",
    "binary_entropy",
    "state_overlap",
    "holevo_bound",
    "secret_key_rate",
]

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SignalAlphabet:
    """Coherent-state pair parameters.

    Attributes
    ----------
    mu : float
        Mean photon number per pulse, ``>= 0``.
    phi : float
        Modulation depth in radians, ``0 < phi <= pi``.
    phase0 : float
        Global reference phase in radians, ``[0, 2 pi)``.
    """

    mu: float
    phi: float
    phase0: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mu) and self.mu >= 0.0):
            raise DomainError(f"mu must be finite and >= 0, got {self.mu!r}")
        if not (0.0 < self.phi <= math.pi):
            raise DomainError(f"phi must lie in (0, pi], got {self.phi!r}")
        if not (0.0 <= self.phase0 < TWO_PI):
            raise DomainError(f"phase0 must lie in [0, 2 pi), got {self.phase0!r}")

    @classmethod
    def from_degrees(cls, mu: float, phi_deg: float, phase0_deg: float = 0.0) -> "SignalAlphabet":
        return cls(mu=mu, phi=math.radians(phi_deg), phase0=math.radians(phase0_deg) % TWO_PI)

    @property
    def amplitude(self) -> complex:
        """Reference amplitude alpha."""
        return math.sqrt(self.mu) * complex(math.cos(self.phase0), math.sin(self.phase0))


@dataclass(frozen=True)
class KeyRateInputs:
    eta_timing: float
    p_e: float
    holevo: float

    def __post_init__(self) -> None:
        for name, value, hi in (
            ("eta_timing", self.eta_timing, 1.0),
            ("p_e", self.p_e, 0.5),
            ("holevo", self.holevo, 1.0),
        ):
            if not (0.0 <= value <= hi):
                raise DomainError(f"{name} must lie in [0, {hi}], got {value!r}")


def binary_entropy(x: float) -> float:
    """
    Binary Shannon entropy in bits.

    Uses the convention ``0 * log2(0) = 0`` so that ``h(0) = h(1) = 0``.

    Raises
    ------
    DomainError
        If ``x`` is outside ``[0, 1]``.
    """
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"binary_entropy argument must lie in [0, 1], got {x!r}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def state_overlap(alphabet: SignalAlphabet) -> float:
    """Overlap ``|<alpha|e^{i phi} alpha>| = exp(-2 mu sin^2(phi / 2))``."""
    return math.exp(-2.0 * alphabet.mu * math.sin(alphabet.phi / 2.0) ** 2)


def holevo_bound(alphabet: SignalAlphabet) -> float:
    """Holevo quantity of the equiprobable two-state ensemble, in bits."""
    return binary_entropy((1.0 - state_overlap(alphabet)) / 2.0)


def secret_key_rate(inputs: KeyRateInputs) -> float:
    """
    Asymptotic secret-key rate per sifted bit,
    ``(1 - eta)(1 - C) - eta - h(p_e)``.

    The value is not clamped; a result ``<= 0`` means no private key can be
    distilled from the series.
    """
    eta = inputs.eta_timing
    return (1.0 - eta) * (1.0 - inputs.holevo) - eta - binary_entropy(inputs.p_e)
