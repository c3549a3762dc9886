"""
Synchronised 20-bit maximal-length LFSR generators.

Fibonacci form. Stages are numbered 1..20 from the input end: feedback is
shifted in at stage 1 (the register's most significant bit) and the output
is stage 20 (the least significant bit). A tap ``t`` therefore reads integer
bit ``20 - t``. With the default taps ``{20, 3}`` the step is::

    out = reg & 1
    fb  = (reg >> 0 ^ reg >> 17) & 1
    reg = (reg >> 1) | (fb << 19)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "WIDTH",
    "PERIOD",
    "DEFAULT_TAPS",
    "LfsrState",
    "next_bit",
    "generate_bits",
    "make_synchronized_pair",
    "cycle_length",
]

WIDTH = 20
PERIOD = (1 << WIDTH) - 1
MASK = PERIOD
DEFAULT_TAPS: frozenset[int] = frozenset({20, 3})

# tap sets whose full period has been verified by tests/test_prng.py
_VETTED = {DEFAULT_TAPS}


def _tap_mask(taps: frozenset[int]) -> int:
    m = 0
    for t in taps:
        m |= 1 << (WIDTH - t)
    return m


def _step(reg: int, tap_mask: int) -> int:
    fb = (reg & tap_mask).bit_count() & 1
    return (reg >> 1) | (fb << (WIDTH - 1))


@lru_cache(maxsize=None)
def cycle_length(register: int, taps: frozenset[int] = DEFAULT_TAPS) -> int:
    """Number of steps until ``register`` recurs (brute force)."""
    tm = _tap_mask(taps)
    reg = _step(register, tm)
    n = 1
    while reg != register:
        reg = _step(reg, tm)
        n += 1
        if n > PERIOD:
            return -1
    return n


@dataclass(frozen=True)
class LfsrState:
    register: int
    taps: frozenset[int] = field(default=DEFAULT_TAPS)

    def __post_init__(self) -> None:
        taps = frozenset(int(t) for t in self.taps)
        object.__setattr__(self, "taps", taps)
        if not 0 < self.register <= MASK:
            raise ValueError(f"LFSR register must be a nonzero {WIDTH}-bit value, got {self.register!r}")
        if WIDTH not in taps or not all(1 <= t <= WIDTH for t in taps):
            raise ValueError(f"taps must include {WIDTH} and lie in 1..{WIDTH}: {sorted(taps)}")
        if taps not in _VETTED and cycle_length(1, taps) != PERIOD:
            raise ValueError(f"taps {sorted(taps)} do not give a maximal-length sequence")


def next_bit(s: LfsrState) -> tuple[int, LfsrState]:
    """One Fibonacci step: returns the output bit and the successor state."""
    out = s.register & 1
    return out, LfsrState(_step(s.register, _tap_mask(s.taps)), s.taps)


def generate_bits(s: LfsrState, n: int) -> tuple[np.ndarray, LfsrState]:
    """``n`` successive output bits as a uint8 array, plus the final state."""
    tm = _tap_mask(s.taps)
    reg = s.register
    out = bytearray(n)
    top = WIDTH - 1
    for i in range(n):
        out[i] = reg & 1
        reg = (reg >> 1) | (((reg & tm).bit_count() & 1) << top)
    return np.frombuffer(bytes(out), dtype=np.uint8).copy(), LfsrState(reg, s.taps)


def make_synchronized_pair(seed: int, taps: frozenset[int] = DEFAULT_TAPS) -> tuple[LfsrState, LfsrState]:
    """Two identical generator states for lockstep use on both ends of the link."""
    if seed == 0:
        raise ValueError("seed must be nonzero")
    return LfsrState(seed, taps), LfsrState(seed, taps)
