"""
1+1 dimensional Minkowski bookkeeping for the line-of-sight link.

Bob sits at position 0, Alice at ``distance``. Signals in the channel travel
at ``C_VACUUM / group_index``; causality is always judged against the
vacuum speed of light.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from relqkd.errors import ConfigError

__all__ = [
    "C_VACUUM",
    "Event",
    "ChannelGeometry",
    "causally_precedes",
    "one_way_time",
    "round_trip_time",
    "required_spreading",
    "validate_geometry",
]

C_VACUUM = 299_792_458.0  # m/s, exact by definition of the metre


@dataclass(frozen=True)
class Event:
    position: float  # m
    time: float  # s

    def __post_init__(self) -> None:
        if not (math.isfinite(self.position) and math.isfinite(self.time)):
            raise ValueError(f"event coordinates must be finite: {self!r}")


@dataclass(frozen=True)
class ChannelGeometry:
    """Space-time contract of the link. All times in seconds, lengths in metres."""

    distance: float = 55.0
    group_index: float = 1.0003
    pulse_separation: float = 22e-9
    detection_window: float = 4e-9
    clock_period: float = 4e-6
    late_offset: float = 2e-6
    processing_delay: float = 0.0

    def check(self) -> None:
        """Raise :class:`ConfigError` listing every violated constraint."""
        violations = validate_geometry(self)
        if violations:
            raise ConfigError("; ".join(violations))


def causally_precedes(a: Event, b: Event) -> bool:
    """True iff a light signal emitted at ``a`` can reach ``b``."""
    return (b.time - a.time) >= abs(b.position - a.position) / C_VACUUM


def one_way_time(g: ChannelGeometry, length: float | None = None) -> float:
    """Group delay over ``length`` metres of channel (default: the full link)."""
    if length is None:
        length = g.distance
    return length * g.group_index / C_VACUUM


def round_trip_time(g: ChannelGeometry) -> float:
    """Scheduled detection delay ``T`` of the reference pulse after emission."""
    return 2.0 * g.distance * g.group_index / C_VACUUM + g.processing_delay


def required_spreading(g: ChannelGeometry) -> float:
    """Excess round-trip delay of the air path over vacuum."""
    return 2.0 * g.distance * (g.group_index - 1.0) / C_VACUUM


def validate_geometry(g: ChannelGeometry) -> list[str]:
    """Return the names of all violated constraints; an empty list means ok."""
    out: list[str] = []
    values = (
        g.distance,
        g.group_index,
        g.pulse_separation,
        g.detection_window,
        g.clock_period,
        g.late_offset,
        g.processing_delay,
    )
    if not all(math.isfinite(v) for v in values):
        return ["non-finite geometry value"]
    if g.distance <= 0:
        out.append("distance must be positive")
    if g.group_index < 1.0:
        out.append("group index below 1")
    if g.detection_window <= 0:
        out.append("detection window must be positive")
    if g.detection_window >= g.pulse_separation:
        out.append("window ≥ pulse separation")
    if g.pulse_separation >= g.clock_period:
        out.append("pulse separation ≥ clock period")
    if not (0 < g.late_offset < g.clock_period):
        out.append("late offset outside (0, clock period)")
    if g.processing_delay < 0:
        out.append("negative processing delay")
    if g.group_index >= 1.0 and required_spreading(g) >= g.pulse_separation:
        out.append("insufficient spreading")
    return out
