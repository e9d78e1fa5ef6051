"""Deployment geometry and ground-truth parameters for RSSI localization runs.

A :class:`Scenario` bundles the warehouse rectangle, the fixed anchor
(access-point) positions, the true target position, and the true radio
channel parameters used by the measurement simulator. All types are
immutable value objects and safe to share across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class Position:
    """A point in the plane, in meters."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"position coordinates must be finite, got ({self.x}, {self.y})")


@dataclass(frozen=True)
class Anchor:
    """A fixed radio node at a known position."""

    id: int
    position: Position

    def __post_init__(self) -> None:
        if self.id < 0:
            raise ValueError(f"anchor id must be non-negative, got {self.id}")


@dataclass(frozen=True)
class ChannelParams:
    """Log-distance path-loss channel parameters.

    ``rho0`` is the received power (dBm) at the 1 m reference distance,
    ``eta`` the positive decay magnitude in dB per decade of distance, and
    ``sigma_shadow`` the shadowing standard deviation in dB.
    """

    rho0: float = -40.0
    eta: float = 30.0
    sigma_shadow: float = 2.0

    def __post_init__(self) -> None:
        if self.sigma_shadow < 0:
            raise ValueError(f"sigma_shadow must be >= 0, got {self.sigma_shadow}")
        if self.eta <= 0:
            raise ValueError(f"eta must be > 0 (stored as a positive decay magnitude), got {self.eta}")


@dataclass(frozen=True)
class Scenario:
    """Rectangular deployment with anchors, a true target, and true channel."""

    length: float
    width: float
    anchors: tuple[Anchor, ...]
    target: Position
    channel: ChannelParams = field(default_factory=ChannelParams)

    def __post_init__(self) -> None:
        if self.length <= 0 or self.width <= 0:
            raise ValueError(f"rectangle sides must be positive, got {self.length} x {self.width}")
        if len(self.anchors) < 3:
            raise ValueError(f"need at least 3 anchors to estimate a position, got {len(self.anchors)}")
        ids = [a.id for a in self.anchors]
        if len(set(ids)) != len(ids):
            raise ValueError(f"anchor ids must be unique, got {ids}")
        if not (0 <= self.target.x <= self.length and 0 <= self.target.y <= self.width):
            raise ValueError(
                f"target {self.target} lies outside [0, {self.length}] x [0, {self.width}]"
            )
        object.__setattr__(self, "anchors", tuple(self.anchors))

    @property
    def anchor_ids(self) -> tuple[int, ...]:
        return tuple(a.id for a in self.anchors)


def distance(target: Position, anchor: Anchor | Position) -> float:
    """Euclidean distance in meters between a position and an anchor (or position)."""
    other = anchor.position if isinstance(anchor, Anchor) else anchor
    return math.hypot(target.x - other.x, target.y - other.y)


def default_scenario(
    target: Position | None = None,
    channel: ChannelParams | None = None,
) -> Scenario:
    """100 m square with one anchor in each corner.

    The target defaults to (25, 25), an interior point asymmetric with
    respect to every anchor; channel defaults are typical indoor
    line-of-sight values. Both are overridable.
    """
    side = 100.0
    corners = [(0.0, 0.0), (side, 0.0), (0.0, side), (side, side)]
    anchors = tuple(Anchor(i, Position(cx, cy)) for i, (cx, cy) in enumerate(corners))
    return Scenario(
        length=side,
        width=side,
        anchors=anchors,
        target=target if target is not None else Position(25.0, 25.0),
        channel=channel if channel is not None else ChannelParams(),
    )
