"""Intersection layout, lane routes and collision-area resolution.

The crossing box is a 2x2 grid of square cells centred on ``x_s``.  Arms are
numbered counter-clockwise (1 = south, 2 = east, 3 = north, 4 = west) and
traffic keeps right.  Cell ``S<k>`` is the corner between arm ``k`` and arm
``k+1``::

        arm 3 (N)
      +----+----+
      | S3 | S2 |
arm 4 +----+----+ arm 2
      | S4 | S1 |
      +----+----+
        arm 1 (S)

A car arriving on ``H<j>R`` drives in the half of the box next to corner
``S<j>``.  Leaving on arm ``j+1`` is a right turn, ``j+2`` straight and
``j+3`` a left turn.  Every path is projected onto a 1D longitudinal
coordinate that enters the box at ``x_s - w`` and advances one cell width
``w`` per cell crossed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

SUBSECTIONS = ("S1", "S2", "S3", "S4")

# unit vectors pointing from the centre out along each arm
_ARM_DIRECTION = {1: (0.0, -1.0), 2: (1.0, 0.0), 3: (0.0, 1.0), 4: (-1.0, 0.0)}


class GeometryError(ValueError):
    """Invalid route or geometry query."""


class Lane(str, Enum):
    H1R = "H1R"
    H2R = "H2R"
    H3R = "H3R"
    H4R = "H4R"
    H1L = "H1L"
    H2L = "H2L"
    H3L = "H3L"
    H4L = "H4L"

    @property
    def arm(self) -> int:
        return int(self.value[1])

    @property
    def incoming(self) -> bool:
        return self.value[2] == "R"


class Turn(str, Enum):
    RIGHT = "right"
    STRAIGHT = "straight"
    LEFT = "left"


def _wrap(arm: int) -> int:
    return (arm - 1) % 4 + 1


@dataclass(frozen=True)
class Route:
    """Incoming lane ``clane`` (H?R) and outgoing lane ``nlane`` (H?L)."""

    clane: Lane
    nlane: Lane

    def __post_init__(self):
        clane, nlane = Lane(self.clane), Lane(self.nlane)
        object.__setattr__(self, "clane", clane)
        object.__setattr__(self, "nlane", nlane)
        if not clane.incoming:
            raise GeometryError(f"clane must be an incoming lane H?R, got {clane.value}")
        if nlane.incoming:
            raise GeometryError(f"nlane must be an outgoing lane H?L, got {nlane.value}")
        if nlane.arm == clane.arm:
            raise GeometryError(f"U-turn {clane.value}->{nlane.value} is not a valid route")

    @classmethod
    def from_turn(cls, approach: int, turn: Turn | str) -> "Route":
        offset = {Turn.RIGHT: 1, Turn.STRAIGHT: 2, Turn.LEFT: 3}[Turn(turn)]
        return cls(Lane(f"H{approach}R"), Lane(f"H{_wrap(approach + offset)}L"))

    @property
    def turn(self) -> Turn:
        delta = (self.nlane.arm - self.clane.arm) % 4
        return {1: Turn.RIGHT, 2: Turn.STRAIGHT, 3: Turn.LEFT}[delta]

    def __str__(self) -> str:
        return f"{self.clane.value}->{self.nlane.value}"


ALL_ROUTES = tuple(
    Route.from_turn(j, t) for j in (1, 2, 3, 4) for t in (Turn.RIGHT, Turn.STRAIGHT, Turn.LEFT)
)


def subsections_of(route: Route) -> tuple[str, ...]:
    """Cells swept by ``route`` in driving order (1, 2 or 3 cells)."""
    j = route.clane.arm
    n = {Turn.RIGHT: 1, Turn.STRAIGHT: 2, Turn.LEFT: 3}[route.turn]
    return tuple(f"S{_wrap(j + i)}" for i in range(n))


def collision_area(route1: Route, route2: Route) -> frozenset[str]:
    return frozenset(subsections_of(route1)) & frozenset(subsections_of(route2))


@dataclass(frozen=True)
class IntersectionGeometry:
    x_s: float = 600.0
    subsection_width: float = 3.5
    lane_width: float = 3.5
    car_length: float = 4.5
    max_brake: float = 6.0

    def __post_init__(self):
        for name in ("subsection_width", "lane_width", "max_brake"):
            if not getattr(self, name) > 0:
                raise GeometryError(f"{name} must be positive")
        if self.car_length < 0:
            raise GeometryError("car_length must be non-negative")

    @property
    def box_entry(self) -> float:
        """Longitudinal coordinate at which every route enters the box."""
        return self.x_s - self.subsection_width

    def cell_span(self, route: Route, cell: str) -> tuple[float, float]:
        cells = subsections_of(route)
        if cell not in cells:
            raise GeometryError(f"{cell} is not on route {route}")
        i = cells.index(cell)
        start = self.box_entry + i * self.subsection_width
        return start, start + self.subsection_width

    def route_end(self, route: Route) -> float:
        """Far edge of the last cell on the route."""
        return self.box_entry + len(subsections_of(route)) * self.subsection_width

    def exit_boundary(self, route: Route) -> float:
        # front-bumper coordinate at which the whole car has left the box
        return self.route_end(route) + self.car_length

    def capture_start(self, v: float) -> float:
        return self.box_entry - v * v / (2.0 * self.max_brake)

    def capture_area(self, v: float) -> tuple[float, float]:
        return self.capture_start(v), self.x_s

    def position_2d(self, route: Route, x: float) -> tuple[float, float]:
        """Approximate planar position of a car at longitudinal coordinate ``x``.

        Only used for inter-car distance; the path inside the box is taken as
        the straight segment between the entry and exit points.
        """
        w = self.subsection_width
        ux, uy = _ARM_DIRECTION[route.clane.arm]
        ex, ey = _ARM_DIRECTION[route.nlane.arm]
        entry = self.box_entry
        end = self.route_end(route)
        if x <= entry:
            r = self.x_s - x
            return ux * r, uy * r
        if x >= end:
            r = w + (x - end)
            return ex * r, ey * r
        s = (x - entry) / (end - entry)
        return (1 - s) * ux * w + s * ex * w, (1 - s) * uy * w + s * ey * w

    def distance(self, route1: Route, x1: float, route2: Route, x2: float) -> float:
        a = self.position_2d(route1, x1)
        b = self.position_2d(route2, x2)
        return math.hypot(a[0] - b[0], a[1] - b[1])


def col_entrance(col, route: Route, geom: IntersectionGeometry) -> float:
    """Smallest coordinate along ``route`` at which the car enters a cell of ``col``."""
    col = set(col)
    if not col:
        raise GeometryError("collision area is empty; branch on COL == {} first")
    cells = subsections_of(route)
    idx = [i for i, c in enumerate(cells) if c in col]
    if not idx:
        raise GeometryError(f"no cell of {sorted(col)} lies on route {route}")
    return geom.box_entry + min(idx) * geom.subsection_width
