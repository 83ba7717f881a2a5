"""Intersection layout: two perpendicular roads with one lane per direction.

Every lane has a scalar coordinate along its travel direction. The
intersection center is 0 and the pre-danger entry is -l_p.
"""
from typing import Optional, Tuple

import numpy as np

from intersim.utils import dataclass

from .exceptions import ValidationError


@dataclass
class Lane:
    name: str
    axis: int  # 0 = x, 1 = y
    sign: int  # +1 travels towards increasing coordinate
    offset: float  # lateral coordinate of the centerline

    def to_scalar(self, vector) -> Tuple[float, float]:
        "(position, speed) along the lane for a 4-vector state"
        return self.sign * float(vector[self.axis]), self.sign * float(vector[2 + self.axis])

    def to_vector(self, position: float, speed: float):
        vec = np.zeros(4)
        vec[self.axis] = self.sign * position
        vec[1 - self.axis] = self.offset
        vec[2 + self.axis] = self.sign * speed
        return vec

    def world(self, position: float):
        return self.to_vector(position, 0.0)[:2]

    def embed_control(self, acceleration: float):
        u = np.zeros(2)
        u[self.axis] = self.sign * acceleration
        return u

    def crosses(self, other: 'Lane') -> bool:
        return self.axis != other.axis


def default_lanes(lane_width: float):
    half = lane_width / 2
    return (
        Lane('east', 0, 1, -half),
        Lane('west', 0, -1, half),
        Lane('north', 1, 1, half),
        Lane('south', 1, -1, -half),
    )


@dataclass
class IntersectionGeometry:
    pre_danger_radius: float = 300.0
    danger_radius: float = 150.0
    lane_width: float = 4.0
    half_length: float = 2.0
    safety_gap: float = 4.0
    lanes: tuple = None

    def __post_init__(self):
        if self.lanes is None:
            object.__setattr__(self, 'lanes', default_lanes(self.lane_width))

    @property
    def d_min(self) -> float:
        "Minimum barycenter distance between two CAVs (f_v + f_j + s)"
        return 2 * self.half_length + self.safety_gap

    def lane(self, name: str) -> Lane:
        for lane in self.lanes:
            if lane.name == name:
                return lane
        raise ValidationError.make(f"unknown lane {name!r}")

    def collision_area(self, on: Lane, other: Lane) -> Optional[Tuple[float, float]]:
        """Interval of `on`'s coordinate covered by `other`'s width, inflated by the half length.

        None when the lanes never cross.
        """
        if not on.crosses(other):
            return None
        half = self.lane_width / 2
        edges = sorted([on.sign * (other.offset - half), on.sign * (other.offset + half)])
        return edges[0] - self.half_length, edges[1] + self.half_length

    def zone(self, position: float) -> str:
        if position < -self.danger_radius:
            return 'pre_danger'
        if position <= self.danger_radius:
            return 'danger'
        return 'exit'

    def validate(self):
        if not 0 < self.danger_radius < self.pre_danger_radius:
            raise ValidationError.make(
                f"danger radius ({self.danger_radius}) must be positive and below the pre-danger radius ({self.pre_danger_radius})"
            )
        for name in ('lane_width', 'half_length'):
            if not getattr(self, name) > 0:
                raise ValidationError.make(f"{name} must be positive")
        if self.safety_gap < 0:
            raise ValidationError.make("safety_gap must be non-negative")
        for a in self.lanes:
            for b in self.lanes:
                area = self.collision_area(a, b)
                if area and not (-self.danger_radius < area[0] and area[1] < self.danger_radius):
                    raise ValidationError.make(
                        f"collision area of {a.name}/{b.name} {area} is not inside the danger zone"
                    )
