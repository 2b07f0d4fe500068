"""Road centerline geometry built from scenario attributes.

A road is a chain of tangent-continuous segments, each either a straight
line or a circular arc.  Conventions used throughout the simulator:

* world frame: x east, y north; headings are CCW-positive from +x
* curvature is signed right-positive: kappa > 0 bends the road to the
  right (clockwise), matching the steering convention where a positive
  command turns the vehicle right
* lateral offset is signed left-positive: a vehicle left of the
  centerline has a positive offset
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Optional

from ._seeds import STREAM_ROAD, make_generator
from .domain import Scenario

LANE_WIDTH = 3.5
DEFAULT_ROAD_LENGTH = 500.0
R_MIN = 10.0  # global lower bound on admissible arc radius

# Radius and segment-length ranges for the two curved road types, meters.
CURVED_RADIUS_RANGE = (30.0, 200.0)
CURVED_SEGMENT_RANGE = (50.0, 100.0)
STEEP_RADIUS_RANGE = (30.0, 80.0)
STEEP_SEGMENT_RANGE = (40.0, 80.0)
MAX_ARC_ANGLE = 1.5  # rad, keeps individual arcs from curling back


def wrap_angle(angle: float) -> float:
    """Normalize to (-pi, pi]."""
    wrapped = math.fmod(angle + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass(frozen=True)
class Segment:
    x0: float
    y0: float
    heading: float  # tangent heading at segment start
    length: float
    curvature: float  # signed, right-positive; 0 for a line

    def point_at(self, u: float) -> tuple[float, float, float]:
        """(x, y, heading) at arc position u in [0, length]."""
        k = self.curvature
        if k == 0.0:
            return (
                self.x0 + u * math.cos(self.heading),
                self.y0 + u * math.sin(self.heading),
                self.heading,
            )
        # center sits 1/k to the right of the start heading
        r = 1.0 / k
        cx = self.x0 + r * math.sin(self.heading)
        cy = self.y0 - r * math.cos(self.heading)
        phi0 = math.atan2(self.y0 - cy, self.x0 - cx)
        phi = phi0 - k * u
        radius = abs(r)
        return (
            cx + radius * math.cos(phi),
            cy + radius * math.sin(phi),
            wrap_angle(self.heading - k * u),
        )

    def project(self, x: float, y: float) -> tuple[float, float]:
        """(u, distance) of the closest centerline point to (x, y).

        u is clamped to [0, length]; distance is unsigned.
        """
        if self.curvature == 0.0:
            tx, ty = math.cos(self.heading), math.sin(self.heading)
            u = (x - self.x0) * tx + (y - self.y0) * ty
            u = min(max(u, 0.0), self.length)
            px, py, _ = self.point_at(u)
            return u, math.hypot(x - px, y - py)
        k = self.curvature
        r = 1.0 / k
        cx = self.x0 + r * math.sin(self.heading)
        cy = self.y0 - r * math.cos(self.heading)
        phi0 = math.atan2(self.y0 - cy, self.x0 - cx)
        phi_p = math.atan2(y - cy, x - cx)
        # angle swept from the segment start to the query bearing, in the
        # direction of travel
        if k > 0.0:
            swept = (phi0 - phi_p) % (2.0 * math.pi)
        else:
            swept = (phi_p - phi0) % (2.0 * math.pi)
        u = swept / abs(k)
        u = min(max(u, 0.0), self.length)
        px, py, _ = self.point_at(u)
        return u, math.hypot(x - px, y - py)


class RoadGeometry:
    """A tangent-continuous chain of line/arc segments."""

    def __init__(self, segments: list[Segment], lane_width: float = LANE_WIDTH):
        if not segments:
            raise ValueError("road must contain at least one segment")
        for seg in segments:
            if seg.length <= 0.0:
                raise ValueError("segment lengths must be positive")
            if seg.curvature != 0.0 and abs(1.0 / seg.curvature) < R_MIN:
                raise ValueError(f"arc radius below minimum {R_MIN} m")
        # tangent continuity at joints
        for prev, nxt in zip(segments, segments[1:]):
            _, _, end_heading = prev.point_at(prev.length)
            if abs(wrap_angle(end_heading - nxt.heading)) > 1e-9:
                raise ValueError("segments are not tangent-continuous")
        self.segments = tuple(segments)
        self.lane_width = lane_width
        starts = [0.0]
        for seg in segments:
            starts.append(starts[-1] + seg.length)
        self._starts = starts
        self.total_length = starts[-1]

    def _segment_index(self, s: float) -> int:
        s = min(max(s, 0.0), self.total_length)
        idx = bisect_right(self._starts, s) - 1
        return min(idx, len(self.segments) - 1)

    def point_at(self, s: float) -> tuple[float, float, float]:
        """(x, y, tangent heading) at arc length s (clamped)."""
        s = min(max(s, 0.0), self.total_length)
        idx = self._segment_index(s)
        return self.segments[idx].point_at(s - self._starts[idx])

    def curvature_at(self, s: float) -> float:
        s = min(max(s, 0.0), self.total_length)
        idx = self._segment_index(s)
        return self.segments[idx].curvature

    def mean_curvature(self, s0: float, s1: float) -> float:
        """Length-weighted mean curvature over [s0, s1], right-positive.

        Computed from the exact tangent headings at the window ends, so a
        window straddling a segment joint blends the two curvatures in
        proportion to overlap.  Windows are expected to be short (a
        single simulation step); past the road end curvature reads 0.
        """
        s0 = min(max(s0, 0.0), self.total_length)
        s1 = min(max(s1, s0), self.total_length)
        if s1 - s0 < 1e-12:
            return self.curvature_at(s0)
        _, _, h0 = self.point_at(s0)
        _, _, h1 = self.point_at(s1)
        # tangent heading falls by the integral of right-positive curvature
        return wrap_angle(h0 - h1) / (s1 - s0)

    def project(
        self, x: float, y: float, hint: Optional[float] = None, window: float = 50.0
    ) -> tuple[float, float, float]:
        """Closest centerline point to (x, y).

        Returns (s, lateral offset, tangent heading).  Offset is signed
        left-positive.  When a hint arc length is given, segments within
        ``window`` meters of it are preferred, which keeps the projection
        from jumping between nearby passes of a winding road.
        """
        candidates = []
        for idx, seg in enumerate(self.segments):
            u, dist = seg.project(x, y)
            s = self._starts[idx] + u
            candidates.append((dist, s, idx, u))
        chosen = None
        if hint is not None:
            near = [c for c in candidates if abs(c[1] - hint) <= window]
            if near:
                chosen = min(near)
        if chosen is None:
            chosen = min(candidates)
        _, s, idx, u = chosen
        px, py, tangent = self.segments[idx].point_at(u)
        tx, ty = math.cos(tangent), math.sin(tangent)
        offset = tx * (y - py) - ty * (x - px)
        return s, offset, tangent


def _draw_uniform(rng, lo: float, hi: float) -> float:
    return lo + (hi - lo) * float(rng.random())


def build_road(scenario: Scenario) -> RoadGeometry:
    """Deterministic road geometry for a scenario.

    Straight roads are a single line.  Curved and steep-curved roads are
    chains of alternating-direction arcs whose radii and lengths are
    drawn from the scenario seed, so the same scenario always yields the
    same road.  Road length comes from a ``Road.length`` attribute when
    the domain model declares one, else 500 m.
    """
    road_type = scenario.values.get("Road.type", "Straight")
    length = float(scenario.values.get("Road.length", DEFAULT_ROAD_LENGTH))
    if road_type == "Straight":
        return RoadGeometry([Segment(0.0, 0.0, 0.0, length, 0.0)])

    if road_type == "SteepCurved":
        radius_range, segment_range = STEEP_RADIUS_RANGE, STEEP_SEGMENT_RANGE
    else:
        radius_range, segment_range = CURVED_RADIUS_RANGE, CURVED_SEGMENT_RANGE

    rng = make_generator(STREAM_ROAD, scenario.seed)
    direction = 1.0 if rng.random() < 0.5 else -1.0
    segments: list[Segment] = []
    x, y, heading = 0.0, 0.0, 0.0
    remaining = length
    while remaining > 1e-9:
        radius = _draw_uniform(rng, *radius_range)
        seg_len = min(_draw_uniform(rng, *segment_range), radius * MAX_ARC_ANGLE, remaining)
        seg = Segment(x, y, heading, seg_len, direction / radius)
        segments.append(seg)
        x, y, heading = seg.point_at(seg_len)
        remaining -= seg_len
        direction = -direction
    return RoadGeometry(segments)
