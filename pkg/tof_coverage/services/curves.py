from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from tof_coverage.errors import CoverageError
from tof_coverage.services.geometry import FloatArray, Vec3, perpendicular_unit

DEFAULT_INTERPOLATION_FACTOR = 0.25
DEFAULT_SAMPLES_PER_SEGMENT = 64
COLLINEAR_TOL_DEG = 0.5
MIN_POINT_SEPARATION = 1e-9


@dataclass(frozen=True)
class StraightSegment:
    start: Vec3
    end: Vec3

    def points_at(self, u: FloatArray) -> FloatArray:
        a, b = self.start.as_array(), self.end.as_array()
        u = np.asarray(u, dtype=float)[..., None]
        return a + u * (b - a)

    def derivative_at(self, u: FloatArray) -> FloatArray:
        u = np.asarray(u, dtype=float)
        return np.broadcast_to(
            (self.end - self.start).as_array(), u.shape + (3,)
        ).copy()

    def second_derivative_at(self, u: FloatArray) -> FloatArray:
        return np.zeros(np.asarray(u).shape + (3,))

    def length(self, samples: int) -> float:
        return self.start.distance_to(self.end)


@dataclass(frozen=True)
class BezierSegment:
    """Quadratic Bezier blend ``(1-u)^2 a + 2u(1-u) c + u^2 b``."""

    start: Vec3
    control: Vec3
    end: Vec3

    def points_at(self, u: FloatArray) -> FloatArray:
        a, c, b = self.start.as_array(), self.control.as_array(), self.end.as_array()
        u = np.asarray(u, dtype=float)[..., None]
        return (1 - u) ** 2 * a + 2 * u * (1 - u) * c + u**2 * b

    def derivative_at(self, u: FloatArray) -> FloatArray:
        a, c, b = self.start.as_array(), self.control.as_array(), self.end.as_array()
        u = np.asarray(u, dtype=float)[..., None]
        return 2 * (1 - u) * (c - a) + 2 * u * (b - c)

    def second_derivative_at(self, u: FloatArray) -> FloatArray:
        a, c, b = self.start.as_array(), self.control.as_array(), self.end.as_array()
        u = np.asarray(u, dtype=float)
        return np.broadcast_to(2 * (a - 2 * c + b), u.shape + (3,)).copy()

    def length(self, samples: int) -> float:
        pts = self.points_at(np.linspace(0.0, 1.0, samples + 1))
        return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())

    def chord_table(self, samples: int) -> tuple[FloatArray, FloatArray]:
        """Cumulative chord length against ``u`` for arclength reparameterization."""
        u = np.linspace(0.0, 1.0, samples + 1)
        pts = self.points_at(u)
        chords = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        cumulative = np.concatenate([[0.0], np.cumsum(chords)])
        return u, cumulative


Segment = StraightSegment | BezierSegment


@dataclass(frozen=True)
class FrenetFrame:
    tangent: Vec3
    normal: Vec3


@dataclass(frozen=True)
class PiecewiseBezierCurve:
    """Robot pose centerline through the link endpoints.

    Interior corners are blended with quadratic Bezier segments unless the three
    points are collinear within ``COLLINEAR_TOL_DEG``.
    """

    control_points: tuple[Vec3, ...]
    segments: tuple[Segment, ...]
    interpolation_factor: float = DEFAULT_INTERPOLATION_FACTOR
    samples_per_segment: int = DEFAULT_SAMPLES_PER_SEGMENT

    @cached_property
    def segment_lengths(self) -> FloatArray:
        return np.array([seg.length(self.samples_per_segment) for seg in self.segments])

    @cached_property
    def cumulative_lengths(self) -> FloatArray:
        return np.concatenate([[0.0], np.cumsum(self.segment_lengths)])

    @property
    def total_length(self) -> float:
        return float(self.cumulative_lengths[-1])

    @property
    def bezier_count(self) -> int:
        return sum(isinstance(seg, BezierSegment) for seg in self.segments)

    @property
    def start(self) -> Vec3:
        return self.segments[0].start

    @property
    def end(self) -> Vec3:
        return self.segments[-1].end

    def _locate(self, s: FloatArray) -> tuple[FloatArray, FloatArray]:
        """Map global arclength ``s`` to (segment index, local parameter u)."""
        s = np.clip(np.asarray(s, dtype=float), 0.0, self.total_length)
        cumulative = self.cumulative_lengths
        index = np.clip(np.searchsorted(cumulative, s, side="right") - 1, 0, len(self.segments) - 1)
        local_s = s - cumulative[index]
        u = np.zeros_like(s)
        for seg_idx, seg in enumerate(self.segments):
            mask = index == seg_idx
            if not np.any(mask):
                continue
            seg_len = self.segment_lengths[seg_idx]
            if isinstance(seg, BezierSegment):
                table_u, table_s = seg.chord_table(self.samples_per_segment)
                u[mask] = np.interp(local_s[mask], table_s, table_u)
            else:
                u[mask] = local_s[mask] / seg_len
        return index, u

    def points_at_arclength(self, s: FloatArray) -> FloatArray:
        s = np.asarray(s, dtype=float)
        index, u = self._locate(s.ravel())
        out = np.empty((u.size, 3))
        for seg_idx, seg in enumerate(self.segments):
            mask = index == seg_idx
            if np.any(mask):
                out[mask] = seg.points_at(u[mask])
        return out.reshape(s.shape + (3,))

    def point_at(self, t: float) -> Vec3:
        return Vec3.of(self.points_at_arclength(np.array([t * self.total_length]))[0])

    def sample(self) -> tuple[FloatArray, FloatArray]:
        """Dense polyline: ``samples_per_segment`` chords per segment.

        Returns (points, arclength parameter of each point).
        """
        points: list[FloatArray] = []
        params: list[FloatArray] = []
        for seg_idx, seg in enumerate(self.segments):
            u = np.linspace(0.0, 1.0, self.samples_per_segment + 1)
            if seg_idx > 0:
                u = u[1:]
            seg_points = seg.points_at(u)
            if isinstance(seg, BezierSegment):
                table_u, table_s = seg.chord_table(self.samples_per_segment)
                local = np.interp(u, table_u, table_s)
            else:
                local = u * self.segment_lengths[seg_idx]
            points.append(seg_points)
            params.append(self.cumulative_lengths[seg_idx] + local)
        return np.vstack(points), np.concatenate(params)

    def min_curvature_radius(self) -> float:
        """Smallest radius of curvature over the Bezier blends (inf if none)."""
        radius = math.inf
        u = np.linspace(0.0, 1.0, self.samples_per_segment + 1)
        for seg in self.segments:
            if not isinstance(seg, BezierSegment):
                continue
            d1 = seg.derivative_at(u)
            d2 = seg.second_derivative_at(u)
            speed = np.linalg.norm(d1, axis=1)
            kappa = np.linalg.norm(np.cross(d1, d2), axis=1) / np.maximum(speed, 1e-300) ** 3
            peak = float(kappa.max())
            if peak > 0:
                radius = min(radius, 1.0 / peak)
        return radius


def _validate_points(points: list[Vec3], interpolation_factor: float, samples: int) -> None:
    if len(points) < 2:
        raise CoverageError(
            code="TOO_FEW_POINTS",
            message="A pose curve needs at least 2 points.",
            details={"count": len(points)},
        )
    for idx in range(1, len(points)):
        if points[idx].distance_to(points[idx - 1]) <= MIN_POINT_SEPARATION:
            raise CoverageError(
                code="DUPLICATE_POINTS",
                message=f"Consecutive points {idx - 1} and {idx} coincide.",
                details={"index": idx},
            )
    if not 0.0 < interpolation_factor <= 0.5:
        raise CoverageError(
            code="INVALID_INTERPOLATION_FACTOR",
            message="interpolation_factor must lie in (0, 0.5].",
            details={"interpolation_factor": interpolation_factor},
        )
    if samples < 1:
        raise CoverageError(
            code="INVALID_SAMPLE_COUNT",
            message="samples_per_segment must be positive.",
            details={"samples_per_segment": samples},
        )


def is_collinear(prev: Vec3, corner: Vec3, nxt: Vec3, tol_deg: float = COLLINEAR_TOL_DEG) -> bool:
    incoming = (corner - prev).normalized()
    outgoing = (nxt - corner).normalized()
    cos_angle = max(-1.0, min(1.0, incoming.dot(outgoing)))
    return math.degrees(math.acos(cos_angle)) < tol_deg


def build_piecewise_bezier(
    points: list[Vec3],
    interpolation_factor: float = DEFAULT_INTERPOLATION_FACTOR,
    samples_per_segment: int = DEFAULT_SAMPLES_PER_SEGMENT,
) -> PiecewiseBezierCurve:
    points = list(points)
    _validate_points(points, interpolation_factor, samples_per_segment)

    segments: list[Segment] = []
    cursor = points[0]
    for k in range(1, len(points) - 1):
        prev, corner, nxt = points[k - 1], points[k], points[k + 1]
        if is_collinear(prev, corner, nxt):
            segments.append(StraightSegment(cursor, corner))
            cursor = corner
            continue
        blend_start = corner - (corner - prev) * interpolation_factor
        blend_end = corner + (nxt - corner) * interpolation_factor
        if cursor.distance_to(blend_start) > MIN_POINT_SEPARATION:
            segments.append(StraightSegment(cursor, blend_start))
        segments.append(BezierSegment(blend_start, corner, blend_end))
        cursor = blend_end
    if cursor.distance_to(points[-1]) > MIN_POINT_SEPARATION:
        segments.append(StraightSegment(cursor, points[-1]))
    return PiecewiseBezierCurve(
        control_points=tuple(points),
        segments=tuple(segments),
        interpolation_factor=interpolation_factor,
        samples_per_segment=samples_per_segment,
    )


def arclength(curve: PiecewiseBezierCurve) -> float:
    return curve.total_length


def frenet_frame(curve: PiecewiseBezierCurve, t: float) -> FrenetFrame:
    """Unit tangent and principal normal at normalized arclength ``t``.

    Straight pieces have no principal normal; they get the deterministic
    ``perpendicular_unit`` of the tangent.
    """
    if not 0.0 <= t <= 1.0:
        raise CoverageError(
            code="INVALID_CURVE_PARAMETER",
            message="t must lie in [0, 1].",
            details={"t": t},
        )
    index, u = curve._locate(np.array([t * curve.total_length]))
    seg = curve.segments[int(index[0])]
    d1 = seg.derivative_at(u)[0]
    d2 = seg.second_derivative_at(u)[0]
    tangent = d1 / np.linalg.norm(d1)
    perp = d2 - np.dot(d2, tangent) * tangent
    if np.linalg.norm(perp) < 1e-12:
        normal = perpendicular_unit(Vec3.of(tangent)).as_array()
    else:
        normal = perp / np.linalg.norm(perp)
    # One Gram-Schmidt pass keeps the pair orthogonal to rounding.
    normal = normal - np.dot(normal, tangent) * tangent
    normal = normal / np.linalg.norm(normal)
    return FrenetFrame(tangent=Vec3.of(tangent), normal=Vec3.of(normal))
