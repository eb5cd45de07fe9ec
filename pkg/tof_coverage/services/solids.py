from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Protocol, runtime_checkable

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree

from tof_coverage.errors import CoverageError
from tof_coverage.services.curves import BezierSegment, PiecewiseBezierCurve
from tof_coverage.services.geometry import Box, FloatArray, Vec3

BoolArray = NDArray[np.bool_]

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_GOLDEN_ITERATIONS = 40


@runtime_checkable
class Solid(Protocol):
    """Implicit solid defined by a point-membership predicate."""

    def contains(self, point: Vec3) -> bool: ...

    def contains_points(self, points: FloatArray) -> BoolArray: ...

    def bounding_box(self) -> Box: ...


def _disc_extent(axis: FloatArray, radius: float) -> FloatArray:
    # Half-extent of a disc of given radius with normal ``axis`` along x, y, z.
    return radius * np.sqrt(np.clip(1.0 - axis**2, 0.0, 1.0))


@dataclass(frozen=True)
class Cone:
    apex: Vec3
    axis: Vec3
    half_angle: float
    height: float

    def __post_init__(self) -> None:
        if not 0.0 < self.half_angle < math.pi / 2:
            raise CoverageError(
                code="INVALID_CONE",
                message="half_angle must lie in (0, pi/2).",
                details={"half_angle": self.half_angle},
            )
        if self.height <= 0.0:
            raise CoverageError(
                code="INVALID_CONE",
                message="height must be positive.",
                details={"height": self.height},
            )
        object.__setattr__(self, "axis", self.axis.normalized())

    @property
    def base_radius(self) -> float:
        return self.height * math.tan(self.half_angle)

    def volume(self) -> float:
        return math.pi * self.base_radius**2 * self.height / 3.0

    def contains_points(self, points: FloatArray) -> BoolArray:
        rel = np.asarray(points, dtype=float) - self.apex.as_array()
        axis = self.axis.as_array()
        axial = rel @ axis
        radial = np.linalg.norm(rel - axial[:, None] * axis, axis=1)
        inside_cone = radial <= axial * math.tan(self.half_angle)
        return (axial >= 0.0) & (axial <= self.height) & inside_cone

    def contains(self, point: Vec3) -> bool:
        return bool(self.contains_points(point.as_array()[None, :])[0])

    def bounding_box(self) -> Box:
        apex = self.apex.as_array()
        axis = self.axis.as_array()
        base = apex + self.height * axis
        extent = _disc_extent(axis, self.base_radius)
        return Box.from_arrays(
            np.minimum(apex, base - extent), np.maximum(apex, base + extent)
        )


@dataclass(frozen=True)
class Sphere:
    center: Vec3
    radius: float

    def __post_init__(self) -> None:
        if self.radius <= 0.0:
            raise CoverageError(
                code="INVALID_SPHERE",
                message="radius must be positive.",
                details={"radius": self.radius},
            )

    def volume(self) -> float:
        return 4.0 / 3.0 * math.pi * self.radius**3

    def contains_points(self, points: FloatArray) -> BoolArray:
        rel = np.asarray(points, dtype=float) - self.center.as_array()
        return np.einsum("ij,ij->i", rel, rel) <= self.radius**2

    def contains(self, point: Vec3) -> bool:
        return bool(self.contains_points(point.as_array()[None, :])[0])

    def bounding_box(self) -> Box:
        c = self.center.as_array()
        return Box.from_arrays(c - self.radius, c + self.radius)


@dataclass(frozen=True)
class TubeShell:
    """Points whose distance to ``curve`` lies in ``[r_inner, r_outer]``.

    Ends are capped flat: a point whose closest curve point is an end point and
    which lies beyond that end's normal plane is outside.
    """

    curve: PiecewiseBezierCurve
    r_inner: float
    r_outer: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.r_inner < self.r_outer:
            raise CoverageError(
                code="INVALID_TUBE_SHELL",
                message="Tube shell radii must satisfy 0 <= r_inner < r_outer.",
                details={"r_inner": self.r_inner, "r_outer": self.r_outer},
            )

    @cached_property
    def _samples(self) -> tuple[FloatArray, FloatArray, cKDTree, float]:
        points, params = self.curve.sample()
        spacing = float(np.linalg.norm(np.diff(points, axis=0), axis=1).max())
        return points, params, cKDTree(points), spacing

    @cached_property
    def _end_tangents(self) -> tuple[FloatArray, FloatArray]:
        first, last = self.curve.segments[0], self.curve.segments[-1]
        t0 = first.derivative_at(np.array([0.0]))[0]
        t1 = last.derivative_at(np.array([1.0]))[0]
        return t0 / np.linalg.norm(t0), t1 / np.linalg.norm(t1)

    def distances(self, points: FloatArray) -> tuple[FloatArray, BoolArray]:
        """Distance from each point to the curve, plus a beyond-end-cap mask."""
        points = np.asarray(points, dtype=float)
        samples, params, tree, spacing = self._samples
        dist, idx = tree.query(points, distance_upper_bound=self.r_outer + spacing)
        dist = np.asarray(dist, dtype=float)
        idx = np.asarray(idx)
        found = np.isfinite(dist)
        last = len(samples) - 1

        band = found & (np.abs(dist - self.r_outer) <= spacing)
        if self.r_inner > 0.0:
            band |= found & (np.abs(dist - self.r_inner) <= spacing)
        if np.any(band):
            dist[band] = self._refine(points[band], params, idx[band], dist[band])

        beyond = np.zeros(len(points), dtype=bool)
        t0, t1 = self._end_tangents
        at_start = found & (idx == 0)
        at_end = found & (idx == last)
        if np.any(at_start):
            rel = points[at_start] - samples[0]
            beyond[at_start] = rel @ t0 < -1e-12
        if np.any(at_end):
            rel = points[at_end] - samples[last]
            beyond[at_end] = rel @ t1 > 1e-12
        return dist, beyond

    def curve_distances(self, points: FloatArray) -> FloatArray:
        """Refined distance from every point to the curve, regardless of the radii."""
        points = np.asarray(points, dtype=float)
        _, params, tree, _ = self._samples
        dist, idx = tree.query(points)
        return self._refine(points, params, np.asarray(idx), np.asarray(dist, dtype=float))

    def _refine(
        self, points: FloatArray, params: FloatArray, idx: NDArray[np.intp], coarse: FloatArray
    ) -> FloatArray:
        # Golden-section search on the closest sample +/- one sample window.
        last = len(params) - 1
        a = params[np.maximum(idx - 1, 0)]
        b = params[np.minimum(idx + 1, last)]

        def sq_dist(s: FloatArray) -> FloatArray:
            diff = self.curve.points_at_arclength(s) - points
            return np.einsum("ij,ij->i", diff, diff)

        c = b - _GOLDEN * (b - a)
        d = a + _GOLDEN * (b - a)
        fc, fd = sq_dist(c), sq_dist(d)
        for _ in range(_GOLDEN_ITERATIONS):
            left = fc < fd
            a = np.where(left, a, c)
            b = np.where(left, d, b)
            keep_x = np.where(left, c, d)
            keep_f = np.where(left, fc, fd)
            probe = np.where(left, b - _GOLDEN * (b - a), a + _GOLDEN * (b - a))
            fprobe = sq_dist(probe)
            c = np.where(left, probe, keep_x)
            fc = np.where(left, fprobe, keep_f)
            d = np.where(left, keep_x, probe)
            fd = np.where(left, keep_f, fprobe)
        best = np.minimum(np.minimum(fc, fd), coarse**2)
        return np.sqrt(best)

    def contains_points(self, points: FloatArray) -> BoolArray:
        dist, beyond = self.distances(points)
        return (dist >= self.r_inner) & (dist <= self.r_outer) & ~beyond

    def contains(self, point: Vec3) -> bool:
        return bool(self.contains_points(point.as_array()[None, :])[0])

    def bounding_box(self) -> Box:
        hull: list[FloatArray] = []
        for seg in self.curve.segments:
            hull.append(seg.start.as_array())
            hull.append(seg.end.as_array())
            if isinstance(seg, BezierSegment):
                hull.append(seg.control.as_array())
        stacked = np.vstack(hull)
        pad = self.r_outer
        return Box.from_arrays(stacked.min(axis=0) - pad, stacked.max(axis=0) + pad)


@dataclass(frozen=True)
class DiscSlab:
    """Annular disc extruded ``back``/``forward`` along its normal."""

    center: Vec3
    normal: Vec3
    radius: float
    inner_radius: float = 0.0
    back: float = 0.0
    forward: float = 0.0

    def contains_points(self, points: FloatArray) -> BoolArray:
        rel = np.asarray(points, dtype=float) - self.center.as_array()
        normal = self.normal.as_array()
        axial = rel @ normal
        radial = np.linalg.norm(rel - axial[:, None] * normal, axis=1)
        return (
            (axial >= -self.back)
            & (axial <= self.forward)
            & (radial <= self.radius)
            & (radial >= self.inner_radius)
        )

    def contains(self, point: Vec3) -> bool:
        return bool(self.contains_points(point.as_array()[None, :])[0])

    def bounding_box(self) -> Box:
        normal = self.normal.as_array()
        c = self.center.as_array()
        ends = np.vstack([c - self.back * normal, c + self.forward * normal])
        extent = _disc_extent(normal, self.radius)
        return Box.from_arrays(ends.min(axis=0) - extent, ends.max(axis=0) + extent)


@dataclass(frozen=True)
class Union:
    members: tuple[Solid, ...]

    def __post_init__(self) -> None:
        if not self.members:
            raise CoverageError(
                code="EMPTY_UNION",
                message="A union needs at least one member solid.",
            )

    def contains_points(self, points: FloatArray) -> BoolArray:
        points = np.asarray(points, dtype=float)
        inside = np.zeros(len(points), dtype=bool)
        for member in self.members:
            candidates = ~inside & member.bounding_box().contains_points(points)
            if np.any(candidates):
                inside[candidates] = member.contains_points(points[candidates])
        return inside

    def contains(self, point: Vec3) -> bool:
        return bool(self.contains_points(point.as_array()[None, :])[0])

    def bounding_box(self) -> Box:
        box = self.members[0].bounding_box()
        for member in self.members[1:]:
            box = box.union(member.bounding_box())
        return box


def solid_contains(solid: Solid, point: Vec3) -> bool:
    return solid.contains(point)
