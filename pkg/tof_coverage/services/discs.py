from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from tof_coverage.errors import CoverageError
from tof_coverage.services.curves import frenet_frame
from tof_coverage.services.geometry import Vec3
from tof_coverage.services.octree import Octree, VoxelDomain, voxelize
from tof_coverage.services.solids import Cone, DiscSlab, Solid, Sphere, TubeShell, Union


@dataclass(frozen=True)
class Disc:
    """Cross-section of a solid at one station; annulus when ``inner_radius`` > 0."""

    center: Vec3
    normal: Vec3
    radius: float
    inner_radius: float = 0.0


def _station_count(length: float, spacing: float) -> int:
    return int(math.ceil(length / spacing - 1e-9)) + 1


def disc_decimate(solid: Solid, spacing: float) -> list[Disc]:
    if spacing <= 0.0:
        raise CoverageError(
            code="INVALID_SPACING",
            message="Disc spacing must be positive.",
            details={"spacing": spacing},
        )
    if isinstance(solid, Cone):
        stations = np.linspace(0.0, solid.height, _station_count(solid.height, spacing))
        tan = math.tan(solid.half_angle)
        return [
            Disc(solid.apex + solid.axis * float(s), solid.axis, float(s) * tan)
            for s in stations
        ]
    if isinstance(solid, Sphere):
        diameter = 2.0 * solid.radius
        stations = np.linspace(-solid.radius, solid.radius, _station_count(diameter, spacing))
        axis = Vec3(0.0, 0.0, 1.0)
        return [
            Disc(
                solid.center + axis * float(s),
                axis,
                math.sqrt(max(solid.radius**2 - float(s) ** 2, 0.0)),
            )
            for s in stations
        ]
    if isinstance(solid, TubeShell):
        length = solid.curve.total_length
        discs = []
        for s in np.linspace(0.0, length, _station_count(length, spacing)):
            t = float(s) / length
            discs.append(
                Disc(
                    solid.curve.point_at(t),
                    frenet_frame(solid.curve, t).tangent,
                    solid.r_outer,
                    solid.r_inner,
                )
            )
        return discs
    raise CoverageError(
        code="UNSUPPORTED_SOLID",
        message=f"Disc decimation does not support {type(solid).__name__}.",
        details={"supported": ["Cone", "Sphere", "TubeShell"]},
    )


def disc_stack(discs: list[Disc]) -> Union:
    """Slabs reaching halfway to each neighbouring station; ends are flush."""
    if not discs:
        raise CoverageError(code="EMPTY_DISC_STACK", message="No discs to stack.")
    centers = [disc.center for disc in discs]
    gaps = [centers[i].distance_to(centers[i + 1]) / 2.0 for i in range(len(centers) - 1)]
    slabs = []
    for idx, disc in enumerate(discs):
        back = gaps[idx - 1] if idx > 0 else 0.0
        forward = gaps[idx] if idx < len(gaps) else 0.0
        slabs.append(
            DiscSlab(disc.center, disc.normal, disc.radius, disc.inner_radius, back, forward)
        )
    return Union(tuple(slabs))


def voxelize_discs(discs: list[Disc], domain: VoxelDomain) -> Octree:
    return voxelize(disc_stack(discs), domain)
