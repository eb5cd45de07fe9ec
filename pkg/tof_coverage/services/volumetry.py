from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from typing import Any

from tof_coverage.errors import CoverageError
from tof_coverage.services.coverage import pappus_shell_volume
from tof_coverage.services.curves import build_piecewise_bezier
from tof_coverage.services.geometry import Vec3
from tof_coverage.services.octree import voxel_volume_of
from tof_coverage.services.solids import Cone, Solid, Sphere, TubeShell

logger = logging.getLogger(__name__)

SHAPES = ("cone", "sphere", "tube")


def build_solid(
    shape: str,
    *,
    height: float = 1.5,
    fov_deg: float = 25.0,
    radius: float = 1.0,
    r_inner: float = 0.0,
    points: Sequence[Sequence[float]] | None = None,
) -> tuple[Solid, float]:
    """A single solid plus its analytic volume.

    ``fov_deg`` is the full cone angle. Tubes run along ``points`` (default: a
    1 m straight segment along z) with radii ``[r_inner, radius]``.
    """
    if shape == "cone":
        cone = Cone(Vec3.zero(), Vec3(0.0, 0.0, 1.0), math.radians(fov_deg) / 2.0, height)
        return cone, cone.volume()
    if shape == "sphere":
        sphere = Sphere(Vec3.zero(), radius)
        return sphere, sphere.volume()
    if shape == "tube":
        path = [Vec3(*p) for p in (points or [(0.0, 0.0, 0.0), (0.0, 0.0, 1.0)])]
        curve = build_piecewise_bezier(path)
        tube = TubeShell(curve, r_inner, radius)
        return tube, pappus_shell_volume(curve, r_inner, radius)
    raise CoverageError(
        code="UNSUPPORTED_SOLID",
        message=f"Unknown shape: {shape}",
        details={"supported": list(SHAPES)},
    )


def measure_solid(solid: Solid, analytic: float, voxel_size: float) -> dict[str, Any]:
    if voxel_size <= 0.0:
        raise CoverageError(
            code="INVALID_VOXEL_SIZE",
            message="voxel_size must be positive.",
            details={"voxel_size": voxel_size},
        )
    tree = voxel_volume_of(solid, voxel_size, margin=voxel_size)
    measured = tree.volume()
    logger.info("Λ=%.6f m^3 (analytic %.6f) at l_voxel=%g", measured, analytic, voxel_size)
    return {
        "solid": type(solid).__name__,
        "analytic_m3": analytic,
        "octree_m3": measured,
        "relative_error": (measured - analytic) / analytic if analytic else math.nan,
        "voxel_size_m": tree.domain.voxel_size,
        "max_depth": tree.domain.max_depth,
        "voxels": tree.voxel_count,
        "nodes": tree.node_count(),
    }
