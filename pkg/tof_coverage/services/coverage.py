from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from tof_coverage.errors import CoverageError
from tof_coverage.services.curves import PiecewiseBezierCurve
from tof_coverage.services.geometry import Vec3
from tof_coverage.services.kinematics import PoseSnapshot, RobotModel
from tof_coverage.services.octree import Octree, intersect, subtract
from tof_coverage.services.solids import Solid, Sphere, TubeShell, Union

logger = logging.getLogger(__name__)

DEFAULT_OPERATING_RADIUS = 1.3
DEFAULT_TOOL_RADIUS = 1.5
DEFAULT_SHELL_RADII = (0.5, 0.7, 0.9, 1.1, 1.5)


@dataclass(frozen=True)
class OperatingWorkspace:
    radius: float = DEFAULT_OPERATING_RADIUS
    center_offset: Vec3 = field(default_factory=Vec3.zero)

    name = "V_O"

    @property
    def r_param(self) -> float:
        return self.radius


@dataclass(frozen=True)
class ToolSphere:
    radius: float = DEFAULT_TOOL_RADIUS

    name = "V_T"

    @property
    def r_param(self) -> float:
        return self.radius


@dataclass(frozen=True)
class OperatingPlusTool:
    operating: OperatingWorkspace = field(default_factory=OperatingWorkspace)
    tool: ToolSphere = field(default_factory=ToolSphere)

    name = "V_OT"

    @property
    def r_param(self) -> float:
        return max(self.operating.radius, self.tool.radius)


@dataclass(frozen=True)
class Shell:
    r_shell: float

    name = "V_S"

    @property
    def r_param(self) -> float:
        return self.r_shell


MaxVolumeKind = OperatingWorkspace | ToolSphere | OperatingPlusTool | Shell

_KIND_ORDER = {"V_O": 0, "V_T": 1, "V_OT": 2, "V_S": 3}


def kind_sort_key(kind: MaxVolumeKind) -> tuple[int, float]:
    return _KIND_ORDER[kind.name], kind.r_param


def parse_vmax_kind(text: str) -> MaxVolumeKind:
    """Parse ``V_O``, ``V_T``, ``V_OT``, ``V_S:<radius>`` (optionally ``V_O:<radius>``)."""
    name, _, raw_radius = text.strip().partition(":")
    name = name.upper()
    try:
        radius = float(raw_radius) if raw_radius else None
    except ValueError as exc:
        raise CoverageError(
            code="INVALID_VMAX",
            message=f"Invalid V_max radius: {text!r}",
            details={"value": text},
        ) from exc
    if radius is not None and radius <= 0.0:
        raise CoverageError(
            code="INVALID_VMAX",
            message="V_max radius must be positive.",
            details={"value": text},
        )
    if name == "V_O":
        return OperatingWorkspace(radius or DEFAULT_OPERATING_RADIUS)
    if name == "V_T":
        return ToolSphere(radius or DEFAULT_TOOL_RADIUS)
    if name == "V_OT":
        return OperatingPlusTool()
    if name == "V_S":
        if radius is None:
            raise CoverageError(
                code="INVALID_VMAX",
                message="Shell volumes need a radius, e.g. V_S:0.5.",
                details={"value": text},
            )
        return Shell(radius)
    raise CoverageError(
        code="INVALID_VMAX",
        message=f"Unknown V_max kind: {text!r}",
        details={"supported": sorted(_KIND_ORDER)},
    )


def format_vmax_kind(kind: MaxVolumeKind) -> str:
    if isinstance(kind, Shell):
        return f"V_S:{kind.r_shell:g}"
    if isinstance(kind, OperatingWorkspace) and kind.radius != DEFAULT_OPERATING_RADIUS:
        return f"V_O:{kind.radius:g}"
    if isinstance(kind, ToolSphere) and kind.radius != DEFAULT_TOOL_RADIUS:
        return f"V_T:{kind.radius:g}"
    return kind.name


@dataclass(frozen=True)
class CoverageResult:
    config_label: str
    vmax_kind: MaxVolumeKind
    zeta_percent: float
    lambda_vmax: float
    lambda_leftover: float
    voxel_size: float
    pose_id: str
    max_depth: int = 0
    warnings: tuple[str, ...] = ()

    @property
    def lambda_covered(self) -> float:
        return self.lambda_vmax - self.lambda_leftover


def make_self_volume(model: RobotModel, curve: PiecewiseBezierCurve) -> TubeShell:
    """V_R: the robot approximated as a solid tube around its pose curve."""
    return TubeShell(curve, 0.0, model.self_occupancy_radius)


def make_vmax(
    kind: MaxVolumeKind, pose: PoseSnapshot, model: RobotModel, curve: PiecewiseBezierCurve
) -> Solid:
    """Reference volume for ``kind``; V_R is subtracted later by ``coverage``."""
    if isinstance(kind, OperatingWorkspace):
        base = model.base.translation
        return Sphere(base + kind.center_offset, kind.radius)
    if isinstance(kind, ToolSphere):
        return Sphere(pose.tcp_frame.translation, kind.radius)
    if isinstance(kind, OperatingPlusTool):
        return Union(
            (
                make_vmax(kind.operating, pose, model, curve),
                make_vmax(kind.tool, pose, model, curve),
            )
        )
    if kind.r_shell <= model.self_occupancy_radius:
        raise CoverageError(
            code="SHELL_INSIDE_ROBOT",
            message="Shell radius must exceed the robot self-occupancy radius.",
            details={"r_shell": kind.r_shell, "self_radius": model.self_occupancy_radius},
        )
    return TubeShell(curve, model.self_occupancy_radius, kind.r_shell)


def curvature_warning(curve: PiecewiseBezierCurve, r_outer: float) -> str | None:
    min_radius = curve.min_curvature_radius()
    if min_radius < r_outer:
        return f"pappus_overcount:min_curvature_radius={min_radius:.4g}<r_outer={r_outer:g}"
    return None


def pappus_shell_volume(curve: PiecewiseBezierCurve, r_inner: float, r_outer: float) -> float:
    """Curved-axis solid of revolution: pi (R_out^2 - R_in^2) * arclength.

    Over-counts where the tube folds onto itself (curvature radius < r_outer);
    that case is logged, not rejected.
    """
    if not 0.0 <= r_inner <= r_outer:
        raise CoverageError(
            code="INVALID_TUBE_SHELL",
            message="Pappus volume needs 0 <= r_inner <= r_outer.",
            details={"r_inner": r_inner, "r_outer": r_outer},
        )
    warning = curvature_warning(curve, r_outer)
    if warning:
        logger.warning("Pappus shell volume is an over-estimate: %s", warning)
    return math.pi * (r_outer**2 - r_inner**2) * curve.total_length


def coverage(
    vmax: Octree,
    vfov: Octree,
    vr: Octree,
    *,
    vmax_kind: MaxVolumeKind,
    vmax_excludes_vr: bool = False,
    config_label: str = "",
    pose_id: str = "",
    warnings: tuple[str, ...] = (),
) -> CoverageResult:
    """Coverage zeta of ``vfov`` over ``vmax`` by both the intersection form and the
    double-subtraction form; the two must agree exactly.
    """
    reference = vmax if vmax_excludes_vr else subtract(vmax, vr)
    total = reference.voxel_count
    if total == 0:
        raise CoverageError(
            code="EMPTY_REFERENCE_VOLUME",
            message="Reference volume is empty after removing the robot self-volume.",
            details={"config": config_label, "pose_id": pose_id},
        )
    covered = intersect(reference, vfov).voxel_count
    leftover = subtract(reference, vfov).voxel_count
    zeta_intersection = 100.0 * covered / total
    zeta_subtraction = 100.0 * (total - leftover) / total
    if zeta_intersection != zeta_subtraction:
        raise CoverageError(
            code="COVERAGE_FORMS_DISAGREE",
            message="Intersection and subtraction coverage forms disagree.",
            details={"intersection": zeta_intersection, "subtraction": zeta_subtraction},
        )
    voxel_volume = reference.domain.voxel_size**3
    return CoverageResult(
        config_label=config_label,
        vmax_kind=vmax_kind,
        zeta_percent=zeta_subtraction,
        lambda_vmax=total * voxel_volume,
        lambda_leftover=leftover * voxel_volume,
        voxel_size=reference.domain.voxel_size,
        pose_id=pose_id,
        max_depth=reference.domain.max_depth,
        warnings=warnings,
    )
