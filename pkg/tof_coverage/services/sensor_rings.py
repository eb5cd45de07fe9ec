from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace

import numpy as np

from tof_coverage.errors import CoverageError
from tof_coverage.services.geometry import RigidTransform, Vec3
from tof_coverage.services.kinematics import PoseSnapshot, RobotModel
from tof_coverage.services.solids import Cone, Solid, Union

LABEL_RE = re.compile(r"^n(?P<rings>\d+)_(?P<sensors>\d+)_(?P<theta>\d+)$")
THETA_MIN_DEG = 0
THETA_MAX_DEG = 60
DEFAULT_RING_RADIUS = 0.03
DUAL_RING_POSITIONS = (0.0, 1.0)
TOOL_RING_SENSORS = 8

SHOULDER = "shoulder"
ELBOW = "elbow"
TOOL = "tool"
LINK_ROLES = (SHOULDER, ELBOW, TOOL)


@dataclass(frozen=True)
class SensorSpec:
    range: float = 1.5
    fov_full_angle: float = math.radians(25.0)

    def __post_init__(self) -> None:
        if self.range <= 0.0:
            raise CoverageError(
                code="INVALID_SENSOR_SPEC",
                message="Sensor range must be positive.",
                details={"range": self.range},
            )
        if not 0.0 < self.fov_full_angle < math.pi:
            raise CoverageError(
                code="INVALID_SENSOR_SPEC",
                message="fov_full_angle must lie in (0, pi).",
                details={"fov_full_angle": self.fov_full_angle},
            )


@dataclass(frozen=True)
class RingPlacement:
    """One ring on a link.

    ``link`` is a role name (shoulder/elbow/tool) resolved against the robot model,
    or an explicit segment index. ``tilt_sign`` +1 tilts the sensor axes toward the
    distal end of the link, -1 toward the proximal end.
    """

    link: str | int
    axial_position: float
    tilt_theta: float
    sensor_count: int
    ring_radius: float = DEFAULT_RING_RADIUS
    tilt_sign: int = 1

    def __post_init__(self) -> None:
        if self.sensor_count < 1:
            raise CoverageError(
                code="INVALID_RING",
                message="sensor_count must be >= 1.",
                details={"sensor_count": self.sensor_count},
            )
        if self.ring_radius < 0.0:
            raise CoverageError(
                code="INVALID_RING",
                message="ring_radius must be >= 0.",
                details={"ring_radius": self.ring_radius},
            )
        if not 0.0 <= self.tilt_theta < math.pi / 2:
            raise CoverageError(
                code="INVALID_RING",
                message="tilt_theta must lie in [0, pi/2).",
                details={"tilt_theta": self.tilt_theta},
            )
        if not 0.0 <= self.axial_position <= 1.0:
            raise CoverageError(
                code="INVALID_RING",
                message="axial_position must lie in [0, 1].",
                details={"axial_position": self.axial_position},
            )
        if self.tilt_sign not in (-1, 1):
            raise CoverageError(
                code="INVALID_RING",
                message="tilt_sign must be +1 or -1.",
                details={"tilt_sign": self.tilt_sign},
            )

    @property
    def group(self) -> str:
        return self.link if isinstance(self.link, str) else f"link{self.link}"


@dataclass(frozen=True)
class SensorConfig:
    rings: tuple[RingPlacement, ...]
    spec: SensorSpec = field(default_factory=SensorSpec)
    label: str = ""

    @property
    def sensor_count(self) -> int:
        return sum(ring.sensor_count for ring in self.rings)

    def with_spec(self, spec: SensorSpec) -> SensorConfig:
        return replace(self, spec=spec)


@dataclass(frozen=True)
class LabelParts:
    rings: int
    sensors: int
    theta_deg: int

    def format(self) -> str:
        return f"n{self.rings}_{self.sensors}_{self.theta_deg}"


@dataclass(frozen=True, eq=False)
class PlacedSensor:
    pose: RigidTransform
    cone: Cone
    group: str

    @property
    def position(self) -> Vec3:
        return self.pose.translation

    @property
    def direction(self) -> Vec3:
        return self.pose.axis(2)


def split_label(label: str) -> LabelParts:
    match = LABEL_RE.fullmatch(label.strip())
    if match is None:
        raise CoverageError(
            code="INVALID_LABEL",
            message=f"Configuration label must look like n<i>_<j>_<theta>: {label!r}",
            details={"label": label},
        )
    parts = LabelParts(
        rings=int(match["rings"]),
        sensors=int(match["sensors"]),
        theta_deg=int(match["theta"]),
    )
    if parts.rings not in (1, 2, 3):
        raise CoverageError(
            code="UNSUPPORTED_RING_COUNT",
            message="Ring count must be 1, 2 or 3.",
            details={"label": label, "rings": parts.rings},
        )
    if parts.sensors < 1:
        raise CoverageError(
            code="INVALID_LABEL",
            message="Sensors per ring must be >= 1.",
            details={"label": label},
        )
    if not THETA_MIN_DEG <= parts.theta_deg <= THETA_MAX_DEG:
        raise CoverageError(
            code="THETA_OUT_OF_RANGE",
            message=f"Tilt must lie in [{THETA_MIN_DEG}, {THETA_MAX_DEG}] degrees.",
            details={"label": label, "theta_deg": parts.theta_deg},
        )
    return parts


def label_sort_key(label: str) -> tuple[int, int, int, str]:
    try:
        parts = split_label(label.split("@", 1)[0])
    except CoverageError:
        return (99, 0, 0, label)
    return (parts.rings, parts.sensors, parts.theta_deg, label)


def parse_config_label(
    label: str,
    spec: SensorSpec | None = None,
    *,
    ring_radius: float = DEFAULT_RING_RADIUS,
    dual_positions: tuple[float, float] = DUAL_RING_POSITIONS,
    tool_sensors: int = TOOL_RING_SENSORS,
) -> SensorConfig:
    parts = split_label(label)
    theta = math.radians(parts.theta_deg)
    rings: list[RingPlacement] = []
    for role in (SHOULDER, ELBOW):
        if parts.rings in (1, 3):
            rings.append(RingPlacement(role, 0.5, 0.0, parts.sensors, ring_radius))
        if parts.rings in (2, 3):
            # The end rings lean toward each other, over the middle of the link.
            proximal, distal = dual_positions
            rings.append(RingPlacement(role, proximal, theta, parts.sensors, ring_radius, 1))
            rings.append(RingPlacement(role, distal, theta, parts.sensors, ring_radius, -1))
    rings.append(RingPlacement(TOOL, 1.0, 0.0, tool_sensors, ring_radius))
    return SensorConfig(rings=tuple(rings), spec=spec or SensorSpec(), label=parts.format())


def format_config_label(config: SensorConfig) -> str:
    return split_label(config.label).format()


def resolve_link(model: RobotModel, link: str | int) -> int:
    if isinstance(link, int):
        return link
    roles = {SHOULDER: model.shoulder_link, ELBOW: model.elbow_link, TOOL: model.tool_link}
    if link not in roles:
        raise CoverageError(
            code="UNKNOWN_LINK_ROLE",
            message=f"Unknown link role: {link}",
            details={"supported": sorted(roles)},
        )
    return roles[link]


def _ring_basis(frame: RigidTransform, axis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Reference direction comes from the link frame so placement moves with the pose.
    columns = np.asarray(frame.rotation).T
    dots = np.abs(columns @ axis)
    # First of the near-tied columns, so rounding cannot swap the reference.
    ref = columns[int(np.flatnonzero(dots <= dots.min() + 1e-9)[0])].copy()
    u = ref - np.dot(ref, axis) * axis
    u /= np.linalg.norm(u)
    return u, np.cross(axis, u)


def place_sensors(
    config: SensorConfig, pose: PoseSnapshot, model: RobotModel
) -> list[PlacedSensor]:
    half_angle = config.spec.fov_full_angle / 2.0
    placed: list[PlacedSensor] = []
    link_count = len(pose.link_endpoints) - 1
    for ring in config.rings:
        link = resolve_link(model, ring.link)
        if not 0 <= link < link_count:
            raise CoverageError(
                code="LINK_INDEX_OUT_OF_RANGE",
                message=f"Ring link index {link} is out of range.",
                details={"link": link, "link_count": link_count},
            )
        start = pose.link_endpoints[link].as_array()
        end = pose.link_endpoints[link + 1].as_array()
        axis = (end - start) / np.linalg.norm(end - start)
        center = start + ring.axial_position * (end - start)
        u, v = _ring_basis(pose.link_frames[link], axis)
        for k in range(ring.sensor_count):
            phi = 2.0 * math.pi * k / ring.sensor_count
            radial = math.cos(phi) * u + math.sin(phi) * v
            direction = (
                math.cos(ring.tilt_theta) * radial
                + ring.tilt_sign * math.sin(ring.tilt_theta) * axis
            )
            position = center + ring.ring_radius * radial
            # tilt < 90 deg, so the link axis is never parallel to the sensor axis.
            x_axis = axis - np.dot(axis, direction) * direction
            x_axis = x_axis / np.linalg.norm(x_axis)
            y_axis = np.cross(direction, x_axis)
            sensor_pose = RigidTransform.from_frame(
                Vec3.of(x_axis), Vec3.of(y_axis), Vec3.of(direction), Vec3.of(position)
            )
            cone = Cone(
                apex=Vec3.of(position),
                axis=Vec3.of(direction),
                half_angle=half_angle,
                height=config.spec.range,
            )
            placed.append(PlacedSensor(pose=sensor_pose, cone=cone, group=ring.group))
    return placed


def fov_union(sensors: list[PlacedSensor] | list[Solid]) -> Union:
    if not sensors:
        raise CoverageError(
            code="EMPTY_SENSOR_LIST",
            message="fov_union needs at least one sensor.",
        )
    members: list[Solid] = [s.cone if isinstance(s, PlacedSensor) else s for s in sensors]
    return Union(tuple(members))
