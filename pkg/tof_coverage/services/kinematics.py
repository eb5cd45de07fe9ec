from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from tof_coverage.errors import CoverageError
from tof_coverage.services.geometry import RigidTransform, Vec3


@dataclass(frozen=True)
class Joint:
    """Revolute joint rotating about ``axis`` after ``origin_offset``."""

    name: str
    axis: Vec3
    origin_offset: RigidTransform = field(default_factory=RigidTransform.identity)

    def __post_init__(self) -> None:
        if abs(self.axis.norm() - 1.0) > 1e-9:
            raise CoverageError(
                code="INVALID_JOINT_AXIS",
                message=f"Joint axis of {self.name!r} must be unit length.",
                details={"axis": [self.axis.x, self.axis.y, self.axis.z]},
            )


@dataclass(frozen=True)
class RobotModel:
    name: str
    joints: tuple[Joint, ...]
    self_occupancy_radius: float = 0.15
    home_endpoints: tuple[Vec3, ...] = ()
    base: RigidTransform = field(default_factory=RigidTransform.identity)
    shoulder_link: int = 2
    elbow_link: int = 3

    def __post_init__(self) -> None:
        if not self.joints:
            raise CoverageError(code="INVALID_ROBOT_MODEL", message="Robot model has no joints.")
        if self.self_occupancy_radius <= 0.0:
            raise CoverageError(
                code="INVALID_ROBOT_MODEL",
                message="self_occupancy_radius must be positive.",
                details={"self_occupancy_radius": self.self_occupancy_radius},
            )
        for link in (self.shoulder_link, self.elbow_link):
            if not 0 <= link < len(self.joints):
                raise CoverageError(
                    code="INVALID_ROBOT_MODEL",
                    message="shoulder/elbow link index out of range.",
                    details={"link": link, "link_count": len(self.joints)},
                )

    @property
    def link_endpoint_count(self) -> int:
        return len(self.joints) + 1

    @property
    def tool_link(self) -> int:
        return len(self.joints) - 1

    def with_base(self, base: RigidTransform) -> RobotModel:
        return RobotModel(
            name=self.name,
            joints=self.joints,
            self_occupancy_radius=self.self_occupancy_radius,
            home_endpoints=self.home_endpoints,
            base=base,
            shoulder_link=self.shoulder_link,
            elbow_link=self.elbow_link,
        )


@dataclass(frozen=True)
class JointState:
    angles: tuple[float, ...]

    def __post_init__(self) -> None:
        values = tuple(float(a) for a in self.angles)
        if not all(math.isfinite(a) for a in values):
            raise CoverageError(
                code="NON_FINITE_JOINT_STATE",
                message="Joint angles must be finite.",
                details={"angles": list(values)},
            )
        object.__setattr__(self, "angles", values)


@dataclass(frozen=True, eq=False)
class PoseSnapshot:
    link_endpoints: tuple[Vec3, ...]
    link_frames: tuple[RigidTransform, ...]
    tcp_frame: RigidTransform

    def link_length(self, index: int) -> float:
        return self.link_endpoints[index].distance_to(self.link_endpoints[index + 1])

    def transformed(self, transform: RigidTransform) -> PoseSnapshot:
        return PoseSnapshot(
            link_endpoints=tuple(transform.apply(p) for p in self.link_endpoints),
            link_frames=tuple(transform.compose(f) for f in self.link_frames),
            tcp_frame=transform.compose(self.tcp_frame),
        )


@dataclass(frozen=True)
class TaskSpec:
    """Pick-and-place base sweep; non-base joints hold ``posture``."""

    base_start: float = 0.0
    base_end: float = math.pi
    posture: tuple[float, ...] = (-0.21, 0.87, -0.24, -1.07, 0.0)
    phase: float = 0.5

    @property
    def pose_id(self) -> str:
        return f"phase={self.phase:g}"


def forward_kinematics(model: RobotModel, q: JointState) -> PoseSnapshot:
    if len(q.angles) != len(model.joints):
        raise CoverageError(
            code="ARITY_MISMATCH",
            message="Joint state length does not match the robot model.",
            details={"expected": len(model.joints), "actual": len(q.angles)},
        )
    frame = model.base
    frames = [frame]
    for joint, angle in zip(model.joints, q.angles, strict=True):
        frame = frame.compose(joint.origin_offset).compose(
            RigidTransform.from_axis_angle(joint.axis, angle)
        )
        frames.append(frame)
    return PoseSnapshot(
        link_endpoints=tuple(f.translation for f in frames),
        link_frames=tuple(frames[:-1]),
        tcp_frame=frames[-1],
    )


def task_pose(model: RobotModel, task: TaskSpec) -> JointState:
    if not 0.0 <= task.phase <= 1.0:
        raise CoverageError(
            code="INVALID_PHASE",
            message="Task phase must lie in [0, 1].",
            details={"phase": task.phase},
        )
    expected = len(model.joints) - 1
    if len(task.posture) != expected:
        raise CoverageError(
            code="ARITY_MISMATCH",
            message="Task posture must cover every non-base joint.",
            details={"expected": expected, "actual": len(task.posture)},
        )
    base = task.base_start + task.phase * (task.base_end - task.base_start)
    return JointState((base, *task.posture))


def link_lengths(model: RobotModel) -> list[float]:
    # Rigid links: lengths are the offset translations, independent of q.
    return [float(np.linalg.norm(j.origin_offset.translation.as_array())) for j in model.joints]
