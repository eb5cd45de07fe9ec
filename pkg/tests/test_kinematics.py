from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tof_coverage.errors import CoverageError
from tof_coverage.services.geometry import RigidTransform, Vec3
from tof_coverage.services.kinematics import (
    JointState,
    RobotModel,
    TaskSpec,
    forward_kinematics,
    link_lengths,
    task_pose,
)

joint_angles = st.lists(
    st.floats(min_value=-math.pi, max_value=math.pi, allow_nan=False), min_size=6, max_size=6
)


def test_zero_pose_reproduces_home_endpoints(model: RobotModel) -> None:
    pose = forward_kinematics(model, JointState((0.0,) * 6))
    assert len(pose.link_endpoints) == model.link_endpoint_count == 7
    for actual, expected in zip(pose.link_endpoints, model.home_endpoints, strict=True):
        assert actual.distance_to(expected) < 1e-9
    assert pose.tcp_frame.translation.distance_to(Vec3(0.0, 0.1639, 1.4273)) < 1e-9


def test_base_rotation_turns_the_arm_about_z(model: RobotModel) -> None:
    pose = forward_kinematics(model, JointState((math.pi / 2, 0.0, 0.0, 0.0, 0.0, 0.0)))
    shoulder = pose.link_endpoints[2]
    assert shoulder.x == pytest.approx(-0.2209)
    assert shoulder.y == pytest.approx(0.0, abs=1e-12)
    assert shoulder.z == pytest.approx(0.1273)


@settings(max_examples=40, deadline=None, derandomize=True)
@given(angles=joint_angles)
def test_link_lengths_do_not_depend_on_joint_state(model: RobotModel, angles: list[float]) -> None:
    pose = forward_kinematics(model, JointState(tuple(angles)))
    expected = link_lengths(model)
    for index, length in enumerate(expected):
        assert pose.link_length(index) == pytest.approx(length, abs=1e-9)


def test_arity_mismatch_is_rejected(model: RobotModel) -> None:
    with pytest.raises(CoverageError) as exc:
        forward_kinematics(model, JointState((0.0, 0.0)))
    assert exc.value.code == "ARITY_MISMATCH"


def test_non_finite_joint_state_is_rejected() -> None:
    with pytest.raises(CoverageError) as exc:
        JointState((0.0, math.nan))
    assert exc.value.code == "NON_FINITE_JOINT_STATE"


def test_task_pose_interpolates_the_base_sweep(model: RobotModel) -> None:
    q = task_pose(model, TaskSpec(base_start=0.0, base_end=math.pi, phase=0.5))
    assert q.angles[0] == pytest.approx(math.pi / 2)
    assert q.angles[1:] == TaskSpec().posture

    with pytest.raises(CoverageError) as exc:
        task_pose(model, TaskSpec(phase=1.5))
    assert exc.value.code == "INVALID_PHASE"

    with pytest.raises(CoverageError) as exc:
        task_pose(model, TaskSpec(posture=(0.0, 0.0)))
    assert exc.value.code == "ARITY_MISMATCH"


def test_model_base_shifts_every_endpoint(model: RobotModel) -> None:
    shifted = model.with_base(RigidTransform.from_translation(Vec3(1.0, 2.0, 0.5)))
    q = JointState((0.3, 0.2, -0.4, 0.1, 0.0, 0.0))
    original = forward_kinematics(model, q)
    moved = forward_kinematics(shifted, q)
    for a, b in zip(original.link_endpoints, moved.link_endpoints, strict=True):
        assert (b - a).distance_to(Vec3(1.0, 2.0, 0.5)) < 1e-9


def test_transformed_pose_matches_a_moved_base(model: RobotModel) -> None:
    mount = RigidTransform.from_axis_angle(Vec3(0.0, 0.0, 1.0), 0.7, Vec3(0.5, -1.0, 0.2))
    q = JointState((0.3, 0.2, -0.4, 0.1, 0.5, 0.0))
    moved = forward_kinematics(model.with_base(mount), q)
    transformed = forward_kinematics(model, q).transformed(mount)
    for a, b in zip(moved.link_endpoints, transformed.link_endpoints, strict=True):
        assert a.distance_to(b) < 1e-9
    assert moved.tcp_frame.is_close(transformed.tcp_frame)


def test_invalid_robot_model_is_rejected(model: RobotModel) -> None:
    with pytest.raises(CoverageError) as exc:
        RobotModel(name="bad", joints=model.joints, self_occupancy_radius=0.0)
    assert exc.value.code == "INVALID_ROBOT_MODEL"

    with pytest.raises(CoverageError) as exc:
        RobotModel(name="bad", joints=model.joints, shoulder_link=9)
    assert exc.value.code == "INVALID_ROBOT_MODEL"
