from __future__ import annotations

import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from tof_coverage.services.config_io import (  # noqa: E402
    DomainSpec,
    ExperimentSpec,
    load_robot_model,
)
from tof_coverage.services.coverage import OperatingWorkspace, Shell  # noqa: E402
from tof_coverage.services.kinematics import (  # noqa: E402
    PoseSnapshot,
    RobotModel,
    TaskSpec,
    forward_kinematics,
    task_pose,
)


@pytest.fixture(scope="session")
def model() -> RobotModel:
    return load_robot_model()


@pytest.fixture(scope="session")
def task_snapshot(model: RobotModel) -> PoseSnapshot:
    return forward_kinematics(model, task_pose(model, TaskSpec()))


@pytest.fixture
def small_spec(tmp_path: Path) -> ExperimentSpec:
    """Coarse 0.2 m voxels so sweeps finish in a couple of seconds."""
    return ExperimentSpec(
        configs=("n1_8_0", "n1_16_0"),
        vmax_kinds=(OperatingWorkspace(), Shell(0.5)),
        domain=DomainSpec(edge_length=6.4, max_depth=5),
        output_dir=tmp_path / "results",
        jobs=1,
    )
