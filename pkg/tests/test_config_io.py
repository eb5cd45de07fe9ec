from __future__ import annotations

import math
from pathlib import Path

import pytest

from tof_coverage.errors import CoverageError
from tof_coverage.services.config_io import (
    DomainSpec,
    ExperimentSpec,
    load_experiment,
    load_robot_model,
    resolve_output_dir,
)
from tof_coverage.services.coverage import OperatingWorkspace, Shell
from tof_coverage.services.geometry import Vec3

ROOT = Path(__file__).resolve().parents[1]
BUNDLED_MODEL = ROOT / "tof_coverage" / "data" / "ur10.yaml"


def test_bundled_experiment_defaults() -> None:
    spec = load_experiment()
    assert spec.configs == ("n1_8_0", "n1_16_0", "n2_16_10", "n2_16_25", "n3_16_55")
    assert spec.vmax_kinds[0] == OperatingWorkspace()
    assert spec.vmax_kinds[-1] == Shell(1.5)
    assert spec.domain == DomainSpec(6.4, 8)
    assert spec.sensor.fov_full_angle == pytest.approx(math.radians(25.0))
    assert spec.theta_sweep.labels()[:2] == ["n2_16_0", "n2_16_5"]
    assert spec.probe.band == (0.3, 1.5)
    assert spec.probe.object_radii == ()


def test_bundled_robot_model() -> None:
    model = load_robot_model()
    assert model.name == "ur10-like"
    assert len(model.joints) == 6
    assert model.home_endpoints[-1] == Vec3(0.0, 0.1639, 1.4273)
    assert (model.shoulder_link, model.elbow_link, model.tool_link) == (2, 3, 5)


def test_experiment_file_overrides_and_relative_model(tmp_path: Path) -> None:
    model_copy = tmp_path / "models" / "arm.yaml"
    model_copy.parent.mkdir()
    model_copy.write_text(BUNDLED_MODEL.read_text(encoding="utf-8"), encoding="utf-8")
    path = tmp_path / "exp.yml"
    path.write_text(
        "\n".join(
            [
                "robot_model: models/arm.yaml",
                "seed: 3",
                "configs: [n2_16_25]",
                'vmax: [V_T, "V_S:0.9"]',
                "domain: {edge_length: 3.2, max_depth: 6}",
                "sensor: {fov_deg: 40}",
                "probe: {object_radii: [0.05, 0.2], configs: [n3_16_55]}",
            ]
        ),
        encoding="utf-8",
    )
    spec = load_experiment(path)
    assert spec.robot_model_path == model_copy
    assert spec.load_model().name == "ur10-like"
    assert spec.seed == 3
    assert spec.probe.seed == 3
    assert spec.configs == ("n2_16_25",)
    assert [type(k).__name__ for k in spec.vmax_kinds] == ["ToolSphere", "Shell"]
    assert spec.domain.build(spec.load_model()).voxel_size == pytest.approx(0.05)
    assert spec.sensor.fov_full_angle == pytest.approx(math.radians(40.0))
    assert spec.probe.radii == (0.05, 0.2)
    assert spec.probe_configs == ("n3_16_55",)


def test_resolution_overrides() -> None:
    spec = load_experiment()
    assert spec.with_resolution(voxel_size=0.05).domain.max_depth == 7
    assert spec.with_resolution(voxel_size=0.1).domain.max_depth == 6
    assert spec.with_resolution(max_depth=5).domain.max_depth == 5
    assert spec.with_resolution() == spec
    with pytest.raises(CoverageError) as exc:
        spec.with_resolution(voxel_size=0.0)
    assert exc.value.code == "INVALID_VOXEL_SIZE"


def test_cli_style_overrides(tmp_path: Path) -> None:
    spec = load_experiment().with_overrides(output_dir=tmp_path, jobs=2, seed=None)
    assert spec.output_dir == tmp_path
    assert spec.jobs == 2
    assert spec.seed == 0
    with pytest.raises(CoverageError) as exc:
        spec.with_overrides(colour="red")
    assert exc.value.code == "UNKNOWN_CONFIG_KEY"


@pytest.mark.parametrize(
    ("text", "code"),
    [
        ("voxels: 3\n", "UNKNOWN_CONFIG_KEY"),
        ("task: {phase: 0.5, speed: 2}\n", "UNKNOWN_CONFIG_KEY"),
        ("configs: [n1_8_0\n", "YAML_PARSE_FAILED"),
        ("- 1\n- 2\n", "INVALID_CONFIG"),
        ("domain: 3\n", "INVALID_CONFIG"),
        ("configs: n1_8_0\n", "INVALID_CONFIG"),
        ("domain: {center: [0, 0]}\n", "INVALID_CONFIG"),
        ("configs: []\n", "INVALID_EXPERIMENT"),
        ("configs: [n5_8_0]\n", "UNSUPPORTED_RING_COUNT"),
        ('vmax: ["V_Q"]\n', "INVALID_VMAX"),
    ],
)
def test_bad_experiment_files(tmp_path: Path, text: str, code: str) -> None:
    path = tmp_path / "exp.yaml"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(CoverageError) as exc:
        load_experiment(path)
    assert exc.value.code == code


def test_config_path_errors(tmp_path: Path) -> None:
    with pytest.raises(CoverageError) as exc:
        load_experiment(tmp_path / "missing.yaml")
    assert exc.value.code == "FILE_NOT_FOUND"

    txt = tmp_path / "exp.txt"
    txt.write_text("seed: 1\n", encoding="utf-8")
    with pytest.raises(CoverageError) as exc:
        load_experiment(txt)
    assert exc.value.code == "INVALID_EXTENSION"

    with pytest.raises(CoverageError) as exc:
        load_robot_model(tmp_path)
    assert exc.value.code == "NOT_A_FILE"


def test_robot_model_errors(tmp_path: Path) -> None:
    path = tmp_path / "arm.yaml"
    path.write_text("name: empty\njoints: []\n", encoding="utf-8")
    with pytest.raises(CoverageError) as exc:
        load_robot_model(path)
    assert exc.value.code == "INVALID_ROBOT_MODEL"

    path.write_text(
        "joints:\n  - {name: j, axis: [0, 0, 2]}\n",
        encoding="utf-8",
    )
    with pytest.raises(CoverageError) as exc:
        load_robot_model(path)
    assert exc.value.code == "INVALID_JOINT_AXIS"


def test_output_dir_checks(tmp_path: Path) -> None:
    created = resolve_output_dir(tmp_path / "a" / "b")
    assert created.is_dir()
    blocker = tmp_path / "file"
    blocker.write_text("x", encoding="utf-8")
    with pytest.raises(CoverageError) as exc:
        resolve_output_dir(blocker)
    assert exc.value.code == "NOT_A_DIRECTORY"


def test_empty_vmax_is_rejected() -> None:
    with pytest.raises(CoverageError) as exc:
        ExperimentSpec(vmax_kinds=())
    assert exc.value.code == "INVALID_EXPERIMENT"
