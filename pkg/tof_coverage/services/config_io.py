from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from tof_coverage.errors import CoverageError
from tof_coverage.services.coverage import MaxVolumeKind, parse_vmax_kind
from tof_coverage.services.curves import DEFAULT_INTERPOLATION_FACTOR, DEFAULT_SAMPLES_PER_SEGMENT
from tof_coverage.services.geometry import RigidTransform, Vec3
from tof_coverage.services.kinematics import Joint, RobotModel, TaskSpec
from tof_coverage.services.octree import VoxelDomain
from tof_coverage.services.probe import ProbeSpec
from tof_coverage.services.sensor_rings import (
    DEFAULT_RING_RADIUS,
    DUAL_RING_POSITIONS,
    TOOL_RING_SENSORS,
    SensorSpec,
    split_label,
)

BUNDLED_MODEL = "ur10.yaml"
BUNDLED_EXPERIMENT = "experiment.yaml"
_YAML_SUFFIXES = {".yaml", ".yml"}


def resolve_config_path(filename: str | Path) -> Path:
    path = Path(filename).expanduser()
    if not path.is_absolute():
        path = Path.cwd() / path
    resolved = path.resolve()
    if not resolved.exists():
        raise CoverageError(
            code="FILE_NOT_FOUND",
            message=f"Config file does not exist: {resolved}",
        )
    if not resolved.is_file():
        raise CoverageError(
            code="NOT_A_FILE",
            message=f"Path is not a file: {resolved}",
        )
    if resolved.suffix.lower() not in _YAML_SUFFIXES:
        raise CoverageError(
            code="INVALID_EXTENSION",
            message=f"Only .yaml/.yml config files are supported: {resolved}",
        )
    return resolved


def resolve_output_dir(directory: str | Path) -> Path:
    """Create ``directory`` if needed and check it is writable."""
    resolved = Path(directory).expanduser().resolve()
    if resolved.exists() and not resolved.is_dir():
        raise CoverageError(
            code="NOT_A_DIRECTORY",
            message=f"Path is not a directory: {resolved}",
        )
    try:
        resolved.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CoverageError(
            code="OUTPUT_DIR_NOT_WRITABLE",
            message=f"Cannot create output directory: {resolved}",
            details={"error": str(exc)},
        ) from exc
    if not os.access(resolved, os.W_OK):
        raise CoverageError(
            code="OUTPUT_DIR_NOT_WRITABLE",
            message=f"Output directory is not writable: {resolved}",
        )
    return resolved


def _parse_yaml(text: str, source: str) -> dict[str, Any]:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise CoverageError(
            code="YAML_PARSE_FAILED",
            message=f"Failed to parse YAML: {source}",
            details={"error": str(exc)},
        ) from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise CoverageError(
            code="INVALID_CONFIG",
            message=f"Top level of {source} must be a mapping.",
        )
    return data


def load_yaml(path: str | Path) -> dict[str, Any]:
    resolved = resolve_config_path(path)
    return _parse_yaml(resolved.read_text(encoding="utf-8"), str(resolved))


def load_bundled(name: str) -> dict[str, Any]:
    text = resources.files("tof_coverage").joinpath("data", name).read_text(encoding="utf-8")
    return _parse_yaml(text, name)


def _check_keys(data: dict[str, Any], allowed: set[str], section: str) -> None:
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise CoverageError(
            code="UNKNOWN_CONFIG_KEY",
            message=f"Unknown key(s) in {section}: {', '.join(unknown)}",
            details={"section": section, "unknown": unknown, "allowed": sorted(allowed)},
        )


def _section(data: dict[str, Any], key: str) -> dict[str, Any]:
    value = data.get(key) or {}
    if not isinstance(value, dict):
        raise CoverageError(
            code="INVALID_CONFIG",
            message=f"{key} must be a mapping.",
            details={"key": key},
        )
    return value


def _vec(value: Any, field_name: str) -> Vec3:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise CoverageError(
            code="INVALID_CONFIG",
            message=f"{field_name} must be a list of three numbers.",
            details={"field": field_name, "value": value},
        )
    try:
        return Vec3(*(float(v) for v in value))
    except (TypeError, ValueError) as exc:
        raise CoverageError(
            code="INVALID_CONFIG",
            message=f"{field_name} must be a list of three numbers.",
            details={"field": field_name, "value": value},
        ) from exc


def _transform(data: dict[str, Any], section: str) -> RigidTransform:
    _check_keys(data, {"translation", "rpy"}, section)
    translation = _vec(data.get("translation", [0.0, 0.0, 0.0]), f"{section}.translation")
    rpy = _vec(data.get("rpy", [0.0, 0.0, 0.0]), f"{section}.rpy")
    return RigidTransform.from_rpy([rpy.x, rpy.y, rpy.z], translation)


def robot_model_from_mapping(data: dict[str, Any]) -> RobotModel:
    _check_keys(
        data,
        {"name", "joints", "self_occupancy_radius", "home_endpoints", "base",
         "shoulder_link", "elbow_link"},
        "robot model",
    )
    raw_joints = data.get("joints") or []
    if not isinstance(raw_joints, list) or not raw_joints:
        raise CoverageError(code="INVALID_ROBOT_MODEL", message="Robot model needs joints.")
    joints = []
    for idx, raw in enumerate(raw_joints):
        _check_keys(raw, {"name", "axis", "offset"}, f"joints[{idx}]")
        joints.append(
            Joint(
                name=str(raw.get("name", f"joint_{idx}")),
                axis=_vec(raw.get("axis"), f"joints[{idx}].axis"),
                origin_offset=_transform(raw.get("offset") or {}, f"joints[{idx}].offset"),
            )
        )
    return RobotModel(
        name=str(data.get("name", "robot")),
        joints=tuple(joints),
        self_occupancy_radius=float(data.get("self_occupancy_radius", 0.15)),
        home_endpoints=tuple(
            _vec(p, f"home_endpoints[{i}]") for i, p in enumerate(data.get("home_endpoints") or [])
        ),
        base=_transform(data.get("base") or {}, "base"),
        shoulder_link=int(data.get("shoulder_link", 2)),
        elbow_link=int(data.get("elbow_link", 3)),
    )


def load_robot_model(path: str | Path | None = None) -> RobotModel:
    data = load_bundled(BUNDLED_MODEL) if path is None else load_yaml(path)
    return robot_model_from_mapping(data)


@dataclass(frozen=True)
class DomainSpec:
    edge_length: float = 6.4
    max_depth: int = 8
    center: Vec3 | None = None

    def build(self, model: RobotModel) -> VoxelDomain:
        center = self.center if self.center is not None else model.base.translation
        return VoxelDomain.centered(center, self.edge_length, self.max_depth)

    def with_voxel_size(self, voxel_size: float) -> DomainSpec:
        """Keep the edge length and pick the depth whose voxel is closest to ``voxel_size``."""
        if voxel_size <= 0.0:
            raise CoverageError(
                code="INVALID_VOXEL_SIZE",
                message="voxel_size must be positive.",
                details={"voxel_size": voxel_size},
            )
        depth = max(1, round(math.log2(self.edge_length / voxel_size)))
        return replace(self, max_depth=depth)


@dataclass(frozen=True)
class RingDefaults:
    ring_radius: float = DEFAULT_RING_RADIUS
    dual_positions: tuple[float, float] = DUAL_RING_POSITIONS
    tool_sensors: int = TOOL_RING_SENSORS


@dataclass(frozen=True)
class ThetaSweepSpec:
    thetas: tuple[int, ...] = tuple(range(0, 61, 5))
    rings: int = 2
    sensors: int = 16

    def labels(self) -> list[str]:
        labels = [f"n{self.rings}_{self.sensors}_{theta}" for theta in self.thetas]
        for label in labels:
            split_label(label)
        return labels


@dataclass(frozen=True)
class ShellSweepSpec:
    radii: tuple[float, ...] = (0.5, 0.7, 0.9, 1.1, 1.5)
    extra_configs: tuple[str, ...] = ("n3_16_55",)


@dataclass(frozen=True)
class ExperimentSpec:
    robot_model_path: Path | None = None
    task: TaskSpec = field(default_factory=TaskSpec)
    configs: tuple[str, ...] = ("n1_8_0", "n1_16_0", "n2_16_10", "n2_16_25", "n3_16_55")
    vmax_kinds: tuple[MaxVolumeKind, ...] = field(
        default_factory=lambda: tuple(
            parse_vmax_kind(k)
            for k in ("V_O", "V_T", "V_OT", "V_S:0.5", "V_S:0.7", "V_S:0.9", "V_S:1.1", "V_S:1.5")
        )
    )
    domain: DomainSpec = field(default_factory=DomainSpec)
    output_dir: Path = Path("results")
    seed: int = 0
    jobs: int | None = None
    early_out: bool = True
    interpolation_factor: float = DEFAULT_INTERPOLATION_FACTOR
    samples_per_segment: int = DEFAULT_SAMPLES_PER_SEGMENT
    sensor: SensorSpec = field(default_factory=SensorSpec)
    rings: RingDefaults = field(default_factory=RingDefaults)
    theta_sweep: ThetaSweepSpec = field(default_factory=ThetaSweepSpec)
    shell_sweep: ShellSweepSpec = field(default_factory=ShellSweepSpec)
    probe: ProbeSpec = field(default_factory=ProbeSpec)
    probe_configs: tuple[str, ...] = ("n1_8_0", "n2_16_25")

    def __post_init__(self) -> None:
        if not self.configs:
            raise CoverageError(code="INVALID_EXPERIMENT", message="configs must not be empty.")
        if not self.vmax_kinds:
            raise CoverageError(code="INVALID_EXPERIMENT", message="vmax must not be empty.")
        for label in self.configs:
            split_label(label)

    def load_model(self) -> RobotModel:
        return load_robot_model(self.robot_model_path)

    def with_resolution(
        self, voxel_size: float | None = None, max_depth: int | None = None
    ) -> ExperimentSpec:
        """Override the leaf size (nearest power-of-two depth) and/or the depth itself."""
        domain = self.domain
        if voxel_size is not None:
            domain = domain.with_voxel_size(voxel_size)
        if max_depth is not None:
            domain = replace(domain, max_depth=max_depth)
        return replace(self, domain=domain)

    def with_overrides(self, **overrides: Any) -> ExperimentSpec:
        """Apply CLI flags; ``None`` values leave the file/default value in place."""
        known = {f.name for f in fields(self)}
        values = {k: v for k, v in overrides.items() if v is not None}
        _check_keys(values, known, "overrides")
        return replace(self, **values)


_TOP_KEYS = {
    "robot_model", "output_dir", "seed", "jobs", "early_out", "task", "curve", "domain",
    "sensor", "rings", "configs", "vmax", "theta_sweep", "shell_sweep", "probe",
}


def _labels(value: Any, key: str) -> tuple[str, ...]:
    if not isinstance(value, list):
        raise CoverageError(
            code="INVALID_CONFIG",
            message=f"{key} must be a list.",
            details={"key": key, "value": value},
        )
    return tuple(str(v) for v in value)


def experiment_from_mapping(data: dict[str, Any], base_dir: Path | None = None) -> ExperimentSpec:
    _check_keys(data, _TOP_KEYS, "experiment")
    defaults = ExperimentSpec()
    values: dict[str, Any] = {}

    if data.get("robot_model") is not None:
        model_path = Path(str(data["robot_model"])).expanduser()
        if base_dir is not None and not model_path.is_absolute():
            model_path = base_dir / model_path
        values["robot_model_path"] = model_path
    if data.get("output_dir") is not None:
        values["output_dir"] = Path(str(data["output_dir"]))
    for key in ("seed", "jobs"):
        if data.get(key) is not None:
            values[key] = int(data[key])
    if "early_out" in data:
        values["early_out"] = bool(data["early_out"])

    task = _section(data, "task")
    _check_keys(task, {"base_start", "base_end", "posture", "phase"}, "task")
    values["task"] = TaskSpec(
        base_start=float(task.get("base_start", defaults.task.base_start)),
        base_end=float(task.get("base_end", defaults.task.base_end)),
        posture=tuple(float(a) for a in task.get("posture", defaults.task.posture)),
        phase=float(task.get("phase", defaults.task.phase)),
    )

    curve = _section(data, "curve")
    _check_keys(curve, {"interpolation_factor", "samples_per_segment"}, "curve")
    values["interpolation_factor"] = float(
        curve.get("interpolation_factor", defaults.interpolation_factor)
    )
    values["samples_per_segment"] = int(
        curve.get("samples_per_segment", defaults.samples_per_segment)
    )

    domain = _section(data, "domain")
    _check_keys(domain, {"edge_length", "max_depth", "center"}, "domain")
    values["domain"] = DomainSpec(
        edge_length=float(domain.get("edge_length", defaults.domain.edge_length)),
        max_depth=int(domain.get("max_depth", defaults.domain.max_depth)),
        center=_vec(domain["center"], "domain.center") if domain.get("center") else None,
    )

    sensor = _section(data, "sensor")
    _check_keys(sensor, {"range", "fov_deg"}, "sensor")
    values["sensor"] = SensorSpec(
        range=float(sensor.get("range", defaults.sensor.range)),
        fov_full_angle=math.radians(
            float(sensor.get("fov_deg", math.degrees(defaults.sensor.fov_full_angle)))
        ),
    )

    rings = _section(data, "rings")
    _check_keys(rings, {"ring_radius", "dual_positions", "tool_sensors"}, "rings")
    proximal, distal = rings.get("dual_positions", defaults.rings.dual_positions)
    values["rings"] = RingDefaults(
        ring_radius=float(rings.get("ring_radius", defaults.rings.ring_radius)),
        dual_positions=(float(proximal), float(distal)),
        tool_sensors=int(rings.get("tool_sensors", defaults.rings.tool_sensors)),
    )

    if "configs" in data:
        values["configs"] = _labels(data["configs"], "configs")
    if "vmax" in data:
        values["vmax_kinds"] = tuple(parse_vmax_kind(k) for k in _labels(data["vmax"], "vmax"))

    theta = _section(data, "theta_sweep")
    _check_keys(theta, {"thetas", "rings", "sensors"}, "theta_sweep")
    values["theta_sweep"] = ThetaSweepSpec(
        thetas=tuple(int(t) for t in theta.get("thetas", defaults.theta_sweep.thetas)),
        rings=int(theta.get("rings", defaults.theta_sweep.rings)),
        sensors=int(theta.get("sensors", defaults.theta_sweep.sensors)),
    )

    shell = _section(data, "shell_sweep")
    _check_keys(shell, {"radii", "extra_configs"}, "shell_sweep")
    values["shell_sweep"] = ShellSweepSpec(
        radii=tuple(float(r) for r in shell.get("radii", defaults.shell_sweep.radii)),
        extra_configs=tuple(
            str(c) for c in shell.get("extra_configs", defaults.shell_sweep.extra_configs)
        ),
    )

    probe = _section(data, "probe")
    _check_keys(
        probe,
        {"object_radius", "object_radii", "samples", "band", "fan", "configs", "trajectory"},
        "probe",
    )
    trajectory = probe.get("trajectory")
    low, high = probe.get("band", defaults.probe.band)
    values["probe"] = ProbeSpec(
        object_radius=float(probe.get("object_radius", defaults.probe.object_radius)),
        object_radii=tuple(float(r) for r in probe.get("object_radii") or ()),
        trajectory=(
            None
            if trajectory is None
            else tuple(_vec(p, f"probe.trajectory[{i}]") for i, p in enumerate(trajectory))
        ),
        samples=int(probe.get("samples", defaults.probe.samples)),
        band=(float(low), float(high)),
        seed=int(values.get("seed", defaults.seed)),
        fan=bool(probe.get("fan", defaults.probe.fan)),
    )
    if "configs" in probe:
        values["probe_configs"] = _labels(probe["configs"], "probe.configs")

    return replace(defaults, **values)


def load_experiment(path: str | Path | None = None) -> ExperimentSpec:
    """Bundled defaults when ``path`` is None; relative model paths resolve next to the file."""
    if path is None:
        return experiment_from_mapping(load_bundled(BUNDLED_EXPERIMENT))
    resolved = resolve_config_path(path)
    return experiment_from_mapping(load_yaml(resolved), base_dir=resolved.parent)
