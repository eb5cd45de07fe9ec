from __future__ import annotations

import csv
import hashlib
import logging
import math
import os
from collections.abc import Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache
from pathlib import Path

from scipy.stats import spearmanr

from tof_coverage import __version__
from tof_coverage.errors import CoverageError
from tof_coverage.services.config_io import ExperimentSpec, resolve_output_dir
from tof_coverage.services.coverage import (
    CoverageResult,
    MaxVolumeKind,
    Shell,
    coverage,
    curvature_warning,
    format_vmax_kind,
    kind_sort_key,
    make_self_volume,
    make_vmax,
    parse_vmax_kind,
)
from tof_coverage.services.curves import PiecewiseBezierCurve, build_piecewise_bezier
from tof_coverage.services.kinematics import PoseSnapshot, RobotModel, forward_kinematics, task_pose
from tof_coverage.services.octree import Octree, VoxelDomain, subtract, voxelize
from tof_coverage.services.probe import (
    ProbeResult,
    ProbeSpec,
    format_metric,
    parse_metric,
    probe_config,
)
from tof_coverage.services.sensor_rings import (
    LINK_ROLES,
    PlacedSensor,
    SensorConfig,
    fov_union,
    label_sort_key,
    parse_config_label,
    place_sensors,
    split_label,
)
from tof_coverage.services.solids import TubeShell

logger = logging.getLogger(__name__)

CONFIG_SWEEP = "config_sweep"
THETA_SWEEP = "theta_sweep"
SHELL_SWEEP = "shell_sweep"
PROBE = "probe"
SWEEP_NAMES = (CONFIG_SWEEP, THETA_SWEEP, SHELL_SWEEP)

COVERAGE_COLUMNS = (
    "config",
    "vmax",
    "r_param",
    "theta_deg",
    "zeta_percent",
    "lambda_vmax_m3",
    "lambda_leftover_m3",
    "voxel_size_m",
    "max_depth",
    "pose_phase",
    "warnings",
    "error_code",
    "code_version",
    "row_key",
)
PROBE_COLUMNS = (
    "config",
    "object_radius_m",
    "rmse_m",
    "max_error_m",
    "seen_fraction",
    "rmse_clamped_m",
    "rmse_near_m",
    "rmse_mid_m",
    "rmse_far_m",
    "waypoints",
    "seed",
    "pose_phase",
    "code_version",
)
GROUP_SEPARATOR = "@"


@dataclass(frozen=True)
class RunOptions:
    force: bool = False
    jobs: int | None = None
    dump_octrees: bool = False
    dump_leftover: bool = False
    by_group: bool = False

    @property
    def workers(self) -> int:
        return max(1, self.jobs if self.jobs is not None else (os.cpu_count() or 1))


@dataclass(frozen=True, eq=False)
class SweepContext:
    """Everything a sweep derives once from the experiment: pose, curve, domain, V_R."""

    spec: ExperimentSpec
    model: RobotModel
    pose: PoseSnapshot
    curve: PiecewiseBezierCurve
    domain: VoxelDomain
    _vmax_cache: dict[str, Octree] = field(default_factory=dict)

    @classmethod
    def build(cls, spec: ExperimentSpec) -> SweepContext:
        model = spec.load_model()
        pose = forward_kinematics(model, task_pose(model, spec.task))
        curve = build_piecewise_bezier(
            list(pose.link_endpoints), spec.interpolation_factor, spec.samples_per_segment
        )
        return cls(spec, model, pose, curve, spec.domain.build(model))

    @cached_property
    def self_solid(self) -> TubeShell:
        return make_self_volume(self.model, self.curve)

    @cached_property
    def self_volume(self) -> Octree:
        return voxelize(self.self_solid, self.domain, early_out=self.spec.early_out)

    def vmax_tree(self, kind: MaxVolumeKind) -> Octree:
        """Ω(V_max) − Ω(V_R), cached per kind."""
        key = format_vmax_kind(kind)
        if key not in self._vmax_cache:
            solid = make_vmax(kind, self.pose, self.model, self.curve)
            raw = voxelize(solid, self.domain, early_out=self.spec.early_out)
            self._vmax_cache[key] = subtract(raw, self.self_volume)
        else:
            logger.debug("V_max cache hit for %s", key)
        return self._vmax_cache[key]

    def sensor_config(self, label: str) -> SensorConfig:
        rings = self.spec.rings
        return parse_config_label(
            label,
            self.spec.sensor,
            ring_radius=rings.ring_radius,
            dual_positions=rings.dual_positions,
            tool_sensors=rings.tool_sensors,
        )

    def sensors(self, label: str, group: str | None = None) -> list[PlacedSensor]:
        placed = place_sensors(self.sensor_config(label), self.pose, self.model)
        if group is None:
            return placed
        if group not in LINK_ROLES:
            raise CoverageError(
                code="UNKNOWN_LINK_ROLE",
                message=f"Unknown sensor group: {group}",
                details={"supported": list(LINK_ROLES)},
            )
        return [s for s in placed if s.group == group]

    def fov_tree(self, label: str, group: str | None = None) -> Octree:
        return voxelize(
            fov_union(self.sensors(label, group)),
            self.domain,
            early_out=self.spec.early_out,
            clip=True,
        )


CONTEXT_CACHE_SIZE = 4


@lru_cache(maxsize=CONTEXT_CACHE_SIZE)
def sweep_context(spec: ExperimentSpec) -> SweepContext:
    # Worker processes reuse one context (and its V_max cache) per spec; the
    # bound keeps long-lived servers from holding every spec ever evaluated.
    return SweepContext.build(spec)


@dataclass(frozen=True)
class CoverageRow:
    config: str
    vmax: str
    r_param: float
    theta_deg: int | None
    zeta_percent: float | None
    lambda_vmax_m3: float | None
    lambda_leftover_m3: float | None
    voxel_size_m: float
    max_depth: int
    pose_phase: float
    warnings: tuple[str, ...] = ()
    error_code: str = ""
    code_version: str = __version__
    row_key: str = ""

    @property
    def ok(self) -> bool:
        return not self.error_code

    def to_record(self) -> dict[str, str]:
        return {
            "config": self.config,
            "vmax": self.vmax,
            "r_param": f"{self.r_param:g}",
            "theta_deg": "" if self.theta_deg is None else str(self.theta_deg),
            "zeta_percent": _fmt(self.zeta_percent, 4),
            "lambda_vmax_m3": _fmt(self.lambda_vmax_m3, 6),
            "lambda_leftover_m3": _fmt(self.lambda_leftover_m3, 6),
            "voxel_size_m": f"{self.voxel_size_m:.6g}",
            "max_depth": str(self.max_depth),
            "pose_phase": f"{self.pose_phase:g}",
            "warnings": ";".join(self.warnings),
            "error_code": self.error_code,
            "code_version": self.code_version,
            "row_key": self.row_key,
        }

    @classmethod
    def from_record(cls, record: dict[str, str]) -> CoverageRow:
        try:
            return cls(
                config=record["config"],
                vmax=record["vmax"],
                r_param=float(record["r_param"]),
                theta_deg=int(record["theta_deg"]) if record["theta_deg"] else None,
                zeta_percent=_parse_optional(record["zeta_percent"]),
                lambda_vmax_m3=_parse_optional(record["lambda_vmax_m3"]),
                lambda_leftover_m3=_parse_optional(record["lambda_leftover_m3"]),
                voxel_size_m=float(record["voxel_size_m"]),
                max_depth=int(record["max_depth"]),
                pose_phase=float(record["pose_phase"]),
                warnings=tuple(w for w in record["warnings"].split(";") if w),
                error_code=record.get("error_code", ""),
                code_version=record.get("code_version", ""),
                row_key=record.get("row_key", ""),
            )
        except (KeyError, ValueError) as exc:
            raise CoverageError(
                code="INVALID_RESULTS_CSV",
                message="Results CSV row does not match the coverage schema.",
                details={"record": record, "error": str(exc)},
            ) from exc


def _fmt(value: float | None, digits: int) -> str:
    return "" if value is None else f"{value:.{digits}f}"


def _parse_optional(raw: str) -> float | None:
    return float(raw) if raw else None


def row_sort_key(config: str, vmax: str) -> tuple[object, ...]:
    return (*label_sort_key(config), *kind_sort_key(parse_vmax_kind(vmax)))


def row_key(spec: ExperimentSpec, domain: VoxelDomain, config: str, vmax: str) -> str:
    rings = spec.rings
    parts = [
        config,
        vmax,
        domain.digest(),
        f"{spec.task.phase:g}",
        ",".join(f"{a:g}" for a in spec.task.posture),
        f"{spec.task.base_start:g}:{spec.task.base_end:g}",
        f"{spec.sensor.range:g}:{spec.sensor.fov_full_angle:.12g}",
        f"{rings.ring_radius:g}:{rings.dual_positions}:{rings.tool_sensors}",
        f"{spec.interpolation_factor:g}:{spec.samples_per_segment}",
        str(spec.robot_model_path or "bundled"),
        str(spec.early_out),
        __version__,
    ]
    return hashlib.sha1("|".join(parts).encode("utf-8")).hexdigest()[:16]


def _split_group(config: str) -> tuple[str, str | None]:
    label, sep, group = config.partition(GROUP_SEPARATOR)
    return label, (group if sep else None)


def _theta_of(label: str) -> int | None:
    try:
        return split_label(label).theta_deg
    except CoverageError:
        return None


def _result_row(
    ctx: SweepContext, config: str, kind: MaxVolumeKind, result: CoverageResult | None, code: str
) -> CoverageRow:
    vmax = format_vmax_kind(kind)
    return CoverageRow(
        config=config,
        vmax=vmax,
        r_param=kind.r_param,
        theta_deg=_theta_of(_split_group(config)[0]),
        zeta_percent=None if result is None else result.zeta_percent,
        lambda_vmax_m3=None if result is None else result.lambda_vmax,
        lambda_leftover_m3=None if result is None else result.lambda_leftover,
        voxel_size_m=ctx.domain.voxel_size,
        max_depth=ctx.domain.max_depth,
        pose_phase=ctx.spec.task.phase,
        warnings=() if result is None else result.warnings,
        error_code=code,
        row_key=row_key(ctx.spec, ctx.domain, config, vmax),
    )


def _dump_name(text: str) -> str:
    return text.replace(":", "_").replace(GROUP_SEPARATOR, "__")


def write_leftover_points(path: Path, tree: Octree) -> int:
    centers = tree.leaf_centers()
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(("x", "y", "z"))
        writer.writerows((f"{x:.6f}", f"{y:.6f}", f"{z:.6f}") for x, y, z in centers)
    return len(centers)


def evaluate_config(
    ctx: SweepContext,
    config: str,
    kinds: Sequence[MaxVolumeKind],
    options: RunOptions = RunOptions(),
) -> list[CoverageRow]:
    """All rows for one configuration (optionally ``<label>@<group>``) against ``kinds``."""
    label, group = _split_group(config)
    try:
        fov = ctx.fov_tree(label, group)
    except CoverageError as exc:
        logger.warning("config %s failed: %s", config, exc)
        return [_result_row(ctx, config, kind, None, exc.code) for kind in kinds]

    out_dir = ctx.spec.output_dir
    if options.dump_octrees:
        _write_octree(out_dir / "octrees" / f"fov_{_dump_name(config)}.oct", fov)
    rows = []
    for kind in kinds:
        vmax = format_vmax_kind(kind)
        try:
            reference = ctx.vmax_tree(kind)
            warnings: tuple[str, ...] = ()
            if isinstance(kind, Shell):
                warning = curvature_warning(ctx.curve, kind.r_shell)
                warnings = (warning,) if warning else ()
            result = coverage(
                reference,
                fov,
                ctx.self_volume,
                vmax_excludes_vr=True,
                config_label=config,
                vmax_kind=kind,
                pose_id=ctx.spec.task.pose_id,
                warnings=warnings,
            )
        except CoverageError as exc:
            logger.warning("row %s / %s failed: %s", config, vmax, exc)
            rows.append(_result_row(ctx, config, kind, None, exc.code))
            continue
        vmax_dump = out_dir / "octrees" / f"vmax_{_dump_name(vmax)}.oct"
        if options.dump_octrees and not vmax_dump.exists():
            _write_octree(vmax_dump, reference)
        if options.dump_leftover:
            write_leftover_points(
                out_dir / "leftover" / f"{_dump_name(config)}__{_dump_name(vmax)}.csv",
                subtract(reference, fov),
            )
        rows.append(_result_row(ctx, config, kind, result, ""))
    logger.info("evaluated %s against %d V_max kind(s)", config, len(kinds))
    return rows


def _write_octree(path: Path, tree: Octree) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(tree.to_bytes())


def _evaluate_in_worker(
    spec: ExperimentSpec, config: str, kinds: tuple[MaxVolumeKind, ...], options: RunOptions
) -> list[CoverageRow]:
    return evaluate_config(sweep_context(spec), config, kinds, options)


def coverage_by_group(
    ctx: SweepContext, label: str, kind: MaxVolumeKind
) -> dict[str, CoverageResult]:
    """Coverage of ``kind`` by the rings of each mounting group on their own."""
    reference = ctx.vmax_tree(kind)
    results = {}
    for group in LINK_ROLES:
        results[group] = coverage(
            reference,
            ctx.fov_tree(label, group),
            ctx.self_volume,
            vmax_excludes_vr=True,
            config_label=f"{label}{GROUP_SEPARATOR}{group}",
            vmax_kind=kind,
            pose_id=ctx.spec.task.pose_id,
        )
    return results


def read_records(path: Path, columns: Sequence[str]) -> list[dict[str, str]]:
    if not path.exists():
        return []
    with path.open(encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        if tuple(reader.fieldnames or ()) != tuple(columns):
            raise CoverageError(
                code="INVALID_RESULTS_CSV",
                message=f"Existing results file has unexpected columns: {path}",
                details={"expected": list(columns), "actual": list(reader.fieldnames or ())},
            )
        return list(reader)


def write_records(path: Path, columns: Sequence[str], records: Iterable[dict[str, str]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".new")
    with tmp.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        writer.writerows(records)
    os.replace(tmp, path)


def run_sweep(
    spec: ExperimentSpec,
    name: str,
    configs: Sequence[str],
    kinds: Sequence[MaxVolumeKind],
    options: RunOptions = RunOptions(),
) -> list[CoverageRow]:
    """Evaluate every (config, kind) pair missing from ``<output_dir>/<name>.csv``.

    Rows are independent work items; results are collected and written once in
    sorted order so the file does not depend on completion order.
    """
    out_dir = resolve_output_dir(spec.output_dir)
    spec = replace(spec, output_dir=out_dir)
    path = out_dir / f"{name}.csv"
    domain = spec.domain.build(spec.load_model())

    existing = {} if options.force else {
        r["row_key"]: r for r in read_records(path, COVERAGE_COLUMNS) if not r["error_code"]
    }
    todo: list[tuple[str, tuple[MaxVolumeKind, ...]]] = []
    kept: dict[tuple[str, str], dict[str, str]] = {}
    for config in configs:
        missing = []
        for kind in kinds:
            vmax = format_vmax_kind(kind)
            record = existing.get(row_key(spec, domain, config, vmax))
            if record is None:
                missing.append(kind)
            else:
                kept[(config, vmax)] = record
        if missing:
            todo.append((config, tuple(missing)))
        else:
            logger.debug("skipping %s: all rows present in %s", config, path.name)
    logger.info(
        "%s: %d config(s) to evaluate, %d row(s) reused", name, len(todo), len(kept)
    )

    fresh: list[CoverageRow] = []
    if options.workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=min(options.workers, len(todo))) as executor:
            futures = [
                executor.submit(_evaluate_in_worker, spec, config, missing, options)
                for config, missing in todo
            ]
            for future in as_completed(futures):
                fresh.extend(future.result())
    else:
        ctx = sweep_context(spec)
        for config, missing in todo:
            fresh.extend(evaluate_config(ctx, config, missing, options))

    records = dict(kept)
    for row in fresh:
        records[(row.config, row.vmax)] = row.to_record()
    ordered = [records[key] for key in sorted(records, key=lambda k: row_sort_key(*k))]
    write_records(path, COVERAGE_COLUMNS, ordered)
    return [CoverageRow.from_record(r) for r in ordered]


def run_config_sweep(spec: ExperimentSpec, options: RunOptions = RunOptions()) -> list[CoverageRow]:
    configs = list(spec.configs)
    if options.by_group:
        configs += [f"{c}{GROUP_SEPARATOR}{g}" for c in spec.configs for g in LINK_ROLES]
    return run_sweep(spec, CONFIG_SWEEP, configs, spec.vmax_kinds, options)


def run_theta_sweep(
    spec: ExperimentSpec,
    theta_range: Sequence[int] | None = None,
    options: RunOptions = RunOptions(),
) -> list[CoverageRow]:
    sweep = spec.theta_sweep
    if theta_range is not None:
        sweep = replace(sweep, thetas=tuple(theta_range))
    return run_sweep(spec, THETA_SWEEP, sweep.labels(), spec.vmax_kinds, options)


def run_shell_sweep(
    spec: ExperimentSpec,
    radii: Sequence[float] | None = None,
    options: RunOptions = RunOptions(),
) -> list[CoverageRow]:
    radii = tuple(radii) if radii is not None else spec.shell_sweep.radii
    model = spec.load_model()
    bad = [r for r in radii if r <= model.self_occupancy_radius]
    if bad:
        raise CoverageError(
            code="SHELL_INSIDE_ROBOT",
            message="Shell radii must exceed the robot self-occupancy radius.",
            details={"radii": bad, "self_radius": model.self_occupancy_radius},
        )
    configs = spec.theta_sweep.labels() + [
        c for c in spec.shell_sweep.extra_configs if c not in spec.theta_sweep.labels()
    ]
    kinds = [Shell(r) for r in radii]
    return run_sweep(spec, SHELL_SWEEP, configs, kinds, options)


def theta_trend(rows: Iterable[CoverageRow], vmax: str) -> float:
    """Spearman rank correlation of zeta against theta for one V_max; NaN if undefined."""
    points = sorted(
        (row.theta_deg, row.zeta_percent)
        for row in rows
        if row.vmax == vmax
        and row.ok
        and row.theta_deg is not None
        and row.zeta_percent is not None
        and GROUP_SEPARATOR not in row.config
    )
    if len(points) < 2:
        return math.nan
    thetas, zetas = zip(*points, strict=True)
    if len(set(zetas)) < 2:
        return math.nan
    rho = spearmanr(thetas, zetas).statistic
    return float(rho)


@dataclass(frozen=True)
class ProbeRow:
    result: ProbeResult
    seed: int
    pose_phase: float

    def to_record(self) -> dict[str, str]:
        res = self.result
        return {
            "config": res.config,
            "object_radius_m": f"{res.object_radius:g}",
            "rmse_m": format_metric(res.rmse),
            "max_error_m": format_metric(res.max_error),
            "seen_fraction": f"{res.seen_fraction:.4f}",
            "rmse_clamped_m": format_metric(res.rmse_clamped),
            "rmse_near_m": format_metric(res.zone_rmse.get("near")),
            "rmse_mid_m": format_metric(res.zone_rmse.get("mid")),
            "rmse_far_m": format_metric(res.zone_rmse.get("far")),
            "waypoints": str(res.waypoints),
            "seed": str(self.seed),
            "pose_phase": f"{self.pose_phase:g}",
            "code_version": __version__,
        }

    @classmethod
    def from_record(cls, record: dict[str, str]) -> ProbeRow:
        try:
            result = ProbeResult(
                config=record["config"],
                object_radius=float(record["object_radius_m"]),
                rmse=parse_metric(record["rmse_m"]),
                max_error=parse_metric(record["max_error_m"]),
                seen_fraction=float(record["seen_fraction"]),
                rmse_clamped=float(record["rmse_clamped_m"]),
                zone_rmse={
                    zone: parse_metric(record[f"rmse_{zone}_m"]) for zone in ("near", "mid", "far")
                },
                waypoints=int(record["waypoints"]),
            )
            return cls(result, int(record["seed"]), float(record["pose_phase"]))
        except (KeyError, ValueError) as exc:
            raise CoverageError(
                code="INVALID_RESULTS_CSV",
                message="Results CSV row does not match the probe schema.",
                details={"record": record, "error": str(exc)},
            ) from exc


def run_min_distance_probe(
    spec: ExperimentSpec,
    probe: ProbeSpec | None = None,
    config_labels: Sequence[str] | None = None,
    *,
    write: bool = True,
) -> list[ProbeRow]:
    probe = replace(probe or spec.probe, seed=spec.seed)
    labels = list(config_labels) if config_labels is not None else list(spec.probe_configs)
    ctx = sweep_context(spec)
    rows = []
    for label in sorted(labels, key=label_sort_key):
        sensors = ctx.sensors(label)
        for radius in probe.radii:
            result = probe_config(label, sensors, ctx.self_solid, probe, radius)
            rows.append(ProbeRow(result, probe.seed, spec.task.phase))
    if write:
        out_dir = resolve_output_dir(spec.output_dir)
        write_records(out_dir / f"{PROBE}.csv", PROBE_COLUMNS, (r.to_record() for r in rows))
    return rows


def load_rows(path: Path) -> list[CoverageRow]:
    return [CoverageRow.from_record(r) for r in read_records(path, COVERAGE_COLUMNS)]


def load_probe_rows(path: Path) -> list[ProbeRow]:
    return [ProbeRow.from_record(r) for r in read_records(path, PROBE_COLUMNS)]

