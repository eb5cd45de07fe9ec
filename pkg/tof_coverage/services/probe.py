from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from tof_coverage.errors import CoverageError
from tof_coverage.services.geometry import FloatArray, Vec3
from tof_coverage.services.sensor_rings import PlacedSensor
from tof_coverage.services.solids import TubeShell

logger = logging.getLogger(__name__)

NOT_APPLICABLE = "n/a"
FAN_RAYS_PER_RING = 8
DEFAULT_BAND = (0.3, 1.5)
# Ground-truth distance zones (near < 0.5 m, middle < 1.1 m, far beyond).
ZONE_EDGES = (0.5, 1.1)
ZONE_NAMES = ("near", "mid", "far")
_MAX_DRAW_ROUNDS = 200


@dataclass(frozen=True)
class ProbeSpec:
    """Spherical probe object moved through ``trajectory``.

    When ``trajectory`` is None, ``samples`` waypoints are drawn from ``band``
    (distance from the robot pose curve) with ``seed``.
    """

    object_radius: float = 0.1
    trajectory: tuple[Vec3, ...] | None = None
    samples: int = 200
    band: tuple[float, float] = DEFAULT_BAND
    seed: int = 0
    fan: bool = True
    object_radii: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.object_radius <= 0.0 or any(r <= 0.0 for r in self.object_radii):
            raise CoverageError(
                code="INVALID_PROBE",
                message="Probe object radius must be positive.",
                details={"object_radius": self.object_radius, "object_radii": self.object_radii},
            )
        if self.samples < 1:
            raise CoverageError(
                code="INVALID_PROBE",
                message="Probe samples must be >= 1.",
                details={"samples": self.samples},
            )
        low, high = self.band
        if not 0.0 <= low < high:
            raise CoverageError(
                code="INVALID_PROBE",
                message="Probe band must satisfy 0 <= low < high.",
                details={"band": list(self.band)},
            )

    @property
    def radii(self) -> tuple[float, ...]:
        return self.object_radii or (self.object_radius,)


@dataclass(frozen=True)
class ProbeResult:
    config: str
    object_radius: float
    rmse: float | None
    max_error: float | None
    seen_fraction: float
    rmse_clamped: float
    zone_rmse: dict[str, float | None] = field(default_factory=dict)
    waypoints: int = 0


def ray_fan(sensor: PlacedSensor, half_angle: float, fan: bool = True) -> FloatArray:
    """Unit ray directions: the sensor axis, then 8 rays at ``half_angle`` and
    8 at ``half_angle / 2`` when ``fan`` is set."""
    axis = sensor.pose.axis(2).as_array()
    if not fan:
        return axis[None, :]
    x_axis = sensor.pose.axis(0).as_array()
    y_axis = sensor.pose.axis(1).as_array()
    phi = 2.0 * math.pi * np.arange(FAN_RAYS_PER_RING) / FAN_RAYS_PER_RING
    around = np.cos(phi)[:, None] * x_axis + np.sin(phi)[:, None] * y_axis
    rays = [axis[None, :]]
    for angle in (half_angle, half_angle / 2.0):
        rays.append(math.cos(angle) * axis + math.sin(angle) * around)
    return np.vstack(rays)


def ray_sphere_hits(
    origins: FloatArray, directions: FloatArray, centers: FloatArray, radius: float
) -> FloatArray:
    """Entry distance of every ray (R) against every sphere (W), shape (W, R).

    ``inf`` marks a miss; a ray starting inside a sphere hits at 0.
    """
    offset = centers[:, None, :] - origins[None, :, :]
    b = np.einsum("wrk,rk->wr", offset, directions)
    c = np.einsum("wrk,wrk->wr", offset, offset) - radius**2
    disc = b**2 - c
    with np.errstate(invalid="ignore"):
        t = b - np.sqrt(disc)
    hits = np.where((disc >= 0.0) & (t >= 0.0), t, np.inf)
    return np.where(c <= 0.0, 0.0, hits)


def measured_distances(
    sensors: list[PlacedSensor], centers: FloatArray, radius: float, *, fan: bool = True
) -> FloatArray:
    """Per waypoint, the smallest in-range ray hit over every sensor; ``inf`` if unseen."""
    if not sensors:
        raise CoverageError(code="EMPTY_SENSOR_LIST", message="Probe needs at least one sensor.")
    origins = []
    directions = []
    ranges = []
    for sensor in sensors:
        rays = ray_fan(sensor, sensor.cone.half_angle, fan)
        origins.append(np.repeat(sensor.position.as_array()[None, :], len(rays), axis=0))
        directions.append(rays)
        ranges.append(np.full(len(rays), sensor.cone.height))
    t = ray_sphere_hits(np.vstack(origins), np.vstack(directions), centers, radius)
    t = np.where(t <= np.concatenate(ranges)[None, :], t, np.inf)
    return t.min(axis=1)


def generate_trajectory(probe: ProbeSpec, robot: TubeShell, radius: float) -> FloatArray:
    """Seeded waypoints whose distance from the pose curve lies in ``probe.band``
    and whose probe sphere stays clear of the robot volume."""
    if probe.trajectory is not None:
        if not probe.trajectory:
            raise CoverageError(code="EMPTY_TRAJECTORY", message="Probe trajectory is empty.")
        waypoints = np.array([p.as_array() for p in probe.trajectory])
        clash = np.flatnonzero(robot.curve_distances(waypoints) < robot.r_outer + radius)
        if clash.size:
            raise CoverageError(
                code="TRAJECTORY_INSIDE_ROBOT",
                message=f"{clash.size} probe waypoint(s) overlap the robot volume.",
                details={"indices": clash[:10].tolist(), "clearance": robot.r_outer + radius},
            )
        return waypoints
    rng = np.random.default_rng(probe.seed)
    low, high = probe.band
    low = max(low, robot.r_outer + radius)
    if low >= high:
        raise CoverageError(
            code="INVALID_PROBE",
            message="Probe band leaves no room outside the robot volume.",
            details={"band": list(probe.band), "robot_radius": robot.r_outer, "radius": radius},
        )
    curve = robot.curve
    accepted: list[FloatArray] = []
    for _ in range(_MAX_DRAW_ROUNDS):
        batch = 4 * probe.samples
        stations = curve.points_at_arclength(rng.uniform(0.0, curve.total_length, batch))
        directions = rng.normal(size=(batch, 3))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        candidates = stations + directions * rng.uniform(low, high, batch)[:, None]
        dist = robot.curve_distances(candidates)
        accepted.extend(candidates[(dist >= low) & (dist <= high)])
        if len(accepted) >= probe.samples:
            return np.array(accepted[: probe.samples])
    raise CoverageError(
        code="PROBE_SAMPLING_FAILED",
        message="Could not draw enough probe waypoints inside the band.",
        details={"requested": probe.samples, "drawn": len(accepted)},
    )


def _rmse(errors: FloatArray) -> float | None:
    if errors.size == 0:
        return None
    return float(np.sqrt(np.mean(errors**2)))


def probe_config(
    config: str,
    sensors: list[PlacedSensor],
    robot: TubeShell,
    probe: ProbeSpec,
    radius: float | None = None,
) -> ProbeResult:
    radius = probe.object_radius if radius is None else radius
    centers = generate_trajectory(probe, robot, radius)
    truth = np.maximum(robot.curve_distances(centers) - radius, 0.0)
    measured = measured_distances(sensors, centers, radius, fan=probe.fan)
    seen = np.isfinite(measured)
    errors = measured[seen] - truth[seen]
    sensor_range = max(s.cone.height for s in sensors)
    clamped = np.where(seen, measured, sensor_range) - truth

    zone_index = np.digitize(truth, ZONE_EDGES)
    zone_rmse = {
        name: _rmse(measured[seen & (zone_index == i)] - truth[seen & (zone_index == i)])
        for i, name in enumerate(ZONE_NAMES)
    }
    result = ProbeResult(
        config=config,
        object_radius=radius,
        rmse=_rmse(errors),
        max_error=float(np.max(np.abs(errors))) if errors.size else None,
        seen_fraction=float(seen.mean()),
        rmse_clamped=float(np.sqrt(np.mean(clamped**2))),
        zone_rmse=zone_rmse,
        waypoints=len(centers),
    )
    logger.info(
        "probe %s r=%.3g: seen %.1f%% of %d waypoints",
        config,
        radius,
        100.0 * result.seen_fraction,
        result.waypoints,
    )
    return result


def format_metric(value: float | None) -> str:
    return NOT_APPLICABLE if value is None else f"{value:.6f}"


def parse_metric(raw: str) -> float | None:
    return None if raw in ("", NOT_APPLICABLE) else float(raw)
