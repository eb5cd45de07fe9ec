from __future__ import annotations

import math
from dataclasses import asdict
from typing import Any

from mcp.server.fastmcp import FastMCP

from tof_coverage.errors import CoverageError
from tof_coverage.services.config_io import load_experiment
from tof_coverage.services.coverage import curvature_warning, parse_vmax_kind
from tof_coverage.services.coverage import pappus_shell_volume as pappus_volume
from tof_coverage.services.curves import build_piecewise_bezier
from tof_coverage.services.experiment import RunOptions, evaluate_config, sweep_context
from tof_coverage.services.geometry import Vec3
from tof_coverage.services.sensor_rings import parse_config_label
from tof_coverage.services.volumetry import build_solid, measure_solid
from tof_coverage.tools.common import handle_tool_error
from tof_coverage.tools.compat import (
    parse_bool,
    parse_float,
    parse_optional_float,
    parse_optional_int,
    parse_points,
)


def register_coverage_tools(mcp: FastMCP) -> None:
    @mcp.tool(
        name="parse_config_label",
        description=(
            "Expand a ring configuration label n<i>_<j>_<theta> into its ring placements "
            "and total sensor count."
        ),
    )
    def parse_config_label_tool(label: str) -> dict[str, Any]:
        try:
            config = parse_config_label(label)
            return {
                "ok": True,
                "result": {
                    "label": config.label,
                    "sensor_count": config.sensor_count,
                    "rings": [
                        {
                            "link": ring.link,
                            "axial_position": ring.axial_position,
                            "tilt_deg": round(math.degrees(ring.tilt_theta), 9),
                            "tilt_sign": ring.tilt_sign,
                            "sensor_count": ring.sensor_count,
                            "ring_radius": ring.ring_radius,
                        }
                        for ring in config.rings
                    ],
                },
            }
        except Exception as exc:  # pragma: no cover - thin wrapper
            return handle_tool_error(exc)

    @mcp.tool(
        name="solid_volume",
        description=(
            "Voxelize a single cone, sphere or tube at the given voxel size and compare "
            "the octree volume against the analytic one."
        ),
    )
    def solid_volume_tool(
        shape: str,
        voxel_size: float | int | str = 0.02,
        height: float | int | str | None = None,
        fov_deg: float | int | str | None = None,
        radius: float | int | str | None = None,
        r_inner: float | int | str | None = None,
        points: list[list[float]] | str | None = None,
    ) -> dict[str, Any]:
        try:
            options: dict[str, Any] = {
                "height": parse_optional_float(height, field="height"),
                "fov_deg": parse_optional_float(fov_deg, field="fov_deg"),
                "radius": parse_optional_float(radius, field="radius"),
                "r_inner": parse_optional_float(r_inner, field="r_inner"),
                "points": parse_points(points, field="points"),
            }
            solid, analytic = build_solid(
                shape.strip().lower(), **{k: v for k, v in options.items() if v is not None}
            )
            return {
                "ok": True,
                "result": measure_solid(
                    solid, analytic, parse_float(voxel_size, field="voxel_size")
                ),
            }
        except Exception as exc:  # pragma: no cover - thin wrapper
            return handle_tool_error(exc)

    @mcp.tool(
        name="pappus_shell_volume",
        description=(
            "Analytic volume of a tube shell around a piecewise Bezier curve through "
            "the given points: pi (r_outer^2 - r_inner^2) times the curve length."
        ),
    )
    def pappus_shell_volume_tool(
        points: list[list[float]] | str,
        r_inner: float | int | str,
        r_outer: float | int | str,
        interpolation_factor: float | int | str | None = None,
    ) -> dict[str, Any]:
        try:
            parsed = parse_points(points, field="points") or []
            factor = parse_optional_float(interpolation_factor, field="interpolation_factor")
            curve = (
                build_piecewise_bezier([Vec3(*p) for p in parsed])
                if factor is None
                else build_piecewise_bezier([Vec3(*p) for p in parsed], factor)
            )
            outer = parse_float(r_outer, field="r_outer")
            return {
                "ok": True,
                "result": {
                    "volume_m3": pappus_volume(
                        curve, parse_float(r_inner, field="r_inner"), outer
                    ),
                    "arclength_m": curve.total_length,
                    "bezier_segments": curve.bezier_count,
                    "warning": curvature_warning(curve, outer),
                },
            }
        except Exception as exc:  # pragma: no cover - thin wrapper
            return handle_tool_error(exc)

    @mcp.tool(
        name="config_coverage",
        description=(
            "Coverage zeta of one ring configuration against one reference volume "
            "(V_O, V_T, V_OT or V_S:<radius>) at the experiment's task pose."
        ),
    )
    def config_coverage_tool(
        label: str,
        vmax: str = "V_OT",
        config_path: str | None = None,
        max_depth: int | str | None = None,
        voxel_size: float | int | str | None = None,
        early_out: bool | str | None = None,
    ) -> dict[str, Any]:
        try:
            spec = load_experiment(config_path or None)
            if early_out is not None:
                spec = spec.with_overrides(early_out=parse_bool(early_out, field="early_out"))
            depth = parse_optional_int(max_depth, field="max_depth")
            size = parse_optional_float(voxel_size, field="voxel_size")
            spec = spec.with_resolution(voxel_size=size, max_depth=depth)
            kind = parse_vmax_kind(vmax)
            (row,) = evaluate_config(sweep_context(spec), label.strip(), [kind], RunOptions())
            if not row.ok:
                raise CoverageError(
                    code=row.error_code,
                    message=f"Coverage of {label} against {vmax} failed.",
                    details={"label": label, "vmax": vmax},
                )
            result = asdict(row)
            result["warnings"] = list(row.warnings)
            return {"ok": True, "result": result}
        except Exception as exc:  # pragma: no cover - thin wrapper
            return handle_tool_error(exc)
