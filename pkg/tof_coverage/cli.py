from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from collections.abc import Sequence
from dataclasses import replace
from pathlib import Path
from typing import Any

from tof_coverage import __version__
from tof_coverage.errors import CoverageError
from tof_coverage.server import run_server
from tof_coverage.services.config_io import ExperimentSpec, load_experiment
from tof_coverage.services.coverage import format_vmax_kind, parse_vmax_kind
from tof_coverage.services.experiment import (
    CONFIG_SWEEP,
    PROBE,
    SHELL_SWEEP,
    THETA_SWEEP,
    RunOptions,
    run_config_sweep,
    run_min_distance_probe,
    run_shell_sweep,
    run_theta_sweep,
    theta_trend,
)
from tof_coverage.services.report import render_results
from tof_coverage.services.volumetry import SHAPES, build_solid, measure_solid
from tof_coverage.tools.common import handle_tool_error
from tof_coverage.tools.compat import parse_float_list, parse_label_list

logger = logging.getLogger(__name__)

DEFAULT_VOLUME_VOXEL = 0.02
_LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tof-coverage",
        description="Workspace coverage of on-robot ToF sensor rings.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="Experiment YAML file (default: bundled).")
    parser.add_argument("--voxel-size", type=float, help="Leaf voxel edge length in metres.")
    parser.add_argument("--max-depth", type=int, help="Octree depth of the sweep domain.")
    parser.add_argument("--out", help="Output directory for CSV, charts and dumps.")
    parser.add_argument("--force", action="store_true", help="Recompute existing rows.")
    parser.add_argument("--jobs", type=int, help="Worker processes (default: CPU count).")
    parser.add_argument("--seed", type=int, help="Seed for probe trajectories.")
    parser.add_argument(
        "--dump-octrees", action="store_true", help="Write V_FOV/V_max octrees under octrees/."
    )
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=("DEBUG", "INFO", "WARNING", "ERROR"),
        help="Log level for stderr output.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Shorthand for INFO.")

    sub = parser.add_subparsers(dest="command", required=True)

    configs = sub.add_parser("sweep-configs", help="Coverage of each configuration per V_max.")
    configs.add_argument("--configs", help="Labels to evaluate, e.g. n1_8_0,n2_16_25.")
    configs.add_argument("--vmax", help="V_max kinds, e.g. V_O,V_T,V_S:0.5.")
    configs.add_argument(
        "--by-group", action="store_true", help="Add per-link rows (<label>@<group>)."
    )
    configs.add_argument(
        "--dump-leftover", action="store_true", help="Write uncovered voxel centres as CSV."
    )

    theta = sub.add_parser("sweep-theta", help="Coverage against ring tilt for n<i>_<j>_θ.")
    theta.add_argument("--thetas", help="Tilt angles in degrees, e.g. 0,5,10.")
    theta.add_argument("--vmax", help="V_max kinds to evaluate.")
    theta.add_argument("--dump-leftover", action="store_true")

    shell = sub.add_parser("sweep-shell", help="Coverage of shells V_S:r over tilt.")
    shell.add_argument("--radii", help="Shell radii in metres, e.g. 0.5,0.9,1.5.")
    shell.add_argument("--dump-leftover", action="store_true")

    probe = sub.add_parser("probe", help="Minimum-distance error of a moving probe sphere.")
    probe.add_argument("--configs", help="Labels to probe.")
    probe.add_argument("--object-radius", type=float, help="Probe sphere radius in metres.")
    probe.add_argument("--samples", type=int, help="Number of generated waypoints.")
    probe.add_argument("--no-fan", action="store_true", help="Central ray only.")

    volume = sub.add_parser("volume", help="Octree volume of one solid against its analytic.")
    volume.add_argument("shape", choices=SHAPES)
    volume.add_argument("--height", type=float, help="Cone height (sensor range).")
    volume.add_argument("--fov-deg", type=float, help="Full cone angle in degrees.")
    volume.add_argument("--radius", type=float, help="Sphere radius or tube outer radius.")
    volume.add_argument("--r-inner", type=float, help="Tube inner radius.")
    volume.add_argument("--length", type=float, help="Straight tube length.")

    render = sub.add_parser("render", help="Charts and report.docx from results CSV files.")
    render.add_argument(
        "--sweeps",
        help=f"Subset of {CONFIG_SWEEP},{THETA_SWEEP},{SHELL_SWEEP},{PROBE}.",
    )

    serve = sub.add_parser("serve", help="Run the MCP server.")
    serve.add_argument(
        "--transport",
        choices=("stdio", "sse", "streamable-http"),
        default="stdio",
        help="MCP transport type.",
    )
    return parser


def _configure_logging(args: argparse.Namespace) -> None:
    level = "INFO" if args.verbose and args.log_level == "WARNING" else args.log_level
    logging.basicConfig(level=getattr(logging, level), format=_LOG_FORMAT, stream=sys.stderr)


def _load_spec(args: argparse.Namespace) -> ExperimentSpec:
    spec = load_experiment(args.config)
    spec = spec.with_resolution(voxel_size=args.voxel_size, max_depth=args.max_depth)
    return spec.with_overrides(
        output_dir=Path(args.out) if args.out else None,
        jobs=args.jobs,
        seed=args.seed,
    )


def _options(args: argparse.Namespace, spec: ExperimentSpec) -> RunOptions:
    return RunOptions(
        force=args.force,
        jobs=spec.jobs,
        dump_octrees=args.dump_octrees,
        dump_leftover=getattr(args, "dump_leftover", False),
        by_group=getattr(args, "by_group", False),
    )


def _vmax_override(spec: ExperimentSpec, raw: str | None) -> ExperimentSpec:
    kinds = parse_label_list(raw, field="vmax")
    if not kinds:
        return spec
    return spec.with_overrides(vmax_kinds=tuple(parse_vmax_kind(k) for k in kinds))


def _summary(name: str, spec: ExperimentSpec, rows: Sequence[Any]) -> dict[str, Any]:
    failed = sum(1 for row in rows if getattr(row, "error_code", ""))
    return {
        "sweep": name,
        "csv": str(Path(spec.output_dir) / f"{name}.csv"),
        "rows": len(rows),
        "failed_rows": failed,
    }


def _cmd_sweep_configs(args: argparse.Namespace, spec: ExperimentSpec) -> dict[str, Any]:
    labels = parse_label_list(args.configs, field="configs")
    if labels:
        spec = spec.with_overrides(configs=tuple(labels))
    spec = _vmax_override(spec, args.vmax)
    rows = run_config_sweep(spec, _options(args, spec))
    return _summary(CONFIG_SWEEP, spec, rows)


def _cmd_sweep_theta(args: argparse.Namespace, spec: ExperimentSpec) -> dict[str, Any]:
    thetas = parse_float_list(args.thetas, field="thetas")
    spec = _vmax_override(spec, args.vmax)
    theta_range = None
    if thetas is not None:
        theta_range = [int(t) for t in thetas]
        if any(t != int(t) for t in thetas):
            raise CoverageError(
                code="INVALID_THETA",
                message="Tilt angles must be whole degrees.",
                details={"thetas": thetas},
            )
    rows = run_theta_sweep(spec, theta_range, _options(args, spec))
    summary = _summary(THETA_SWEEP, spec, rows)
    trends = {}
    for kind in spec.vmax_kinds:
        name = format_vmax_kind(kind)
        rho = theta_trend(rows, name)
        trends[name] = None if math.isnan(rho) else round(rho, 6)
    summary["spearman_theta"] = trends
    return summary


def _cmd_sweep_shell(args: argparse.Namespace, spec: ExperimentSpec) -> dict[str, Any]:
    radii = parse_float_list(args.radii, field="radii")
    rows = run_shell_sweep(spec, radii, _options(args, spec))
    return _summary(SHELL_SWEEP, spec, rows)


def _cmd_probe(args: argparse.Namespace, spec: ExperimentSpec) -> dict[str, Any]:
    probe = spec.probe
    if args.object_radius is not None:
        probe = replace(probe, object_radius=args.object_radius, object_radii=())
    if args.samples is not None:
        probe = replace(probe, samples=args.samples)
    if args.no_fan:
        probe = replace(probe, fan=False)
    labels = parse_label_list(args.configs, field="configs")
    rows = run_min_distance_probe(spec, probe, labels)
    return _summary(PROBE, spec, rows) | {"results": [row.to_record() for row in rows]}


def _cmd_volume(args: argparse.Namespace) -> dict[str, Any]:
    options: dict[str, Any] = {
        "height": args.height,
        "fov_deg": args.fov_deg,
        "radius": args.radius,
        "r_inner": args.r_inner,
    }
    if args.length is not None:
        options["points"] = [(0.0, 0.0, 0.0), (0.0, 0.0, args.length)]
    solid, analytic = build_solid(
        args.shape, **{k: v for k, v in options.items() if v is not None}
    )
    voxel = args.voxel_size if args.voxel_size is not None else DEFAULT_VOLUME_VOXEL
    return measure_solid(solid, analytic, voxel)


def _cmd_render(args: argparse.Namespace, spec: ExperimentSpec) -> dict[str, Any]:
    return render_results(Path(spec.output_dir), parse_label_list(args.sweeps, field="sweeps"))


_SPEC_COMMANDS = {
    "sweep-configs": _cmd_sweep_configs,
    "sweep-theta": _cmd_sweep_theta,
    "sweep-shell": _cmd_sweep_shell,
    "probe": _cmd_probe,
    "render": _cmd_render,
}


def run(args: argparse.Namespace) -> dict[str, Any] | None:
    if args.command == "serve":
        run_server(transport=args.transport)
        return None
    if args.command == "volume":
        return _cmd_volume(args)
    return _SPEC_COMMANDS[args.command](args, _load_spec(args))


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    _configure_logging(args)
    try:
        result = run(args)
    except Exception as exc:
        logger.debug("command %s failed", args.command, exc_info=True)
        print(json.dumps(handle_tool_error(exc), default=str), file=sys.stderr)
        return 2 if isinstance(exc, CoverageError) else 1
    if result is not None:
        print(json.dumps({"ok": True, "result": result}, indent=2, default=str))
    return 0
