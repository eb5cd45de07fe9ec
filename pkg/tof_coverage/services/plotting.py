from __future__ import annotations

import csv
import logging
from collections import defaultdict
from collections.abc import Sequence
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from tof_coverage.errors import CoverageError  # noqa: E402
from tof_coverage.services.coverage import kind_sort_key, parse_vmax_kind  # noqa: E402
from tof_coverage.services.experiment import (  # noqa: E402
    CONFIG_SWEEP,
    GROUP_SEPARATOR,
    PROBE,
    SHELL_SWEEP,
    THETA_SWEEP,
    CoverageRow,
    ProbeRow,
)
from tof_coverage.services.sensor_rings import label_sort_key, split_label  # noqa: E402

logger = logging.getLogger(__name__)

# Deterministic SVG output (no timestamps, stable element ids).
plt.rcParams["svg.hashsalt"] = "tof-coverage"
plt.rcParams["svg.fonttype"] = "none"
_SVG_METADATA = {"Date": None}


def _vmax_order(names: set[str]) -> list[str]:
    return sorted(names, key=lambda v: kind_sort_key(parse_vmax_kind(v)))


def _pivot(
    rows: Sequence[CoverageRow], key: str
) -> tuple[list[str], list[str], dict[tuple[str, str], float]]:
    table: dict[tuple[str, str], float] = {}
    columns: set[str] = set()
    index: set[str] = set()
    for row in rows:
        if row.zeta_percent is None or GROUP_SEPARATOR in row.config:
            continue
        idx = row.config if key == "config" else str(row.theta_deg)
        index.add(idx)
        columns.add(row.vmax)
        table[(idx, row.vmax)] = row.zeta_percent
    if key == "config":
        ordered = sorted(index, key=label_sort_key)
    else:
        ordered = sorted(index, key=int)
    return ordered, _vmax_order(columns), table


def _cells(table: dict[tuple[str, str], float], idx: str, columns: list[str]) -> list[str]:
    return [idx, *(f"{table[(idx, c)]:.4f}" if (idx, c) in table else "" for c in columns)]


def _write_data(path: Path, header: Sequence[str], body: Sequence[Sequence[str]]) -> None:
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(body)


def _save(fig: plt.Figure, path: Path) -> None:
    try:
        fig.savefig(path, format="svg", metadata=_SVG_METADATA)
    except OSError as exc:
        raise CoverageError(
            code="PLOT_WRITE_FAILED",
            message=f"Failed to write chart: {path}",
            details={"error": str(exc)},
        ) from exc
    finally:
        plt.close(fig)


def _bar_chart(rows: Sequence[CoverageRow], out_dir: Path, stem: str) -> list[Path]:
    configs, vmaxes, table = _pivot(rows, "config")
    data_path = out_dir / f"{stem}_plot.csv"
    _write_data(
        data_path,
        ["config", *vmaxes],
        [_cells(table, c, vmaxes) for c in configs],
    )
    fig, ax = plt.subplots(figsize=(max(6.0, 1.2 * len(configs)), 4.0))
    width = 0.8 / max(len(vmaxes), 1)
    x = np.arange(len(configs))
    for i, vmax in enumerate(vmaxes):
        heights = [table.get((c, vmax), np.nan) for c in configs]
        ax.bar(x + (i - (len(vmaxes) - 1) / 2) * width, heights, width, label=vmax)
    ax.set_xticks(x, configs, rotation=30, ha="right")
    ax.set_ylabel("coverage ζ [%]")
    ax.set_ylim(0, 100)
    ax.legend(title="V_max", fontsize="small", ncols=2)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    chart = out_dir / f"{stem}.svg"
    _save(fig, chart)
    return [data_path, chart]


def _theta_chart(
    rows: Sequence[CoverageRow], out_dir: Path, stem: str, legend: str
) -> list[Path]:
    # Only the n{i}_{j}_θ family shared by most rows forms the θ axis.
    families: dict[tuple[int, int], list[CoverageRow]] = defaultdict(list)
    extras: list[CoverageRow] = []
    for row in rows:
        if row.zeta_percent is None or GROUP_SEPARATOR in row.config:
            continue
        parts = split_label(row.config)
        families[(parts.rings, parts.sensors)].append(row)
    main = max(families, key=lambda k: (len(families[k]), k), default=None)
    line_rows = families.get(main, []) if main else []
    for key, members in families.items():
        if key != main:
            extras.extend(members)

    thetas, vmaxes, table = _pivot(line_rows, "theta")
    data_path = out_dir / f"{stem}_plot.csv"
    _write_data(data_path, ["theta_deg", *vmaxes], [_cells(table, t, vmaxes) for t in thetas])

    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    for vmax in vmaxes:
        ax.plot(
            [int(t) for t in thetas],
            [table.get((t, vmax), np.nan) for t in thetas],
            marker="o",
            label=vmax,
        )
    for row in sorted(extras, key=lambda r: (label_sort_key(r.config), r.vmax)):
        ax.scatter([row.theta_deg], [row.zeta_percent], marker="x", color="black")
        ax.annotate(
            f"{row.config} {row.vmax}",
            (row.theta_deg or 0, row.zeta_percent or 0),
            fontsize="x-small",
            xytext=(3, 3),
            textcoords="offset points",
        )
    family = f"n{main[0]}_{main[1]}_θ" if main else ""
    ax.set_title(family)
    ax.set_xlabel("tilt θ [deg]")
    ax.set_ylabel("coverage ζ [%]")
    ax.set_ylim(0, 100)
    ax.legend(title=legend, fontsize="small")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    chart = out_dir / f"{stem}.svg"
    _save(fig, chart)
    return [data_path, chart]


def _probe_chart(rows: Sequence[ProbeRow], out_dir: Path) -> list[Path]:
    records = [r.to_record() for r in rows]
    data_path = out_dir / "probe_plot.csv"
    header = ["config", "object_radius_m", "rmse_m", "max_error_m", "seen_fraction"]
    _write_data(data_path, header, [[rec[h] for h in header] for rec in records])

    labels = [f"{r.result.config}\nr={r.result.object_radius:g}" for r in rows]
    rmse = [np.nan if r.result.rmse is None else r.result.rmse for r in rows]
    max_err = [np.nan if r.result.max_error is None else r.result.max_error for r in rows]
    x = np.arange(len(rows))
    fig, ax = plt.subplots(figsize=(max(6.0, 1.2 * len(rows)), 4.0))
    ax.bar(x - 0.2, rmse, 0.4, label="RMSE")
    ax.bar(x + 0.2, max_err, 0.4, label="max error")
    ax.set_xticks(x, labels)
    ax.set_ylabel("distance error [m]")
    ax.legend(fontsize="small")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    chart = out_dir / "probe.svg"
    _save(fig, chart)
    return [data_path, chart]


def emit_plot_data(
    rows: Sequence[CoverageRow] | Sequence[ProbeRow], sweep: str, out_dir: Path
) -> list[Path]:
    """Write the per-figure data file and SVG chart for one sweep; returns both paths."""
    out_dir.mkdir(parents=True, exist_ok=True)
    if not rows:
        raise CoverageError(
            code="NO_ROWS",
            message=f"No rows to plot for {sweep}.",
            details={"sweep": sweep},
        )
    if sweep == CONFIG_SWEEP:
        paths = _bar_chart(rows, out_dir, sweep)  # type: ignore[arg-type]
    elif sweep == THETA_SWEEP:
        paths = _theta_chart(rows, out_dir, sweep, "V_max")  # type: ignore[arg-type]
    elif sweep == SHELL_SWEEP:
        paths = _theta_chart(rows, out_dir, sweep, "r_S")  # type: ignore[arg-type]
    elif sweep == PROBE:
        paths = _probe_chart(rows, out_dir)  # type: ignore[arg-type]
    else:
        raise CoverageError(
            code="UNKNOWN_SWEEP",
            message=f"Unknown sweep: {sweep}",
            details={"supported": [CONFIG_SWEEP, THETA_SWEEP, SHELL_SWEEP, PROBE]},
        )
    logger.info("wrote %s", ", ".join(p.name for p in paths))
    return paths
