from __future__ import annotations

import csv
import math
from collections.abc import Sequence
from dataclasses import replace
from pathlib import Path

import pytest

from tof_coverage.errors import CoverageError
from tof_coverage.services import experiment
from tof_coverage.services.config_io import ExperimentSpec, ThetaSweepSpec, load_experiment
from tof_coverage.services.coverage import (
    MaxVolumeKind,
    OperatingWorkspace,
    Shell,
    coverage,
    format_vmax_kind,
)
from tof_coverage.services.experiment import (
    CONFIG_SWEEP,
    COVERAGE_COLUMNS,
    PROBE_COLUMNS,
    CoverageRow,
    RunOptions,
    SweepContext,
    coverage_by_group,
    load_probe_rows,
    run_config_sweep,
    run_min_distance_probe,
    run_shell_sweep,
    run_sweep,
    run_theta_sweep,
    sweep_context,
    theta_trend,
)
from tof_coverage.services.octree import Octree, full_octree
from tof_coverage.services.probe import ProbeSpec

SERIAL = RunOptions(jobs=1)


def _csv_rows(path: Path) -> list[dict[str, str]]:
    with path.open(encoding="utf-8", newline="") as handle:
        return list(csv.DictReader(handle))


def _zeta(rows: Sequence[CoverageRow], config: str, vmax: str) -> float:
    (row,) = [r for r in rows if r.config == config and r.vmax == vmax]
    assert row.zeta_percent is not None
    return row.zeta_percent


def _row(config: str, theta: int | None, zeta: float, vmax: str = "V_O") -> CoverageRow:
    return CoverageRow(
        config=config,
        vmax=vmax,
        r_param=1.3,
        theta_deg=theta,
        zeta_percent=zeta,
        lambda_vmax_m3=1.0,
        lambda_leftover_m3=0.5,
        voxel_size_m=0.2,
        max_depth=5,
        pose_phase=0.5,
    )


def test_config_sweep_writes_sorted_rows(small_spec: ExperimentSpec) -> None:
    rows = run_config_sweep(small_spec, SERIAL)
    path = small_spec.output_dir / f"{CONFIG_SWEEP}.csv"
    header = path.read_text(encoding="utf-8").splitlines()[0]
    assert header == ",".join(COVERAGE_COLUMNS)
    assert [(r.config, r.vmax) for r in rows] == [
        ("n1_8_0", "V_O"),
        ("n1_8_0", "V_S:0.5"),
        ("n1_16_0", "V_O"),
        ("n1_16_0", "V_S:0.5"),
    ]
    assert all(r.ok for r in rows)
    assert all(0.0 <= (r.zeta_percent or 0.0) <= 100.0 for r in rows)
    assert {r.max_depth for r in rows} == {5}
    assert {r.voxel_size_m for r in rows} == {0.2}
    assert [r["config"] for r in _csv_rows(path)] == [r.config for r in rows]


def test_denser_ring_never_covers_less(small_spec: ExperimentSpec) -> None:
    rows = run_config_sweep(small_spec, SERIAL)
    for vmax in ("V_O", "V_S:0.5"):
        assert _zeta(rows, "n1_16_0", vmax) >= _zeta(rows, "n1_8_0", vmax)


def test_rerun_is_byte_identical(small_spec: ExperimentSpec) -> None:
    run_config_sweep(small_spec, SERIAL)
    path = small_spec.output_dir / f"{CONFIG_SWEEP}.csv"
    first = path.read_bytes()
    run_config_sweep(small_spec, RunOptions(jobs=1, force=True))
    assert path.read_bytes() == first


def test_existing_rows_are_reused(
    small_spec: ExperimentSpec, monkeypatch: pytest.MonkeyPatch
) -> None:
    run_config_sweep(small_spec, SERIAL)
    calls: list[str] = []
    original = experiment.evaluate_config

    def tracking(
        ctx: SweepContext,
        config: str,
        kinds: Sequence[MaxVolumeKind],
        options: RunOptions = SERIAL,
    ) -> list[CoverageRow]:
        calls.append(config)
        return original(ctx, config, kinds, options)

    monkeypatch.setattr(experiment, "evaluate_config", tracking)
    rows = run_config_sweep(small_spec, SERIAL)
    assert calls == []
    assert len(rows) == 4

    grown = small_spec.with_overrides(configs=(*small_spec.configs, "n2_16_25"))
    rows = run_config_sweep(grown, SERIAL)
    assert calls == ["n2_16_25"]
    assert [r.config for r in rows][-2:] == ["n2_16_25", "n2_16_25"]

    run_config_sweep(grown, RunOptions(jobs=1, force=True))
    assert calls[1:] == ["n1_8_0", "n1_16_0", "n2_16_25"]


def test_failed_rows_are_recorded_and_retried(
    small_spec: ExperimentSpec, monkeypatch: pytest.MonkeyPatch
) -> None:
    rows = run_sweep(small_spec, "custom", ["n1_8_0"], [Shell(0.1)], SERIAL)
    (row,) = rows
    assert row.error_code == "SHELL_INSIDE_ROBOT"
    assert row.zeta_percent is None
    (record,) = _csv_rows(small_spec.output_dir / "custom.csv")
    assert record["zeta_percent"] == ""
    assert record["error_code"] == "SHELL_INSIDE_ROBOT"

    calls: list[str] = []
    original = experiment.evaluate_config

    def tracking(
        ctx: SweepContext,
        config: str,
        kinds: Sequence[MaxVolumeKind],
        options: RunOptions = SERIAL,
    ) -> list[CoverageRow]:
        calls.append(config)
        return original(ctx, config, kinds, options)

    monkeypatch.setattr(experiment, "evaluate_config", tracking)
    run_sweep(small_spec, "custom", ["n1_8_0"], [Shell(0.1)], SERIAL)
    assert calls == ["n1_8_0"]


def test_full_field_of_view_covers_everything(small_spec: ExperimentSpec) -> None:
    ctx = sweep_context(small_spec)
    for kind in small_spec.vmax_kinds:
        result = coverage(
            ctx.vmax_tree(kind),
            full_octree(ctx.domain),
            ctx.self_volume,
            vmax_kind=kind,
            vmax_excludes_vr=True,
        )
        assert result.zeta_percent == 100.0
        assert result.vmax_kind == kind
    assert ctx.vmax_tree(OperatingWorkspace()) is ctx.vmax_tree(OperatingWorkspace())


def test_sweep_contexts_are_shared_and_bounded(small_spec: ExperimentSpec) -> None:
    sweep_context.cache_clear()
    first = sweep_context(small_spec)
    assert sweep_context(small_spec) is first
    for seed in range(1, experiment.CONTEXT_CACHE_SIZE + 2):
        sweep_context(replace(small_spec, seed=seed))
    info = sweep_context.cache_info()
    assert info.currsize == experiment.CONTEXT_CACHE_SIZE
    assert info.hits == 1
    assert sweep_context(small_spec) is not first


def test_group_rows_are_bounded_by_the_whole_config(small_spec: ExperimentSpec) -> None:
    rows = run_config_sweep(small_spec, RunOptions(jobs=1, by_group=True))
    assert len(rows) == 2 * 4 * 2
    for config in small_spec.configs:
        for vmax in ("V_O", "V_S:0.5"):
            whole = _zeta(rows, config, vmax)
            parts = [_zeta(rows, f"{config}@{g}", vmax) for g in ("shoulder", "elbow", "tool")]
            assert all(p <= whole for p in parts)
            assert sum(parts) >= whole - 1e-9

    ctx = sweep_context(small_spec)
    groups = coverage_by_group(ctx, "n1_8_0", OperatingWorkspace())
    assert sorted(groups) == ["elbow", "shoulder", "tool"]
    assert groups["tool"].config_label == "n1_8_0@tool"


def test_dumps_match_the_reported_volumes(small_spec: ExperimentSpec) -> None:
    options = RunOptions(jobs=1, dump_octrees=True, dump_leftover=True)
    rows = run_config_sweep(small_spec, options)
    out = small_spec.output_dir
    fov = Octree.from_bytes((out / "octrees" / "fov_n1_8_0.oct").read_bytes())
    assert fov.domain.max_depth == 5
    assert (out / "octrees" / "vmax_V_O.oct").exists()
    assert (out / "octrees" / "vmax_V_S_0.5.oct").exists()

    leftover = (out / "leftover" / "n1_8_0__V_O.csv").read_text(encoding="utf-8").splitlines()
    assert leftover[0] == "x,y,z"
    (row,) = [r for r in rows if r.config == "n1_8_0" and r.vmax == "V_O"]
    assert row.lambda_leftover_m3 is not None
    assert len(leftover) - 1 == round(row.lambda_leftover_m3 / 0.2**3)


def test_theta_sweep_rows_and_trend(small_spec: ExperimentSpec) -> None:
    rows = run_theta_sweep(small_spec, [0, 30, 60], SERIAL)
    assert [r.config for r in rows if r.vmax == "V_O"] == ["n2_16_0", "n2_16_30", "n2_16_60"]
    assert [r.theta_deg for r in rows if r.vmax == "V_O"] == [0, 30, 60]
    rho = theta_trend(rows, "V_O")
    assert math.isnan(rho) or -1.0 <= rho <= 1.0

    with pytest.raises(CoverageError) as exc:
        run_theta_sweep(small_spec, [70], SERIAL)
    assert exc.value.code == "THETA_OUT_OF_RANGE"


def test_theta_trend_statistics() -> None:
    rising = [_row("n2_16_0", 0, 10.0), _row("n2_16_10", 10, 20.0), _row("n2_16_20", 20, 35.0)]
    assert theta_trend(rising, "V_O") == pytest.approx(1.0)
    falling = [_row(r.config, r.theta_deg, -(r.zeta_percent or 0.0)) for r in rising]
    assert theta_trend(falling, "V_O") == pytest.approx(-1.0)
    flat = [_row("n2_16_0", 0, 5.0), _row("n2_16_10", 10, 5.0)]
    assert math.isnan(theta_trend(flat, "V_O"))
    assert math.isnan(theta_trend(rising, "V_T"))
    noisy = [*rising, _row("n2_16_30@tool", 30, 0.0)]
    assert theta_trend(noisy, "V_O") == pytest.approx(1.0)


def test_shell_sweep(small_spec: ExperimentSpec) -> None:
    spec = small_spec.with_overrides(theta_sweep=ThetaSweepSpec(thetas=(0, 30)))
    rows = run_shell_sweep(spec, [0.5], SERIAL)
    assert [r.config for r in rows] == ["n2_16_0", "n2_16_30", "n3_16_55"]
    assert {r.vmax for r in rows} == {"V_S:0.5"}
    assert all(r.ok for r in rows)

    with pytest.raises(CoverageError) as exc:
        run_shell_sweep(spec, [0.1, 0.5], SERIAL)
    assert exc.value.code == "SHELL_INSIDE_ROBOT"
    assert exc.value.details["radii"] == [0.1]


def test_foreign_results_file_is_rejected(small_spec: ExperimentSpec) -> None:
    out = small_spec.output_dir
    out.mkdir(parents=True)
    (out / f"{CONFIG_SWEEP}.csv").write_text("a,b\n1,2\n", encoding="utf-8")
    with pytest.raises(CoverageError) as exc:
        run_config_sweep(small_spec, SERIAL)
    assert exc.value.code == "INVALID_RESULTS_CSV"

    record = _row("n1_8_0", 0, 1.0).to_record() | {"max_depth": "deep"}
    with pytest.raises(CoverageError) as exc:
        CoverageRow.from_record(record)
    assert exc.value.code == "INVALID_RESULTS_CSV"


def test_min_distance_probe_writes_csv(small_spec: ExperimentSpec) -> None:
    spec = small_spec.with_overrides(seed=11)
    probe = ProbeSpec(samples=20, object_radii=(0.1, 0.2))
    rows = run_min_distance_probe(spec, probe, ["n1_8_0"])
    assert [(r.result.config, r.result.object_radius) for r in rows] == [
        ("n1_8_0", 0.1),
        ("n1_8_0", 0.2),
    ]
    assert all(r.seed == 11 and r.result.waypoints == 20 for r in rows)
    path = small_spec.output_dir / "probe.csv"
    assert path.read_text(encoding="utf-8").splitlines()[0] == ",".join(PROBE_COLUMNS)
    loaded = load_probe_rows(path)
    assert [r.to_record() for r in loaded] == [r.to_record() for r in rows]

    again = run_min_distance_probe(spec, probe, ["n1_8_0"])
    assert [r.to_record() for r in again] == [r.to_record() for r in rows]


@pytest.mark.slow
def test_parallel_sweep_matches_serial(tmp_path: Path) -> None:
    spec = load_experiment().with_resolution(voxel_size=0.05)
    spec = spec.with_overrides(vmax_kinds=spec.vmax_kinds[:4])
    serial = spec.with_overrides(output_dir=tmp_path / "serial")
    parallel = spec.with_overrides(output_dir=tmp_path / "parallel")
    rows = run_config_sweep(serial, SERIAL)
    run_config_sweep(parallel, RunOptions(jobs=2))
    assert (tmp_path / "serial" / f"{CONFIG_SWEEP}.csv").read_bytes() == (
        tmp_path / "parallel" / f"{CONFIG_SWEEP}.csv"
    ).read_bytes()
    assert all(r.ok for r in rows)
    for vmax in ("V_O", "V_T", "V_OT", "V_S:0.5"):
        assert _zeta(rows, "n1_16_0", vmax) >= _zeta(rows, "n1_8_0", vmax)


@pytest.fixture(scope="module")
def default_sweep(tmp_path_factory: pytest.TempPathFactory) -> list[CoverageRow]:
    """The bundled experiment's config sweep at its own resolution, early-out off."""
    out = tmp_path_factory.mktemp("default")
    spec = load_experiment().with_overrides(output_dir=out, early_out=False)
    rows = run_config_sweep(spec, RunOptions(jobs=2))
    assert all(r.ok for r in rows)
    return rows


def _default_kinds() -> list[str]:
    return [format_vmax_kind(k) for k in load_experiment().vmax_kinds]


@pytest.mark.slow
def test_more_sensors_never_cover_less(default_sweep: list[CoverageRow]) -> None:
    ordered = ["n1_8_0", "n1_16_0", "n2_16_25", "n3_16_55"]
    for vmax in _default_kinds():
        zetas = [_zeta(default_sweep, config, vmax) for config in ordered]
        assert zetas == sorted(zetas), vmax
        assert zetas[1] - zetas[0] >= 2.0, vmax


@pytest.mark.slow
@pytest.mark.xfail(
    strict=True,
    reason="two tilted 16-sensor rings cover 1.5-1.9x the near field of one centre ring",
)
def test_dual_rings_at_ten_degrees_track_the_single_ring(
    default_sweep: list[CoverageRow],
) -> None:
    for vmax in _default_kinds():
        gap = _zeta(default_sweep, "n2_16_10", vmax) - _zeta(default_sweep, "n1_16_0", vmax)
        assert abs(gap) <= 5.0, vmax


@pytest.mark.slow
def test_densest_config_headline_bands(default_sweep: list[CoverageRow]) -> None:
    assert _zeta(default_sweep, "n3_16_55", "V_S:0.5") >= 90.0
    assert 55.0 <= _zeta(default_sweep, "n3_16_55", "V_S:1.5") <= 85.0


@pytest.mark.slow
def test_near_field_coverage_rises_with_tilt(tmp_path: Path) -> None:
    spec = load_experiment().with_overrides(
        output_dir=tmp_path, vmax_kinds=(Shell(0.5),), early_out=False
    )
    rows = run_theta_sweep(spec, None, RunOptions(jobs=2))
    assert len(rows) == 13
    assert all(r.ok for r in rows)
    assert theta_trend(rows, "V_S:0.5") > 0.8
    by_theta = {r.theta_deg: r.zeta_percent for r in rows}
    assert by_theta[55] is not None and by_theta[0] is not None
    assert by_theta[55] - by_theta[0] >= 10.0


@pytest.mark.slow
def test_denser_config_measures_distance_better(tmp_path: Path) -> None:
    spec = load_experiment().with_overrides(output_dir=tmp_path)
    rows = run_min_distance_probe(spec, ProbeSpec(samples=200), ["n1_8_0", "n2_16_25"])
    sparse, dense = (r.result for r in rows)
    assert (sparse.config, dense.config) == ("n1_8_0", "n2_16_25")
    assert sparse.waypoints == dense.waypoints == 200
    assert dense.seen_fraction >= sparse.seen_fraction
    assert dense.rmse_clamped <= sparse.rmse_clamped
