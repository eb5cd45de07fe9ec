from __future__ import annotations

import math

import pytest

from tof_coverage.errors import CoverageError
from tof_coverage.services.solids import Cone, Sphere, TubeShell
from tof_coverage.services.volumetry import build_solid, measure_solid


def test_build_solid_shapes() -> None:
    cone, cone_volume = build_solid("cone", height=2.0, fov_deg=90.0)
    assert isinstance(cone, Cone)
    assert cone_volume == pytest.approx(math.pi * 4.0 * 2.0 / 3.0)

    sphere, sphere_volume = build_solid("sphere", radius=0.3)
    assert isinstance(sphere, Sphere)
    assert sphere_volume == pytest.approx(4.0 / 3.0 * math.pi * 0.027)

    tube, tube_volume = build_solid("tube", radius=0.2, r_inner=0.1)
    assert isinstance(tube, TubeShell)
    assert tube_volume == pytest.approx(math.pi * 0.03)


def test_measure_solid_report() -> None:
    sphere, analytic = build_solid("sphere", radius=0.25)
    report = measure_solid(sphere, analytic, 0.025)
    assert report["solid"] == "Sphere"
    assert report["voxel_size_m"] == pytest.approx(0.025)
    assert report["octree_m3"] == pytest.approx(report["voxels"] * 0.025**3)
    assert abs(report["relative_error"]) < 0.05
    assert report["nodes"] >= 1


def test_volumetry_errors() -> None:
    with pytest.raises(CoverageError) as exc:
        build_solid("torus")
    assert exc.value.code == "UNSUPPORTED_SOLID"

    sphere, analytic = build_solid("sphere")
    with pytest.raises(CoverageError) as exc:
        measure_solid(sphere, analytic, 0.0)
    assert exc.value.code == "INVALID_VOXEL_SIZE"
