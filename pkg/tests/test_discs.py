from __future__ import annotations

import math

import pytest

from tof_coverage.errors import CoverageError
from tof_coverage.services.curves import build_piecewise_bezier
from tof_coverage.services.discs import disc_decimate, disc_stack, voxelize_discs
from tof_coverage.services.geometry import Vec3
from tof_coverage.services.octree import voxel_volume_of, voxelize
from tof_coverage.services.solids import Cone, DiscSlab, Sphere, TubeShell, Union
from tof_coverage.services.volumetry import build_solid


def test_cone_stations_grow_linearly() -> None:
    cone = Cone(Vec3.zero(), Vec3(0.0, 0.0, 1.0), math.radians(12.5), 1.5)
    discs = disc_decimate(cone, 0.1)
    assert len(discs) == 16
    assert discs[0].radius == 0.0
    assert discs[-1].radius == pytest.approx(cone.base_radius)
    assert discs[-1].center.z == pytest.approx(1.5)
    assert all(d.normal == cone.axis for d in discs)


def test_sphere_stations_follow_the_circle() -> None:
    discs = disc_decimate(Sphere(Vec3(1.0, 0.0, 0.0), 0.5), 0.25)
    radii = [d.radius for d in discs]
    assert radii == pytest.approx([0.0, math.sqrt(0.1875), 0.5, math.sqrt(0.1875), 0.0])
    assert discs[2].center == Vec3(1.0, 0.0, 0.0)


def test_tube_stations_are_annuli_along_the_tangent() -> None:
    curve = build_piecewise_bezier([Vec3.zero(), Vec3(0.0, 0.0, 1.0)])
    discs = disc_decimate(TubeShell(curve, 0.05, 0.2), 0.25)
    assert len(discs) == 5
    for disc in discs:
        assert disc.normal.distance_to(Vec3(0.0, 0.0, 1.0)) < 1e-9
        assert (disc.inner_radius, disc.radius) == (0.05, 0.2)


def test_disc_stack_slabs_meet_halfway() -> None:
    discs = disc_decimate(Sphere(Vec3.zero(), 0.5), 0.25)
    slabs = [s for s in disc_stack(discs).members if isinstance(s, DiscSlab)]
    assert len(slabs) == 5
    first, middle, last = slabs[0], slabs[2], slabs[-1]
    assert (first.back, first.forward) == pytest.approx((0.0, 0.125))
    assert (middle.back, middle.forward) == pytest.approx((0.125, 0.125))
    assert (last.back, last.forward) == pytest.approx((0.125, 0.0))


def test_disc_volume_tracks_the_exact_cone() -> None:
    cone, analytic = build_solid("cone", height=1.5, fov_deg=25.0)
    domain = voxel_volume_of(cone, 0.02, margin=0.02).domain
    exact = voxelize(cone, domain)
    stacked = voxelize_discs(disc_decimate(cone, 0.01), domain)
    assert abs(stacked.volume() - exact.volume()) / exact.volume() < 0.05
    assert abs(stacked.volume() - analytic) / analytic < 0.05


def test_decimation_errors() -> None:
    sphere = Sphere(Vec3.zero(), 0.5)
    with pytest.raises(CoverageError) as exc:
        disc_decimate(sphere, 0.0)
    assert exc.value.code == "INVALID_SPACING"

    with pytest.raises(CoverageError) as exc:
        disc_decimate(Union((sphere,)), 0.1)
    assert exc.value.code == "UNSUPPORTED_SOLID"

    with pytest.raises(CoverageError) as exc:
        disc_stack([])
    assert exc.value.code == "EMPTY_DISC_STACK"


@pytest.mark.parametrize(
    ("shape", "kwargs"),
    [
        ("cone", {"height": 1.5, "fov_deg": 25.0}),
        ("sphere", {"radius": 0.5}),
        ("tube", {"radius": 0.2, "r_inner": 0.05}),
    ],
)
def test_disc_stack_stays_within_two_voxels_per_disc(
    shape: str, kwargs: dict[str, float]
) -> None:
    solid, _ = build_solid(shape, **kwargs)  # type: ignore[arg-type]
    domain = voxel_volume_of(solid, 0.02, margin=0.02).domain
    discs = disc_decimate(solid, 0.01)
    exact = voxelize(solid, domain).volume()
    stacked = voxelize_discs(discs, domain).volume()
    assert abs(stacked - exact) <= 2 * len(discs) * domain.voxel_size**3
