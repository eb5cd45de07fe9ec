from __future__ import annotations

import hashlib
import logging
import math
import struct
from collections.abc import Iterator
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import TypeAlias

import numpy as np
from numpy.typing import NDArray

from tof_coverage.errors import CoverageError
from tof_coverage.services.geometry import Box, FloatArray, Vec3
from tof_coverage.services.solids import Solid, Union

logger = logging.getLogger(__name__)

MAX_DEPTH_LIMIT = 12
DENSE_DEPTH_LIMIT = 8
# Subtrees with at most this many remaining levels are rasterized densely.
BLOCK_LEVELS = 6
# Early-out probes coarse cells this many levels above the leaves.
EARLY_OUT_LEVELS = 2

EMPTY_TAG = 0
FULL_TAG = 1
BRANCH_TAG = 2
_HEADER = struct.Struct("<ddddB")

# A node is Empty (False), Full (True) or a Branch of eight child nodes.
Node: TypeAlias = "bool | tuple[Node, ...]"


@dataclass(frozen=True)
class VoxelDomain:
    """Cubic region ``[origin, origin + edge_length]^3`` split ``max_depth`` times."""

    origin: Vec3
    edge_length: float
    max_depth: int

    def __post_init__(self) -> None:
        if self.edge_length <= 0.0:
            raise CoverageError(
                code="INVALID_DOMAIN",
                message="edge_length must be positive.",
                details={"edge_length": self.edge_length},
            )
        if not 1 <= self.max_depth <= MAX_DEPTH_LIMIT:
            raise CoverageError(
                code="INVALID_DOMAIN",
                message=f"max_depth must lie in [1, {MAX_DEPTH_LIMIT}].",
                details={"max_depth": self.max_depth},
            )

    @classmethod
    def centered(cls, center: Vec3, edge_length: float, max_depth: int) -> VoxelDomain:
        half = edge_length / 2.0
        return cls(center - Vec3(half, half, half), edge_length, max_depth)

    @property
    def resolution(self) -> int:
        return 2**self.max_depth

    @property
    def voxel_size(self) -> float:
        return self.edge_length / self.resolution

    @property
    def volume(self) -> float:
        return self.edge_length**3

    def bounds(self) -> Box:
        lower = self.origin.as_array()
        return Box.from_arrays(lower, lower + self.edge_length)

    def digest(self) -> str:
        raw = _HEADER.pack(
            self.origin.x, self.origin.y, self.origin.z, self.edge_length, self.max_depth
        )
        return hashlib.sha1(raw).hexdigest()[:12]

    def voxel_centers(self, start: NDArray[np.int64], stop: NDArray[np.int64]) -> FloatArray:
        """Centers of voxels with integer index in ``[start, stop)`` (ij order)."""
        axes = [
            self.origin.as_array()[dim] + (np.arange(start[dim], stop[dim]) + 0.5) * self.voxel_size
            for dim in range(3)
        ]
        gx, gy, gz = np.meshgrid(*axes, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)


@dataclass(frozen=True)
class Octree:
    domain: VoxelDomain
    root: Node

    @cached_property
    def voxel_count(self) -> int:
        """Occupied voxels at max depth; a Full node at depth d counts 8^(max_depth-d)."""
        return _count(self.root, self.domain.max_depth)

    @property
    def is_empty(self) -> bool:
        return self.root is False

    def volume(self) -> float:
        return self.voxel_count * self.domain.voxel_size**3

    def node_count(self) -> int:
        return sum(1 for _ in _preorder(self.root))

    def complement(self) -> Octree:
        return Octree(self.domain, _complement(self.root))

    def to_dense(self) -> NDArray[np.bool_]:
        if self.domain.max_depth > DENSE_DEPTH_LIMIT:
            raise CoverageError(
                code="DEPTH_TOO_LARGE",
                message=f"Dense export is limited to max_depth <= {DENSE_DEPTH_LIMIT}.",
                details={"max_depth": self.domain.max_depth},
            )
        n = self.domain.resolution
        grid = np.zeros((n, n, n), dtype=bool)
        for (i, j, k), size in _full_blocks(self.root, (0, 0, 0), n):
            grid[i : i + size, j : j + size, k : k + size] = True
        return grid

    def leaf_centers(self) -> FloatArray:
        """Centers of every occupied max-depth voxel, shape (N, 3)."""
        chunks = [
            self.domain.voxel_centers(np.array(start), np.array(start) + size)
            for start, size in _full_blocks(self.root, (0, 0, 0), self.domain.resolution)
        ]
        if not chunks:
            return np.zeros((0, 3))
        return np.vstack(chunks)

    def to_bytes(self) -> bytes:
        origin = self.domain.origin
        header = _HEADER.pack(
            origin.x, origin.y, origin.z, self.domain.edge_length, self.domain.max_depth
        )
        tags = np.fromiter(_tags(self.root), dtype=np.uint8)
        padding = (-len(tags)) % 4
        if padding:
            tags = np.concatenate([tags, np.zeros(padding, dtype=np.uint8)])
        quads = tags.reshape(-1, 4)
        packed = (quads[:, 0] << 6) | (quads[:, 1] << 4) | (quads[:, 2] << 2) | quads[:, 3]
        return header + packed.astype(np.uint8).tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> Octree:
        if len(data) < _HEADER.size:
            raise CoverageError(
                code="INVALID_OCTREE_BYTES",
                message="Octree byte stream is shorter than its header.",
                details={"length": len(data)},
            )
        ox, oy, oz, edge, depth = _HEADER.unpack_from(data)
        domain = VoxelDomain(Vec3(ox, oy, oz), edge, depth)
        payload = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size)
        tags = np.stack(
            [(payload >> 6) & 3, (payload >> 4) & 3, (payload >> 2) & 3, payload & 3], axis=1
        ).ravel()
        cursor = iter(tags.tolist())
        root = _parse(cursor, depth)
        return cls(domain, root)


def _count(node: Node, remaining: int) -> int:
    if node is True:
        return 8**remaining
    if node is False:
        return 0
    assert isinstance(node, tuple)
    return sum(_count(child, remaining - 1) for child in node)


def _preorder(node: Node) -> Iterator[Node]:
    yield node
    if isinstance(node, tuple):
        for child in node:
            yield from _preorder(child)


def _tags(node: Node) -> Iterator[int]:
    for item in _preorder(node):
        if item is True:
            yield FULL_TAG
        elif item is False:
            yield EMPTY_TAG
        else:
            yield BRANCH_TAG


def _parse(cursor: Iterator[int], remaining: int) -> Node:
    try:
        tag = next(cursor)
    except StopIteration as exc:
        raise CoverageError(
            code="INVALID_OCTREE_BYTES",
            message="Octree byte stream ended inside the node tree.",
        ) from exc
    if tag == FULL_TAG:
        return True
    if tag == EMPTY_TAG:
        return False
    if tag != BRANCH_TAG or remaining == 0:
        raise CoverageError(
            code="INVALID_OCTREE_BYTES",
            message="Invalid node tag in octree byte stream.",
            details={"tag": tag, "remaining_depth": remaining},
        )
    return tuple(_parse(cursor, remaining - 1) for _ in range(8))


def _child_offset(child: int) -> tuple[int, int, int]:
    return child & 1, (child >> 1) & 1, (child >> 2) & 1


def _full_blocks(
    node: Node, start: tuple[int, int, int], size: int
) -> Iterator[tuple[tuple[int, int, int], int]]:
    if node is True:
        yield start, size
    elif isinstance(node, tuple):
        half = size // 2
        for child, sub in enumerate(node):
            dx, dy, dz = _child_offset(child)
            yield from _full_blocks(
                sub, (start[0] + dx * half, start[1] + dy * half, start[2] + dz * half), half
            )


def _canonical(children: tuple[Node, ...]) -> Node:
    if all(child is True for child in children):
        return True
    if all(child is False for child in children):
        return False
    return children


def _complement(node: Node) -> Node:
    if isinstance(node, bool):
        return not node
    return tuple(_complement(child) for child in node)


def _merge(a: Node, b: Node) -> Node:
    if a is True or b is True:
        return True
    if a is False:
        return b
    if b is False:
        return a
    assert isinstance(a, tuple) and isinstance(b, tuple)
    return _canonical(tuple(_merge(x, y) for x, y in zip(a, b, strict=True)))


def _intersect(a: Node, b: Node) -> Node:
    if a is False or b is False:
        return False
    if a is True:
        return b
    if b is True:
        return a
    assert isinstance(a, tuple) and isinstance(b, tuple)
    return _canonical(tuple(_intersect(x, y) for x, y in zip(a, b, strict=True)))


def _subtract(a: Node, b: Node) -> Node:
    if a is False or b is True:
        return False
    if b is False:
        return a
    if a is True:
        return _complement(b)
    assert isinstance(a, tuple) and isinstance(b, tuple)
    return _canonical(tuple(_subtract(x, y) for x, y in zip(a, b, strict=True)))


def _require_same_domain(a: Octree, b: Octree) -> None:
    if a.domain != b.domain:
        raise CoverageError(
            code="DOMAIN_MISMATCH",
            message="Octree operands must share one voxel domain.",
            details={"left": a.domain.digest(), "right": b.domain.digest()},
        )


def subtract(a: Octree, b: Octree) -> Octree:
    _require_same_domain(a, b)
    return Octree(a.domain, _subtract(a.root, b.root))


def merge(a: Octree, b: Octree) -> Octree:
    _require_same_domain(a, b)
    return Octree(a.domain, _merge(a.root, b.root))


def intersect(a: Octree, b: Octree) -> Octree:
    _require_same_domain(a, b)
    return Octree(a.domain, _intersect(a.root, b.root))


def volume(tree: Octree) -> float:
    return tree.volume()


def empty_octree(domain: VoxelDomain) -> Octree:
    return Octree(domain, False)


def full_octree(domain: VoxelDomain) -> Octree:
    return Octree(domain, True)


def from_dense(domain: VoxelDomain, grid: NDArray[np.bool_]) -> Octree:
    n = domain.resolution
    if grid.shape != (n, n, n):
        raise CoverageError(
            code="INVALID_DENSE_GRID",
            message="Dense grid shape does not match the domain resolution.",
            details={"expected": [n, n, n], "actual": list(grid.shape)},
        )
    return Octree(domain, _node_from_dense(np.asarray(grid, dtype=bool)))


def _node_from_dense(grid: NDArray[np.bool_]) -> Node:
    """Canonical subtree for a dense ``(2^k)^3`` block, built from an all/any pyramid."""
    full = [grid]
    occupied = [grid]
    while full[-1].shape[0] > 1:
        half = full[-1].shape[0] // 2
        full.append(full[-1].reshape(half, 2, half, 2, half, 2).all(axis=(1, 3, 5)))
        occupied.append(occupied[-1].reshape(half, 2, half, 2, half, 2).any(axis=(1, 3, 5)))

    def build(level: int, i: int, j: int, k: int) -> Node:
        if full[level][i, j, k]:
            return True
        if not occupied[level][i, j, k]:
            return False
        children: list[Node] = []
        for child in range(8):
            dx, dy, dz = _child_offset(child)
            children.append(build(level - 1, 2 * i + dx, 2 * j + dy, 2 * k + dz))
        return tuple(children)

    return build(len(full) - 1, 0, 0, 0)


def _flatten(solid: Solid) -> list[Solid]:
    if isinstance(solid, Union):
        members: list[Solid] = []
        for member in solid.members:
            members.extend(_flatten(member))
        return members
    return [solid]


@dataclass(frozen=True)
class _Member:
    solid: Solid
    lower: FloatArray
    upper: FloatArray


def voxelize(
    solid: Solid,
    domain: VoxelDomain,
    *,
    early_out: bool = False,
    clip: bool = False,
    workers: int = 1,
) -> Octree:
    """Omega: center-sampled octree of ``solid`` over ``domain``.

    ``clip`` drops the parts of the solid outside the domain instead of failing.
    ``early_out`` classifies a coarse cell from its 8 corners + center when they agree.
    """
    box = solid.bounding_box()
    if not clip and not domain.bounds().contains_box(box):
        raise CoverageError(
            code="SOLID_OUTSIDE_DOMAIN",
            message="Solid bounding box exceeds the voxel domain.",
            details={
                "solid_lower": [box.lower.x, box.lower.y, box.lower.z],
                "solid_upper": [box.upper.x, box.upper.y, box.upper.z],
                "domain_digest": domain.digest(),
            },
        )
    members = []
    for member in _flatten(solid):
        member_box = member.bounding_box()
        members.append(_Member(member, member_box.lower.as_array(), member_box.upper.as_array()))
    root = _build(members, domain, (0, 0, 0), 0, early_out, workers)
    tree = Octree(domain, root)
    logger.debug(
        "voxelized %d member solid(s): %d voxels at l_voxel=%.4g",
        len(members),
        tree.voxel_count,
        domain.voxel_size,
    )
    return tree


def _build(
    members: list[_Member],
    domain: VoxelDomain,
    index: tuple[int, int, int],
    depth: int,
    early_out: bool,
    workers: int,
) -> Node:
    remaining = domain.max_depth - depth
    size = 2**remaining
    start = np.array(index, dtype=np.int64) * size
    lower = domain.origin.as_array() + start * domain.voxel_size
    upper = lower + size * domain.voxel_size
    live = [m for m in members if np.all(m.lower <= upper) and np.all(m.upper >= lower)]
    if not live:
        return False
    if remaining <= BLOCK_LEVELS:
        grid = _rasterize_block(live, domain, start, size, early_out)
        return _node_from_dense(grid)

    child_indices = []
    for child in range(8):
        dx, dy, dz = _child_offset(child)
        child_indices.append((2 * index[0] + dx, 2 * index[1] + dy, 2 * index[2] + dz))
    if workers > 1 and depth == 0:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_build, live, domain, ci, depth + 1, early_out, 1)
                for ci in child_indices
            ]
            children = [future.result() for future in futures]
    else:
        children = [_build(live, domain, ci, depth + 1, early_out, 1) for ci in child_indices]
    return _canonical(tuple(children))


def _index_range(
    member: _Member, domain: VoxelDomain, start: NDArray[np.int64], size: int
) -> tuple[NDArray[np.int64], NDArray[np.int64]] | None:
    # Voxels whose centers can fall inside the member's bounding box.
    l_voxel = domain.voxel_size
    origin = domain.origin.as_array()
    lo = np.ceil((member.lower - origin) / l_voxel - 0.5 - 1e-9).astype(np.int64)
    hi = np.floor((member.upper - origin) / l_voxel - 0.5 + 1e-9).astype(np.int64) + 1
    lo = np.maximum(lo, start)
    hi = np.minimum(hi, start + size)
    if np.any(hi <= lo):
        return None
    return lo, hi


def _rasterize_block(
    live: list[_Member],
    domain: VoxelDomain,
    start: NDArray[np.int64],
    size: int,
    early_out: bool,
) -> NDArray[np.bool_]:
    grid = np.zeros((size, size, size), dtype=bool)
    cell = 2**EARLY_OUT_LEVELS
    for member in live:
        span = _index_range(member, domain, start, size)
        if span is None:
            continue
        lo, hi = span
        if early_out and size >= cell:
            lo = start + ((lo - start) // cell) * cell
            hi = start + -((start - hi) // cell) * cell
            values = _sample_early_out(member.solid, domain, lo, hi, cell)
        else:
            shape = tuple(int(v) for v in hi - lo)
            values = member.solid.contains_points(domain.voxel_centers(lo, hi)).reshape(shape)
        a, b = lo - start, hi - start
        grid[a[0] : b[0], a[1] : b[1], a[2] : b[2]] |= values
    return grid


def _sample_early_out(
    solid: Solid,
    domain: VoxelDomain,
    lo: NDArray[np.int64],
    hi: NDArray[np.int64],
    cell: int,
) -> NDArray[np.bool_]:
    l_voxel = domain.voxel_size
    origin = domain.origin.as_array()
    cells = (hi - lo) // cell
    corner_axes = [origin[d] + (lo[d] + np.arange(cells[d] + 1) * cell) * l_voxel for d in range(3)]
    cx, cy, cz = np.meshgrid(*corner_axes, indexing="ij")
    corner_pts = np.stack([cx.ravel(), cy.ravel(), cz.ravel()], axis=1)
    corners = solid.contains_points(corner_pts).reshape(tuple(int(c) + 1 for c in cells))
    center_axes = [axis[:-1] + cell * l_voxel / 2.0 for axis in corner_axes]
    mx, my, mz = np.meshgrid(*center_axes, indexing="ij")
    centers = solid.contains_points(
        np.stack([mx.ravel(), my.ravel(), mz.ravel()], axis=1)
    ).reshape(tuple(int(c) for c in cells))

    corner_views = [
        corners[dx : dx + cells[0], dy : dy + cells[1], dz : dz + cells[2]]
        for dx in (0, 1)
        for dy in (0, 1)
        for dz in (0, 1)
    ]
    all_in = np.logical_and.reduce(corner_views + [centers])
    any_in = np.logical_or.reduce(corner_views + [centers])
    mixed = any_in & ~all_in

    fine = all_in.repeat(cell, axis=0).repeat(cell, axis=1).repeat(cell, axis=2)
    mixed_idx = np.argwhere(mixed)
    if len(mixed_idx):
        offsets = np.indices((cell, cell, cell)).reshape(3, -1).T
        fine_idx = mixed_idx[:, None, :] * cell + offsets[None, :, :]
        flat = fine_idx.reshape(-1, 3)
        points = origin + (lo + flat + 0.5) * l_voxel
        fine[flat[:, 0], flat[:, 1], flat[:, 2]] = solid.contains_points(points)
    return fine


def voxel_volume_of(solid: Solid, voxel_size: float, *, margin: float = 0.0) -> Octree:
    """Voxelize ``solid`` on the smallest power-of-two domain around its box.

    The domain is anchored on a multiple of ``voxel_size`` so results do not depend
    on where the box happens to start.
    """
    box = solid.bounding_box()
    lower = box.lower.as_array() - margin
    upper = box.upper.as_array() + margin
    extent = float(np.max(upper - lower))
    depth = max(1, math.ceil(math.log2(max(extent / voxel_size, 1.0)) - 1e-9))
    if depth > MAX_DEPTH_LIMIT:
        raise CoverageError(
            code="DEPTH_TOO_LARGE",
            message="Requested voxel size needs more than the supported octree depth.",
            details={"voxel_size": voxel_size, "extent": extent, "depth": depth},
        )
    anchor = np.floor(lower / voxel_size) * voxel_size
    edge = voxel_size * 2**depth
    if np.any(anchor + edge < upper):
        depth += 1
        edge *= 2
    domain = VoxelDomain(Vec3.of(anchor), edge, depth)
    return voxelize(solid, domain)
