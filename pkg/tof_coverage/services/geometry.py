from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial.transform import Rotation

from tof_coverage.errors import CoverageError

ORTHONORMAL_TOL = 1e-9

FloatArray = NDArray[np.float64]


@dataclass(frozen=True)
class Vec3:
    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "z"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise CoverageError(
                    code="NON_FINITE_VECTOR",
                    message=f"Vec3.{name} must be finite.",
                    details={"x": self.x, "y": self.y, "z": self.z},
                )
            object.__setattr__(self, name, float(value))

    @classmethod
    def of(cls, value: ArrayLike) -> Vec3:
        arr = np.asarray(value, dtype=float).reshape(3)
        return cls(float(arr[0]), float(arr[1]), float(arr[2]))

    @classmethod
    def zero(cls) -> Vec3:
        return cls(0.0, 0.0, 0.0)

    def as_array(self) -> FloatArray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def __add__(self, other: Vec3) -> Vec3:
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: Vec3) -> Vec3:
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __mul__(self, scale: float) -> Vec3:
        return Vec3(self.x * scale, self.y * scale, self.z * scale)

    __rmul__ = __mul__

    def __neg__(self) -> Vec3:
        return Vec3(-self.x, -self.y, -self.z)

    def dot(self, other: Vec3) -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def cross(self, other: Vec3) -> Vec3:
        return Vec3(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )

    def norm(self) -> float:
        return math.sqrt(self.dot(self))

    def normalized(self) -> Vec3:
        length = self.norm()
        if length <= 0.0:
            raise CoverageError(
                code="ZERO_LENGTH_VECTOR",
                message="Cannot normalize a zero-length vector.",
            )
        return self * (1.0 / length)

    def distance_to(self, other: Vec3) -> float:
        return (self - other).norm()


X_AXIS = Vec3(1.0, 0.0, 0.0)
Y_AXIS = Vec3(0.0, 1.0, 0.0)
Z_AXIS = Vec3(0.0, 0.0, 1.0)


def perpendicular_unit(direction: Vec3) -> Vec3:
    """Deterministic unit vector perpendicular to ``direction``.

    Uses ``direction x z``; falls back to ``direction x x`` when the direction is
    parallel to z.
    """
    unit = direction.normalized()
    candidate = unit.cross(Z_AXIS)
    if candidate.norm() < 1e-9:
        candidate = unit.cross(X_AXIS)
    return candidate.normalized()


@dataclass(frozen=True)
class Box:
    """Axis-aligned bounding box."""

    lower: Vec3
    upper: Vec3

    @classmethod
    def from_arrays(cls, lower: ArrayLike, upper: ArrayLike) -> Box:
        return cls(Vec3.of(lower), Vec3.of(upper))

    def contains_box(self, other: Box, tol: float = 1e-9) -> bool:
        lo, hi = self.lower.as_array(), self.upper.as_array()
        olo, ohi = other.lower.as_array(), other.upper.as_array()
        return bool(np.all(olo >= lo - tol) and np.all(ohi <= hi + tol))

    def intersects(self, lower: FloatArray, upper: FloatArray) -> bool:
        lo, hi = self.lower.as_array(), self.upper.as_array()
        return bool(np.all(lo <= upper) and np.all(hi >= lower))

    def union(self, other: Box) -> Box:
        return Box.from_arrays(
            np.minimum(self.lower.as_array(), other.lower.as_array()),
            np.maximum(self.upper.as_array(), other.upper.as_array()),
        )

    def contains_points(self, points: FloatArray) -> NDArray[np.bool_]:
        lo, hi = self.lower.as_array(), self.upper.as_array()
        return np.all((points >= lo) & (points <= hi), axis=1)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Proper rigid motion ``p -> R p + t``."""

    rotation: FloatArray = field(default_factory=lambda: np.eye(3))
    translation: Vec3 = field(default_factory=Vec3.zero)

    def __post_init__(self) -> None:
        rotation = np.array(self.rotation, dtype=float).reshape(3, 3)
        if not np.allclose(rotation.T @ rotation, np.eye(3), atol=ORTHONORMAL_TOL * 10):
            raise CoverageError(
                code="INVALID_ROTATION",
                message="Rotation matrix must be orthonormal.",
                details={"rotation": rotation.tolist()},
            )
        if abs(np.linalg.det(rotation) - 1.0) > ORTHONORMAL_TOL * 10:
            raise CoverageError(
                code="INVALID_ROTATION",
                message="Rotation matrix must have determinant +1.",
                details={"determinant": float(np.linalg.det(rotation))},
            )
        rotation.setflags(write=False)
        object.__setattr__(self, "rotation", rotation)

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls()

    @classmethod
    def from_translation(cls, translation: Vec3) -> RigidTransform:
        return cls(np.eye(3), translation)

    @classmethod
    def from_axis_angle(
        cls, axis: Vec3, angle: float, translation: Vec3 | None = None
    ) -> RigidTransform:
        rotvec = axis.normalized().as_array() * angle
        matrix = Rotation.from_rotvec(rotvec).as_matrix()
        return cls(matrix, translation or Vec3.zero())

    @classmethod
    def from_rpy(cls, rpy: ArrayLike, translation: Vec3 | None = None) -> RigidTransform:
        matrix = Rotation.from_euler("xyz", np.asarray(rpy, dtype=float)).as_matrix()
        return cls(matrix, translation or Vec3.zero())

    @classmethod
    def from_frame(cls, x_axis: Vec3, y_axis: Vec3, z_axis: Vec3, origin: Vec3) -> RigidTransform:
        matrix = np.column_stack([x_axis.as_array(), y_axis.as_array(), z_axis.as_array()])
        return cls(matrix, origin)

    def compose(self, other: RigidTransform) -> RigidTransform:
        """Return ``self * other`` (apply ``other`` first)."""
        rotation = self.rotation @ other.rotation
        translation = self.rotation @ other.translation.as_array() + self.translation.as_array()
        return RigidTransform(_reorthonormalize(rotation), Vec3.of(translation))

    def inverse(self) -> RigidTransform:
        rotation_t = self.rotation.T
        return RigidTransform(rotation_t, Vec3.of(-rotation_t @ self.translation.as_array()))

    def apply(self, point: Vec3) -> Vec3:
        return Vec3.of(self.rotation @ point.as_array() + self.translation.as_array())

    def apply_vector(self, vector: Vec3) -> Vec3:
        return Vec3.of(self.rotation @ vector.as_array())

    def apply_points(self, points: FloatArray) -> FloatArray:
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation.as_array()

    def axis(self, index: int) -> Vec3:
        return Vec3.of(self.rotation[:, index])

    def is_close(self, other: RigidTransform, tol: float = ORTHONORMAL_TOL) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, atol=tol)
            and np.allclose(
                self.translation.as_array(), other.translation.as_array(), atol=tol
            )
        )


def _reorthonormalize(matrix: FloatArray) -> FloatArray:
    # Keeps long compose chains inside the orthonormality tolerance.
    u, _, vt = np.linalg.svd(matrix)
    result = u @ vt
    if np.linalg.det(result) < 0:
        u[:, -1] *= -1
        result = u @ vt
    return result
