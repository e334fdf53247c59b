"""Core data types for raster-scanned volumes and registration mappings.

Array layout convention: every volume is indexed ``(i, j, k)`` where ``i``
is the B-scan index (slow axis), ``j`` the A-scan index within a B-scan
(fast axis) and ``k`` the depth index, with ``k`` fastest in memory.  The
scan direction tag records which physical transverse axis the fast axis
sweeps; two volumes are orthogonal when their tags differ.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatchError,
    IndexOutOfBoundsError,
    NonFiniteDataError,
    NonPositiveSpacingError,
)


class ScanDirection(enum.Enum):
    """Fast-axis orientation of a raster scan."""

    X_FAST = "x-fast"
    Y_FAST = "y-fast"


def orthogonal(a: ScanDirection, b: ScanDirection) -> bool:
    """True iff the two scans sweep different transverse fast axes."""
    return a is not b


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class RasterVolume:
    """A 3D linear-scale intensity volume with per-A-scan validity.

    ``data`` holds non-negative finite intensities, ``validity`` is 1 where
    the A-scan was acquired and 0 at gaps.  Since an A-scan is an atomic
    acquisition, validity is constant along depth for each ``(i, j)``.
    """

    data: np.ndarray  # float32, (n_bscans, n_ascans, n_depth)
    direction: ScanDirection
    transverse_spacing_mm: float
    axial_spacing_um: float
    validity: np.ndarray  # uint8, same shape

    @property
    def n_bscans(self) -> int:
        return self.data.shape[0]

    @property
    def n_ascans(self) -> int:
        return self.data.shape[1]

    @property
    def n_depth(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def valid_ascans(self) -> np.ndarray:
        """Per-A-scan validity, shape (n_bscans, n_ascans), uint8."""
        return self.validity[:, :, 0]


def new_raster_volume(
    data: np.ndarray,
    direction: ScanDirection,
    transverse_spacing_mm: float,
    axial_spacing_um: float,
    validity: np.ndarray | None = None,
) -> RasterVolume:
    """Validate and construct a :class:`RasterVolume`.

    ``validity`` defaults to all-acquired.  Raises
    :class:`DimensionMismatchError`, :class:`NonFiniteDataError` or
    :class:`NonPositiveSpacingError` on contract violations.
    """
    data = np.array(data, dtype=np.float32, order="C")
    if data.ndim != 3:
        raise DimensionMismatchError(f"expected 3D data, got shape {data.shape}")
    if transverse_spacing_mm <= 0 or axial_spacing_um <= 0:
        raise NonPositiveSpacingError(
            f"spacings must be positive, got {transverse_spacing_mm} mm / "
            f"{axial_spacing_um} um"
        )
    if not np.isfinite(data).all():
        raise NonFiniteDataError("intensity data contains NaN or infinity")
    if (data < 0).any():
        raise NonFiniteDataError("intensity data contains negative values")

    if validity is None:
        validity = np.ones(data.shape, dtype=np.uint8)
    else:
        validity = np.array(validity, dtype=np.uint8, order="C")
        if validity.shape != data.shape:
            raise DimensionMismatchError(
                f"validity shape {validity.shape} != data shape {data.shape}"
            )
        if not np.isin(validity, (0, 1)).all():
            raise NonFiniteDataError("validity must be binary")
        if not (validity == validity[:, :, :1]).all():
            raise DimensionMismatchError(
                "validity must be constant along depth within each A-scan"
            )

    return RasterVolume(
        data=_freeze(data),
        direction=direction,
        transverse_spacing_mm=float(transverse_spacing_mm),
        axial_spacing_um=float(axial_spacing_um),
        validity=_freeze(validity),
    )


def bscan_length_mm(volume: RasterVolume) -> float:
    """Physical length of one B-scan: (n_ascans - 1) * transverse spacing."""
    return (volume.n_ascans - 1) * volume.transverse_spacing_mm


@dataclass(frozen=True)
class LogVolume:
    """Log-scale view of a :class:`RasterVolume` (same layout and validity)."""

    data: np.ndarray  # float64
    direction: ScanDirection
    transverse_spacing_mm: float
    axial_spacing_um: float
    validity: np.ndarray

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def valid_ascans(self) -> np.ndarray:
        return self.validity[:, :, 0]


class GeometryKind(enum.Enum):
    IDENTITY = "identity"
    TRANSPOSE = "transpose"
    DENSE = "dense"


@dataclass(frozen=True)
class RegisteredGeometry:
    """Continuous coordinates of one volume's samples in another's grid frame.

    ``IDENTITY`` maps (i, j, k) -> (i, j, k).  ``TRANSPOSE`` swaps the two
    transverse indices, (i, j, k) -> (j, i, k); this is the exact mapping
    between two orthogonally scanned volumes that sample a common grid,
    since the roles of fast and slow axis are exchanged.  ``DENSE`` stores
    an explicit coordinate per source voxel.  Mapped coordinates may lie
    outside the target bounds; consumers treat out-of-bounds as excluded.
    """

    kind: GeometryKind
    source_shape: tuple[int, int, int]
    mapping: np.ndarray | None = None  # float64, (*source_shape, 3) for DENSE

    @staticmethod
    def identity(source_shape: tuple[int, int, int]) -> "RegisteredGeometry":
        return RegisteredGeometry(GeometryKind.IDENTITY, tuple(source_shape))

    @staticmethod
    def transpose(source_shape: tuple[int, int, int]) -> "RegisteredGeometry":
        return RegisteredGeometry(GeometryKind.TRANSPOSE, tuple(source_shape))

    @staticmethod
    def dense(mapping: np.ndarray) -> "RegisteredGeometry":
        mapping = np.array(mapping, dtype=np.float64, order="C")
        if mapping.ndim != 4 or mapping.shape[3] != 3:
            raise DimensionMismatchError(
                f"dense mapping must have shape (nb, na, nd, 3), got {mapping.shape}"
            )
        return RegisteredGeometry(
            GeometryKind.DENSE, mapping.shape[:3], _freeze(mapping)
        )


def map_coordinate(
    geometry: RegisteredGeometry, i: int, j: int, k: int
) -> tuple[float, float, float]:
    """Target-frame coordinate of source voxel (i, j, k)."""
    nb, na, nd = geometry.source_shape
    if not (0 <= i < nb and 0 <= j < na and 0 <= k < nd):
        raise IndexOutOfBoundsError(
            f"({i}, {j}, {k}) outside source dims {geometry.source_shape}"
        )
    if geometry.kind is GeometryKind.IDENTITY:
        return (float(i), float(j), float(k))
    if geometry.kind is GeometryKind.TRANSPOSE:
        return (float(j), float(i), float(k))
    u, v, w = geometry.mapping[i, j, k]
    return (float(u), float(v), float(w))
