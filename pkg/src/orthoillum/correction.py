"""Applying fitted corrections and combining the corrected volumes.

Correction multiplies each foreground voxel by exp of its A-scan's spline
value; background voxels are copied through untouched so noise is never
amplified.  Merging and enface rendering both work in linear scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyInputError,
    LayoutMismatchError,
)
from .preprocessing import ForegroundMask
from .resampler import interpolate_many
from .spline import CorrectionField, eval_field
from .volume import GeometryKind, RasterVolume, RegisteredGeometry


@dataclass(frozen=True)
class EnfaceImage:
    """Depth-averaged view; coverage flags pixels backed by valid data
    (in both volumes, when built for a pair evaluation)."""

    pixels: np.ndarray  # float64 (n_bscans, n_ascans)
    coverage: np.ndarray  # uint8, same shape


def apply_correction(
    volume: RasterVolume, mask: ForegroundMask, field: CorrectionField
) -> RasterVolume:
    """Linear-scale correction: foreground voxels scaled by exp(c), the
    rest copied bit-exactly.  Validity is unchanged."""
    if mask.m.shape != volume.shape:
        raise DimensionMismatchError(
            f"mask shape {mask.m.shape} does not match volume {volume.shape}"
        )
    if field.layout.n_ascans != volume.n_ascans or field.values.shape[0] != volume.n_bscans:
        raise LayoutMismatchError(
            "correction field was fitted for a different volume layout"
        )
    factor = np.exp(eval_field(field))[:, :, None]
    scaled = (volume.data.astype(np.float64) * factor).astype(np.float32)
    data = np.where(mask.m == 1, scaled, volume.data)
    data.flags.writeable = False
    return RasterVolume(
        data=data,
        direction=volume.direction,
        transverse_spacing_mm=volume.transverse_spacing_mm,
        axial_spacing_um=volume.axial_spacing_um,
        validity=volume.validity,
    )


def _accumulate_reference(volume: RasterVolume, total, count) -> None:
    contrib = volume.validity == 1
    total += np.where(contrib, volume.data.astype(np.float64), 0.0)
    count += contrib


def _accumulate_mapped(
    volume: RasterVolume, geometry: RegisteredGeometry, total, count
) -> None:
    nb, na, nd = total.shape
    if geometry.kind is GeometryKind.TRANSPOSE:
        ni, nj, nk = min(nb, volume.n_ascans), min(na, volume.n_bscans), min(nd, volume.n_depth)
        vals = volume.data.transpose(1, 0, 2)[:ni, :nj, :nk].astype(np.float64)
        ok = (volume.valid_ascans.T[:ni, :nj] == 1)[:, :, None]
        total[:ni, :nj, :nk] += np.where(ok, vals, 0.0)
        count[:ni, :nj, :nk] += ok
    elif geometry.kind is GeometryKind.IDENTITY:
        ni, nj, nk = min(nb, volume.n_bscans), min(na, volume.n_ascans), min(nd, volume.n_depth)
        vals = volume.data[:ni, :nj, :nk].astype(np.float64)
        ok = (volume.valid_ascans[:ni, :nj] == 1)[:, :, None]
        total[:ni, :nj, :nk] += np.where(ok, vals, 0.0)
        count[:ni, :nj, :nk] += ok
    else:
        coords = geometry.mapping.reshape(-1, 3)
        vals, codes = interpolate_many(
            volume.data.astype(np.float64), volume.valid_ascans, coords
        )
        ok = codes == 0
        # cubic undershoot may dip just below zero; intensities stay valid
        vals = np.where(ok, np.maximum(vals, 0.0), 0.0)
        total += vals.reshape(total.shape)
        count += ok.reshape(count.shape)


def merge(
    volumes: Sequence[RasterVolume],
    geometries: Sequence[RegisteredGeometry | None],
) -> RasterVolume:
    """Uniform linear-scale mean over the contributing volumes on the first
    volume's grid.

    ``geometries[i]`` maps reference voxels into volume i's frame; the
    entry for the reference itself may be None.  A voxel contributes when
    its source data is valid (and, for fractional mappings, resamples
    cleanly).  A-scans that receive no contributor anywhere are invalid in
    the result.
    """
    if len(volumes) == 0:
        raise EmptyInputError("no volumes to merge")
    if len(geometries) != len(volumes):
        raise DimensionMismatchError("one geometry per volume is required")
    ref = volumes[0]
    total = np.zeros(ref.shape, dtype=np.float64)
    count = np.zeros(ref.shape, dtype=np.int64)
    _accumulate_reference(ref, total, count)
    for vol, geom in zip(volumes[1:], geometries[1:]):
        if geom is None:
            raise DimensionMismatchError("non-reference volumes need a geometry")
        if geom.source_shape != ref.shape:
            raise DimensionMismatchError(
                f"geometry built for {geom.source_shape}, reference is {ref.shape}"
            )
        _accumulate_mapped(vol, geom, total, count)
    data = np.divide(total, count, out=np.zeros_like(total), where=count > 0)
    data = data.astype(np.float32)
    data.flags.writeable = False
    covered = (count > 0).any(axis=2)[:, :, None]
    validity = np.broadcast_to(covered, ref.shape).astype(np.uint8)
    validity.flags.writeable = False
    return RasterVolume(
        data=data,
        direction=ref.direction,
        transverse_spacing_mm=ref.transverse_spacing_mm,
        axial_spacing_um=ref.axial_spacing_um,
        validity=validity,
    )


def enface(volume: RasterVolume, overlap_with: RasterVolume | None = None) -> EnfaceImage:
    """Depth mean per transverse position in linear scale.

    With ``overlap_with`` (a registered volume on the same grid), coverage
    is restricted to positions valid in both; uncovered pixels are zero.
    """
    coverage = volume.valid_ascans.astype(bool)
    if overlap_with is not None:
        if overlap_with.shape[:2] != volume.shape[:2]:
            raise DimensionMismatchError(
                f"overlap volume grid {overlap_with.shape[:2]} does not match {volume.shape[:2]}"
            )
        coverage = coverage & (overlap_with.valid_ascans == 1)
    pixels = volume.data.mean(axis=2, dtype=np.float64)
    pixels = np.where(coverage, pixels, 0.0)
    return EnfaceImage(pixels=pixels, coverage=coverage.astype(np.uint8))
