"""Cubic resampling of one volume at arbitrary grid positions of another.

Separable Catmull-Rom interpolation with a 4x4x4 support.  Samples are
excluded (not silently extrapolated) when the position falls outside the
volume or when the transverse support touches an invalid A-scan; the
caller decides what exclusion means (the objective simply drops the
residual).

These are the readable per-sample reference routines.  The batched
equivalents used in the hot loops live in the backends package and are
tested against these.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class ExclusionReason(enum.Enum):
    OUT_OF_BOUNDS = "out-of-bounds"
    GAP_IN_SUPPORT = "gap-in-support"


@dataclass(frozen=True)
class SampleResult:
    value: float | None
    excluded: ExclusionReason | None = None

    @property
    def ok(self) -> bool:
        return self.excluded is None


def cr_weights(f: float) -> np.ndarray:
    """Catmull-Rom convolution weights for taps at offsets -1..2 from the
    cell origin, with f the fractional position inside the cell."""
    f2 = f * f
    f3 = f2 * f
    return np.array(
        [
            (-f3 + 2.0 * f2 - f) / 2.0,
            (3.0 * f3 - 5.0 * f2 + 2.0) / 2.0,
            (-3.0 * f3 + 4.0 * f2 + f) / 2.0,
            (f3 - f2) / 2.0,
        ]
    )


def cr_axis_taps(x: float, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Tap indices (clamped to the axis) and weights for position ``x``.

    Caller must have bounds-checked x already; clamping here only fills
    the missing outer neighbours at the first and last cell.
    """
    base = int(np.floor(x))
    # keep the cell origin inside [0, dim-2] so x == dim-1 lands at f == 1
    if base > dim - 2:
        base = dim - 2
    if base < 0:
        base = 0
    f = x - base
    idx = np.clip(np.arange(base - 1, base + 3), 0, dim - 1)
    return idx, cr_weights(f)


def in_bounds(coord: np.ndarray, shape: tuple[int, int, int]) -> bool:
    return bool(
        np.all(coord >= 0.0) and np.all(coord <= np.asarray(shape, dtype=np.float64) - 1.0)
    )


def interpolate(
    data: np.ndarray, valid_ascans: np.ndarray, coord: np.ndarray
) -> SampleResult:
    """Resample ``data`` at a fractional (b-scan, a-scan, depth) position.

    ``valid_ascans`` is the (n_bscans, n_ascans) per-A-scan validity of the
    sampled volume.  Exclusions: position outside the index box, or any
    A-scan carrying nonzero transverse weight (after border clamping has
    merged duplicate taps) is invalid.
    """
    coord = np.asarray(coord, dtype=np.float64)
    if not in_bounds(coord, data.shape):
        return SampleResult(value=None, excluded=ExclusionReason.OUT_OF_BOUNDS)
    bi, bw = cr_axis_taps(float(coord[0]), data.shape[0])
    ai, aw = cr_axis_taps(float(coord[1]), data.shape[1])
    di, dw = cr_axis_taps(float(coord[2]), data.shape[2])

    # transverse gap check on merged weights: clamped duplicates collapse
    # into one tap, and taps that end up weightless do not gate the sample
    merged: dict[tuple[int, int], float] = {}
    for a in range(4):
        for b in range(4):
            key = (int(bi[a]), int(ai[b]))
            merged[key] = merged.get(key, 0.0) + float(bw[a] * aw[b])
    for (ib, ja), w in merged.items():
        if w != 0.0 and valid_ascans[ib, ja] == 0:
            return SampleResult(value=None, excluded=ExclusionReason.GAP_IN_SUPPORT)

    cube = data[np.ix_(bi, ai, di)].astype(np.float64)
    value = float(np.einsum("a,b,c,abc->", bw, aw, dw, cube))
    return SampleResult(value=value)


def interpolate_many(
    data: np.ndarray, valid_ascans: np.ndarray, coords: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised convenience wrapper: values plus exclusion codes
    (0 ok, 1 out-of-bounds, 2 gap); excluded entries hold NaN."""
    coords = np.asarray(coords, dtype=np.float64)
    values = np.full(coords.shape[0], np.nan)
    codes = np.zeros(coords.shape[0], dtype=np.uint8)
    for n in range(coords.shape[0]):
        res = interpolate(data, valid_ascans, coords[n])
        if res.excluded is ExclusionReason.OUT_OF_BOUNDS:
            codes[n] = 1
        elif res.excluded is ExclusionReason.GAP_IN_SUPPORT:
            codes[n] = 2
        else:
            values[n] = res.value
    return values, codes
