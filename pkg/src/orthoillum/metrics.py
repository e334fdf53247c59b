"""Correction quality numbers.

Two views: the clinical protocol (mean absolute difference between
overlap-restricted linear enfaces of the registered pair, before vs
after) and, when phantom ground truth exists, the RMS error between the
applied correction and the negated true log illumination, both reduced
modulo the one global constant the data cannot determine.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .correction import EnfaceImage, enface
from .errors import DimensionMismatchError, EmptyOverlapError, MissingTruthError
from .volume import RasterVolume


@dataclass(frozen=True)
class EvaluationReport:
    mad_before: float
    mad_after: float
    reduction_percent: float
    decreased: bool
    illum_rmse_before: float | None = None
    illum_rmse_after: float | None = None


def mad_between_enfaces(e1: EnfaceImage, e2: EnfaceImage) -> float:
    """Mean absolute pixel difference over positions covered in both."""
    if e1.pixels.shape != e2.pixels.shape:
        raise DimensionMismatchError(
            f"enface shapes differ: {e1.pixels.shape} vs {e2.pixels.shape}"
        )
    both = (e1.coverage == 1) & (e2.coverage == 1)
    if not both.any():
        raise EmptyOverlapError("no pixel is covered in both enfaces")
    return float(np.abs(e1.pixels[both] - e2.pixels[both]).mean())


def _crop_to_common(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    nr = min(a.shape[0], b.shape[0])
    nc = min(a.shape[1], b.shape[1])
    return a[:nr, :nc], b[:nr, :nc]


def pair_enfaces(v1: RasterVolume, v2: RasterVolume) -> tuple[EnfaceImage, EnfaceImage]:
    """Enfaces of an orthogonal pair on v1's grid, mutually overlap
    restricted.  v2's image is transposed into v1's orientation; grids of
    unequal extent are cropped to the common box."""
    e1 = enface(v1)
    e2 = enface(v2)
    p1, p2 = _crop_to_common(e1.pixels, e2.pixels.T)
    c1, c2 = _crop_to_common(e1.coverage, e2.coverage.T)
    both = (c1 == 1) & (c2 == 1)
    cov = both.astype(np.uint8)
    return (
        EnfaceImage(pixels=np.where(both, p1, 0.0), coverage=cov),
        EnfaceImage(pixels=np.where(both, p2, 0.0), coverage=cov),
    )


def scanline_jumps(image: EnfaceImage) -> np.ndarray:
    """Absolute difference of consecutive scanline means (covered pixels
    only); NaN where a scanline has no coverage."""
    cov = image.coverage == 1
    counts = cov.sum(axis=1)
    sums = np.where(cov, image.pixels, 0.0).sum(axis=1)
    means = np.divide(sums, counts, out=np.full(len(counts), np.nan), where=counts > 0)
    return np.abs(np.diff(means))


def applied_correction_curves(
    before: RasterVolume, after: RasterVolume
) -> tuple[np.ndarray, np.ndarray]:
    """Recover per-A-scan log correction from a before/after pair.

    Foreground voxels of one A-scan all carry the same factor, so the mean
    log ratio over changed voxels is the applied value; A-scans with no
    changed voxel report 0 with estimated=0.
    Returns (curves, estimated) both shaped (n_bscans, n_ascans).
    """
    if before.shape != after.shape:
        raise DimensionMismatchError("before/after volumes differ in shape")
    b = before.data.astype(np.float64)
    a = after.data.astype(np.float64)
    changed = (a != b) & (b > 0) & (a > 0)
    ratio = np.zeros_like(b)
    np.log(np.divide(a, b, out=np.ones_like(b), where=changed), out=ratio)
    ratio[~changed] = 0.0
    n = changed.sum(axis=2)
    curves = np.divide(
        ratio.sum(axis=2), n, out=np.zeros((before.n_bscans, before.n_ascans)), where=n > 0
    )
    return curves, (n > 0).astype(np.uint8)


def illumination_recovery_error(
    curves: Sequence[np.ndarray],
    truth_curves: Sequence[np.ndarray],
    include: Sequence[np.ndarray],
) -> float:
    """RMS distance between applied corrections and the negated true log
    illumination over the included A-scans of all volumes, after removing
    each side's mean over that same set (the zero-sum gauge)."""
    if len(curves) != len(truth_curves) or len(curves) != len(include):
        raise DimensionMismatchError("curves, truth and masks must align")
    got, want = [], []
    for c, t, m in zip(curves, truth_curves, include):
        if c.shape != t.shape or c.shape != m.shape:
            raise DimensionMismatchError("per-volume curve shapes must match")
        sel = m == 1
        got.append(np.asarray(c, dtype=np.float64)[sel])
        want.append(-np.asarray(t, dtype=np.float64)[sel])
    got = np.concatenate(got)
    want = np.concatenate(want)
    if got.size == 0:
        raise MissingTruthError("no A-scans included in the truth comparison")
    got -= got.mean()
    want -= want.mean()
    return float(np.sqrt(np.mean((got - want) ** 2)))


def evaluate_pair(
    before_volumes: Sequence[RasterVolume],
    after_volumes: Sequence[RasterVolume],
    truth_curves: Sequence[np.ndarray] | None = None,
    truth_foreground: Sequence[np.ndarray] | None = None,
) -> EvaluationReport:
    """Before/after comparison of an orthogonal pair, plus ground-truth
    recovery errors when the phantom truth is supplied."""
    if len(before_volumes) != 2 or len(after_volumes) != 2:
        raise DimensionMismatchError("evaluation expects exactly two volumes per stage")
    eb1, eb2 = pair_enfaces(*before_volumes)
    ea1, ea2 = pair_enfaces(*after_volumes)
    mad_before = mad_between_enfaces(eb1, eb2)
    mad_after = mad_between_enfaces(ea1, ea2)
    reduction = 100.0 * (1.0 - mad_after / mad_before) if mad_before > 0 else 0.0

    rmse_before = rmse_after = None
    if truth_curves is not None:
        if truth_foreground is None:
            raise MissingTruthError("truth curves need the truth foreground masks")
        include = [
            (fg == 1) & (vol.valid_ascans == 1)
            for fg, vol in zip(truth_foreground, before_volumes)
        ]
        include = [m.astype(np.uint8) for m in include]
        applied = [
            applied_correction_curves(b, a)[0]
            for b, a in zip(before_volumes, after_volumes)
        ]
        zero = [np.zeros_like(c) for c in applied]
        rmse_before = illumination_recovery_error(zero, truth_curves, include)
        rmse_after = illumination_recovery_error(applied, truth_curves, include)

    return EvaluationReport(
        mad_before=mad_before,
        mad_after=mad_after,
        reduction_percent=float(reduction),
        decreased=bool(mad_after < mad_before),
        illum_rmse_before=rmse_before,
        illum_rmse_after=rmse_after,
    )
