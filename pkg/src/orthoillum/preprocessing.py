"""Log-domain signal and the binary foreground mask gating the correction.

The mask separates tissue signal (where the multiplicative model is
invertible) from noise-dominated background (which is copied through).
It is computed per volume, before any correction: median-filter each
B-scan in its (A-scan, depth) plane to knock down noise, then threshold
at the transition to the background noise level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backends
from .errors import (
    EvenKernelError,
    InsufficientBackgroundSamplesError,
    NonPositiveEpsilonError,
)
from .volume import LogVolume, RasterVolume

DEFAULT_MEDIAN_KERNEL = 3
DEFAULT_TOP_ROWS = 20
DEFAULT_SIGMA_MULT = 3.0
DEFAULT_EPSILON_FRACTION = 1e-6


@dataclass(frozen=True)
class ForegroundMask:
    """Binary tissue/background selector aligned with a volume."""

    m: np.ndarray  # uint8, same shape as the volume
    threshold_used: float


def default_epsilon(volume: RasterVolume) -> float:
    """Log floor: a small fraction of the volume maximum (keeps gaps finite
    without distorting foreground statistics)."""
    peak = float(volume.data.max()) if volume.data.size else 0.0
    return max(peak * DEFAULT_EPSILON_FRACTION, 1e-12)


def log_transform(volume: RasterVolume, epsilon: float) -> LogVolume:
    """Natural log of the intensities, floored at ``epsilon``."""
    if epsilon <= 0:
        raise NonPositiveEpsilonError(f"epsilon must be positive, got {epsilon}")
    s = np.log(np.maximum(volume.data.astype(np.float64), epsilon))
    s.flags.writeable = False
    return LogVolume(
        data=s,
        direction=volume.direction,
        transverse_spacing_mm=volume.transverse_spacing_mm,
        axial_spacing_um=volume.axial_spacing_um,
        validity=volume.validity,
    )


def median_filter_bscans(volume: RasterVolume, kernel: int = DEFAULT_MEDIAN_KERNEL) -> RasterVolume:
    """Median filter each B-scan in its 2D (A-scan, depth) plane.

    The window is clamped to the image at borders (no padding values are
    invented), invalid A-scans are excluded from every window and returned
    unfiltered.  Never mixes data across B-scans.
    """
    if kernel < 1 or kernel % 2 == 0:
        raise EvenKernelError(f"kernel must be odd and >= 1, got {kernel}")
    if kernel == 1:
        return volume
    backend = backends.active()
    out = np.empty_like(volume.data)
    valid = np.ascontiguousarray(volume.valid_ascans)
    for i in range(volume.n_bscans):
        out[i] = backend.median_filter_plane(
            np.ascontiguousarray(volume.data[i]), valid[i], kernel
        )
    out.flags.writeable = False
    return RasterVolume(
        data=out,
        direction=volume.direction,
        transverse_spacing_mm=volume.transverse_spacing_mm,
        axial_spacing_um=volume.axial_spacing_um,
        validity=volume.validity,
    )


def estimate_noise_floor(
    volume: RasterVolume,
    top_rows: int = DEFAULT_TOP_ROWS,
    sigma_mult: float = DEFAULT_SIGMA_MULT,
) -> float:
    """Threshold estimate mean + sigma_mult * std over the signal-free band.

    Uses the first ``top_rows`` depth samples of all valid A-scans, which
    by scan convention lie above the tissue and contain only noise.
    """
    if top_rows < 2 or top_rows >= volume.n_depth:
        raise InsufficientBackgroundSamplesError(
            f"top_rows must be in [2, {volume.n_depth - 1}], got {top_rows}"
        )
    region = volume.data[:, :, :top_rows][volume.validity[:, :, :top_rows] == 1]
    if region.size == 0:
        raise InsufficientBackgroundSamplesError("no valid A-scans to sample")
    region = region.astype(np.float64)
    return float(region.mean() + sigma_mult * region.std())


def compute_foreground_mask(
    filtered_volume: RasterVolume, t_min: float
) -> ForegroundMask:
    """Binary mask: 1 where the filtered intensity exceeds ``t_min`` on a
    valid A-scan, else 0."""
    m = ((filtered_volume.data > t_min) & (filtered_volume.validity == 1)).astype(
        np.uint8
    )
    m.flags.writeable = False
    return ForegroundMask(m=m, threshold_used=float(t_min))


def auto_top_rows(n_depth: int) -> int:
    """Depth-adapted default for :func:`estimate_noise_floor`: the standard
    20 rows for clinical-scale depths, a quarter of the depth on shallow
    volumes (stays above the tissue for any plausible geometry)."""
    if n_depth >= 40:
        return DEFAULT_TOP_ROWS
    return max(2, n_depth // 4)


def build_mask(
    volume: RasterVolume,
    kernel: int = DEFAULT_MEDIAN_KERNEL,
    sigma_mult: float = DEFAULT_SIGMA_MULT,
    top_rows: int | None = None,
    t_min: float | None = None,
) -> ForegroundMask:
    """Full mask pipeline: median filter, noise-floor estimate, threshold."""
    filtered = median_filter_bscans(volume, kernel)
    if t_min is None:
        if top_rows is None:
            top_rows = auto_top_rows(volume.n_depth)
        t_min = estimate_noise_floor(volume, top_rows, sigma_mult)
    return compute_foreground_mask(filtered, t_min)
