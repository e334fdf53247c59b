"""Synthetic orthogonal scan pairs with known illumination ground truth.

A shared backscattering block (layers, vessels, optional dark disk) is
scanned twice, once per fast axis.  Each B-scan gets its own log
illumination curve combining a slow random walk across B-scans, sudden
persistent jumps, banded offset runs, and a smooth within-B-scan wiggle;
the pair's shared smooth component, which the orthogonal observation
cannot determine, is removed from the truth.  Scans then receive noise,
gap runs, and optional blink rows.  Everything derives deterministically
from the seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .errors import DimensionMismatchError, MissingTruthError, ValidationError
from .spline import build_knot_layout, dense_basis_matrix
from .volume import RasterVolume, ScanDirection, new_raster_volume

TOP_BAND_ROWS = 20
GENERATOR_DENSITY = 8.0 / 3.0  # knots/mm, off the 1/mm model grid
MODEL_DENSITY = 1.0

# fixed stream tags so every component draws from its own seed lineage
_STREAM_BACKSCATTER = 0
_STREAM_ILLUM = 1
_STREAM_NOISE = 3
_STREAM_GAPS = 5
_STREAM_BLINK = 7


@dataclass(frozen=True)
class PhantomSpec:
    grid: tuple[int, int, int] = (128, 128, 64)  # (n_x, n_y, n_depth)
    layer_count: int = 4
    vessel_count: int = 6
    dark_disk: tuple[tuple[float, float], float] | None = None
    illum_amplitude: float = 0.4
    jump_probability: float = 0.3
    band_count: int = 2
    gap_count: int = 2
    blink_rows: int = 0
    noise_sigma: float = 0.01
    seed: int = 0
    transverse_span_mm: float = 6.0
    axial_spacing_um: float = 1.78
    spline_representable: bool = False

    def __post_init__(self):
        if len(self.grid) != 3 or any(int(d) < 8 for d in self.grid):
            raise ValidationError(f"grid dims must each be >= 8, got {self.grid}")
        if self.illum_amplitude < 0:
            raise ValidationError("illum_amplitude must be >= 0")
        if not 0 <= self.jump_probability <= 1:
            raise ValidationError("jump_probability must be in [0, 1]")
        if min(self.layer_count, self.vessel_count, self.band_count,
               self.gap_count, self.blink_rows) < 0:
            raise ValidationError("counts must be >= 0")
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be >= 0")
        if self.transverse_span_mm <= 0 or self.axial_spacing_um <= 0:
            raise ValidationError("spacings must be positive")


@dataclass(frozen=True)
class PhantomTruth:
    spec: PhantomSpec
    backscatter: np.ndarray  # (n_x, n_y, n_depth) float32 in [0, 1]
    log_illumination: Mapping[ScanDirection, np.ndarray]  # (n_bscans, n_ascans)
    foreground_truth: np.ndarray  # uint8, grid orientation


def _rng(seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(tag,)))


def top_band_rows(n_depth: int) -> int:
    """Signal-free rows above the tissue (the noise-floor sampling region);
    the standard 20 rows, shrunk proportionally on very shallow grids."""
    if n_depth >= 30:
        return TOP_BAND_ROWS
    return max(3, n_depth // 3)


def scan_frame(spec: PhantomSpec, direction: ScanDirection) -> tuple[int, int, float]:
    """(n_bscans, n_ascans, A-scan spacing in mm) of one scan of the grid."""
    n_x, n_y, _ = spec.grid
    if direction is ScanDirection.X_FAST:
        return n_y, n_x, spec.transverse_span_mm / n_x
    return n_x, n_y, spec.transverse_span_mm / n_y


def generate_backscatter(spec: PhantomSpec) -> PhantomTruth:
    """Structure only: layered block with undulating surface, dark vessel
    tubes, optional dark disk, and an empty top band."""
    n_x, n_y, n_depth = spec.grid
    rng = _rng(spec.seed, _STREAM_BACKSCATTER)
    top = top_band_rows(n_depth)
    tissue = n_depth - top

    # smooth surface elevation in [0, ~tissue/8]
    amp = 0.125 * tissue
    phases = rng.uniform(0, 2 * np.pi, 3)
    weights = rng.uniform(0.5, 1.0, 3)
    x = np.arange(n_x)[:, None]
    y = np.arange(n_y)[None, :]
    mix = (
        weights[0] * np.sin(2 * np.pi * x / n_x + phases[0])
        + weights[1] * np.sin(2 * np.pi * y / n_y + phases[1])
        + weights[2] * np.sin(2 * np.pi * (x + y) / (n_x + n_y) + phases[2])
    ) / weights.sum()
    elevation = amp * 0.5 * (1.0 + mix)

    n_layers = max(1, spec.layer_count)
    widths = rng.uniform(0.5, 1.5, n_layers)
    cuts = np.cumsum(widths) / widths.sum()  # in (0, 1]
    signs = np.where(np.arange(n_layers) % 2 == 0, 1.0, -1.0)
    values = np.clip(0.7 + signs * rng.uniform(0.1, 0.25, n_layers), 0.45, 0.95)
    if spec.layer_count == 0:
        values[:] = 0.7

    back = np.zeros(spec.grid, dtype=np.float32)
    k = np.arange(n_depth)[None, :]
    for ix in range(n_x):  # slab at a time keeps the temporaries small
        start = top + elevation[ix][:, None]
        rel = (k - start) / np.maximum(n_depth - start, 1.0)
        layer = np.clip(np.searchsorted(cuts, np.clip(rel, 0.0, 1.0)), 0, n_layers - 1)
        slab = values[layer]
        slab[rel < 0] = 0.0
        back[ix] = slab.astype(np.float32)

    for _ in range(spec.vessel_count):
        along_x = rng.random() < 0.5
        radius = rng.uniform(1.0, max(2.0, tissue / 10.0))
        kc = rng.uniform(top + 0.25 * tissue, top + 0.75 * tissue)
        if along_x:
            yc = rng.uniform(0, n_y - 1)
            disk = (y[0][:, None] - yc) ** 2 + (k - kc) ** 2 <= radius**2
            back *= np.where(disk, 0.25, 1.0)[None, :, :].astype(np.float32)
        else:
            xc = rng.uniform(0, n_x - 1)
            disk = (x[:, 0][:, None] - xc) ** 2 + (k - kc) ** 2 <= radius**2
            back *= np.where(disk, 0.25, 1.0)[:, None, :].astype(np.float32)

    if spec.dark_disk is not None:
        (cx, cy), radius = spec.dark_disk
        inside = (x - cx) ** 2 + (y - cy) ** 2 <= radius**2
        back *= np.where(inside, 0.3, 1.0)[:, :, None].astype(np.float32)

    np.clip(back, 0.0, 1.0, out=back)
    foreground = (back > 0).astype(np.uint8)
    back.flags.writeable = False
    foreground.flags.writeable = False
    return PhantomTruth(
        spec=spec,
        backscatter=back,
        log_illumination=MappingProxyType({}),
        foreground_truth=foreground,
    )


def _ar1(rng, rho: float, sigma: float, shape) -> np.ndarray:
    """Mean-reverting series along axis 0 with stationary std sigma."""
    innov = rng.normal(0.0, sigma * np.sqrt(1.0 - rho * rho), shape)
    out = np.empty(shape)
    out[0] = rng.normal(0.0, sigma, shape[1:])
    for i in range(1, shape[0]):
        out[i] = rho * out[i - 1] + innov[i]
    return out


def generate_illumination(spec: PhantomSpec, direction: ScanDirection) -> np.ndarray:
    """Per-B-scan log illumination: per-scan offsets (slow walk + persistent
    jumps + banded runs) plus a smooth within-B-scan wiggle whose shape
    churns from one B-scan to the next, all bounded by the amplitude.
    The wiggle lives on a denser knot grid than the model unless
    spline_representable asks for the model grid itself."""
    nb, na, spacing = scan_frame(spec, direction)
    amp = spec.illum_amplitude
    if amp == 0.0:
        return np.zeros((nb, na))
    dir_index = 0 if direction is ScanDirection.X_FAST else 1
    rng = _rng(spec.seed, _STREAM_ILLUM + dir_index)

    steps = rng.normal(0.0, 0.03 * amp, nb)
    steps[0] = rng.normal(0.0, 0.15 * amp)
    jump_draws = rng.random(nb)
    jump_sizes = rng.uniform(0.25 * amp, 0.7 * amp, nb) * rng.choice([-1.0, 1.0], nb)
    steps[1:] += np.where(jump_draws[1:] < spec.jump_probability, jump_sizes[1:], 0.0)
    offsets = np.cumsum(steps)

    for _ in range(spec.band_count):
        start = int(rng.integers(1, max(2, nb - 2)))
        length = int(rng.integers(max(2, nb // 16), max(3, nb // 6)))
        end = min(start + length, nb - 1)
        offsets[start:end] += rng.uniform(0.4 * amp, 0.7 * amp) * rng.choice([-1.0, 1.0])

    density = MODEL_DENSITY if spec.spline_representable else GENERATOR_DENSITY
    layout = build_knot_layout(na, spacing, density)
    basis = dense_basis_matrix(layout)  # (na, K)
    n_knots = layout.n_knots
    # smooth transverse modes; coefficients mean-revert quickly across
    # B-scans (tear-film flicker churns much faster than it drifts)
    knot_pos = layout.knot_positions / max(na - 1, 1)
    modes = np.stack(
        [np.sin(np.pi * knot_pos), np.cos(np.pi * knot_pos), np.sin(2 * np.pi * knot_pos)]
    )
    coef = _ar1(rng, 0.5, 0.10 * amp, (nb, 3))
    knots = coef @ modes
    # fine per-knot texture keeps the truth off the model grid
    knots += _ar1(rng, 0.5, 0.012 * amp, (nb, n_knots))

    curves = offsets[:, None] + knots @ basis.T
    peak = np.abs(curves).max()
    if peak > amp:
        curves *= amp / peak
    return curves


def _row_control_fit(curves, basis, weights) -> np.ndarray:
    """Per-row weighted least-squares spline coefficients of the curves."""
    gram = np.einsum("ij,jp,jq->ipq", weights, basis, basis)
    rhs = np.einsum("ij,ij,jp->ip", weights, curves, basis)
    ridge = 1e-9 * max(float(np.trace(gram.sum(axis=0))), 1.0)
    gram += ridge * np.eye(basis.shape[1])[None, :, :]
    return np.linalg.solve(gram, rhs[:, :, None])[:, :, 0]


def _pair_shared_component(spec: PhantomSpec, truth_x, truth_y, weights) -> np.ndarray:
    """Smooth surface that is simultaneously a model spline along both
    transverse axes, matching the pair's shared illumination component.

    A pattern of that form, applied to both scans, changes the two volumes
    identically, so the pair observation cannot distinguish it from
    tissue.  The fit happens on the volumes' spline coefficients (the
    coordinates the correction model actually optimizes over), because
    that is the geometry in which the unidentifiable component splits off.
    Returns the surface in the X-fast frame (n_y, n_x).
    """
    n_x, n_y, _ = spec.grid
    b_x = dense_basis_matrix(
        build_knot_layout(n_x, spec.transverse_span_mm / n_x, MODEL_DENSITY)
    )  # (n_x, Kx)
    b_y = dense_basis_matrix(
        build_knot_layout(n_y, spec.transverse_span_mm / n_y, MODEL_DENSITY)
    )  # (n_y, Ky)
    k_x, k_y = b_x.shape[1], b_y.shape[1]
    if not weights.any():
        return np.zeros((n_y, n_x))
    # control coefficients each volume's fit would see for these curves
    f_x = _row_control_fit(truth_x, b_x, weights)  # (n_y, Kx)
    f_y = _row_control_fit(truth_y, b_y, weights.T)  # (n_x, Ky)
    # coefficients A of psi(i,j) = sum_qp A[q,p] b_y[i,q] b_x[j,p] whose
    # control representation is closest to (f_x, f_y) jointly
    gram = np.kron(b_y.T @ b_y, np.eye(k_x)) + np.kron(np.eye(k_y), b_x.T @ b_x)
    rhs = (b_y.T @ f_x + (b_x.T @ f_y).T).ravel()
    coef = np.linalg.solve(gram, rhs).reshape(k_y, k_x)
    return b_y @ coef @ b_x.T


def generate_truth(spec: PhantomSpec) -> PhantomTruth:
    """Backscatter plus one illumination truth per scan direction.

    The two raw draws share their foreground-weighted smooth-in-both-axes
    component removed (see _pair_shared_component); the remainder is
    rescaled to stay inside the amplitude bound.  Rescaling is linear, so
    the removal survives it.
    """
    partial = generate_backscatter(spec)
    raw_x = generate_illumination(spec, ScanDirection.X_FAST)  # (n_y, n_x)
    raw_y = generate_illumination(spec, ScanDirection.Y_FAST)  # (n_x, n_y)
    amp = spec.illum_amplitude
    if amp > 0.0:
        weights = partial.foreground_truth.sum(axis=2, dtype=np.float64).T  # (n_y, n_x)
        shared = _pair_shared_component(spec, raw_x, raw_y, weights)
        raw_x = raw_x - shared
        raw_y = raw_y - shared.T
        peak = max(np.abs(raw_x).max(), np.abs(raw_y).max())
        if peak > amp:
            scale = amp / peak
            raw_x = raw_x * scale
            raw_y = raw_y * scale
    illum = {ScanDirection.X_FAST: raw_x, ScanDirection.Y_FAST: raw_y}
    for c in illum.values():
        c.flags.writeable = False
    return PhantomTruth(
        spec=spec,
        backscatter=partial.backscatter,
        log_illumination=MappingProxyType(illum),
        foreground_truth=partial.foreground_truth,
    )


def simulate_scan(
    truth: PhantomTruth, spec: PhantomSpec, direction: ScanDirection
) -> RasterVolume:
    """One acquisition: orient the grid along the fast axis, apply the
    illumination, add noise, then cut gaps and blink rows."""
    if truth.backscatter.shape != tuple(spec.grid):
        raise DimensionMismatchError(
            f"truth grid {truth.backscatter.shape} does not match spec {spec.grid}"
        )
    if direction not in truth.log_illumination:
        raise MissingTruthError(f"truth has no illumination for {direction.value}")
    nb, na, spacing = scan_frame(spec, direction)
    dir_index = 0 if direction is ScanDirection.X_FAST else 1

    if direction is ScanDirection.X_FAST:
        base = truth.backscatter.transpose(1, 0, 2).astype(np.float64)
    else:
        base = truth.backscatter.astype(np.float64)
    data = base * np.exp(truth.log_illumination[direction])[:, :, None]

    sigma = spec.noise_sigma
    if sigma > 0:
        # pedestal keeps the zero clip rare, so background std stays ~sigma
        noise_rng = _rng(spec.seed, _STREAM_NOISE + dir_index)
        data += noise_rng.normal(2.0 * sigma, sigma, data.shape)
        np.clip(data, 0.0, None, out=data)

    valid = np.ones((nb, na), dtype=np.uint8)
    if spec.gap_count > 0:
        gap_rng = _rng(spec.seed, _STREAM_GAPS + dir_index)
        max_run = max(2, na // 32)
        for _ in range(spec.gap_count):
            b = int(gap_rng.integers(0, nb))
            a0 = int(gap_rng.integers(0, na))
            run = int(gap_rng.integers(1, max_run + 1))
            valid[b, a0 : a0 + run] = 0
    if spec.blink_rows > 0:
        blink_rng = _rng(spec.seed, _STREAM_BLINK + dir_index)
        start = int(blink_rng.integers(0, nb - spec.blink_rows + 1))
        valid[start : start + spec.blink_rows, :] = 0

    data[valid == 0] = 0.0
    validity = np.ascontiguousarray(np.broadcast_to(valid[:, :, None], data.shape))
    return new_raster_volume(
        data=data.astype(np.float32),
        direction=direction,
        transverse_spacing_mm=spacing,
        axial_spacing_um=spec.axial_spacing_um,
        validity=validity,
    )


def generate_pair(spec: PhantomSpec) -> tuple[PhantomTruth, RasterVolume, RasterVolume]:
    """Truth plus the X-fast and Y-fast scans of it."""
    truth = generate_truth(spec)
    vol_x = simulate_scan(truth, spec, ScanDirection.X_FAST)
    vol_y = simulate_scan(truth, spec, ScanDirection.Y_FAST)
    return truth, vol_x, vol_y


def truth_foreground_ascans(truth: PhantomTruth, direction: ScanDirection) -> np.ndarray:
    """Per-A-scan tissue indicator in the orientation of one scan."""
    fg = truth.foreground_truth
    if direction is ScanDirection.X_FAST:
        fg = fg.transpose(1, 0, 2)
    return np.ascontiguousarray(fg.any(axis=2)).astype(np.uint8)
