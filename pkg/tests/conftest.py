"""Shared construction helpers plus the end-of-run gate summary."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from orthoillum.objective import VolumeEntry, build_problem
from orthoillum.preprocessing import ForegroundMask
from orthoillum.spline import CorrectionField, build_knot_layout
from orthoillum.volume import (
    LogVolume,
    RegisteredGeometry,
    ScanDirection,
    new_raster_volume,
)

# filled by test_acceptance, printed after the run so every gate shows one line
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance gates")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def log_entry(
    rng,
    n_bscans: int,
    n_ascans: int,
    n_depth: int,
    direction: ScanDirection,
    density: float = 1.0,
    valid_fraction: float = 0.9,
    mask_fraction: float = 0.75,
    span_mm: float = 6.0,
) -> VolumeEntry:
    """One volume entry with random log signal, random foreground mask and
    random per-A-scan gaps; targets are left for the caller to attach."""
    shape = (n_bscans, n_ascans, n_depth)
    s = rng.normal(-1.0, 0.6, shape)
    valid = (rng.random((n_bscans, n_ascans)) < valid_fraction).astype(np.uint8)
    if not valid.any():
        valid[0, 0] = 1
    validity = np.ascontiguousarray(np.broadcast_to(valid[:, :, None], shape))
    spacing = span_mm / n_ascans
    volume = new_raster_volume(np.exp(s), direction, spacing, 2.0, validity)
    mask = ((rng.random(shape) < mask_fraction) & (validity == 1)).astype(np.uint8)
    log = LogVolume(
        data=s,
        direction=direction,
        transverse_spacing_mm=spacing,
        axial_spacing_um=2.0,
        validity=volume.validity,
    )
    layout = build_knot_layout(n_ascans, spacing, density)
    return VolumeEntry(
        volume=volume,
        log=log,
        mask=ForegroundMask(m=mask, threshold_used=0.0),
        layout=layout,
        targets={},
    )


def jittered_transpose(rng, source_shape, target_shape) -> RegisteredGeometry:
    """Dense geometry: the transpose mapping with fractional jitter, with a
    few samples pushed out of the target box."""
    nb, na, nd = source_shape
    grid = np.stack(
        np.meshgrid(
            np.arange(nb, dtype=np.float64),
            np.arange(na, dtype=np.float64),
            np.arange(nd, dtype=np.float64),
            indexing="ij",
        ),
        axis=-1,
    )
    mapping = grid[..., [1, 0, 2]] + rng.uniform(-0.45, 0.45, grid.shape)
    lost = rng.random((nb, na, nd)) < 0.08
    mapping[lost] += float(max(target_shape)) + 5.0
    return RegisteredGeometry.dense(mapping)


def random_pair_problem(
    rng,
    max_dim: int = 8,
    min_dim: int = 2,
    lam: float = 0.01,
    normalize: bool = True,
    dense: bool = False,
    depth_stride: int = 1,
    thread_count: int = 1,
    density_choices=(0.5, 1.0, 2.0),
):
    """An orthogonal two-volume problem on a shared grid with random data,
    masks, gaps and control values."""
    n_x = int(rng.integers(min_dim, max_dim + 1))
    n_y = int(rng.integers(min_dim, max_dim + 1))
    n_d = int(rng.integers(min_dim, max_dim + 1))
    density = float(rng.choice(density_choices))
    ex = log_entry(rng, n_y, n_x, n_d, ScanDirection.X_FAST, density)
    ey = log_entry(rng, n_x, n_y, n_d, ScanDirection.Y_FAST, density)
    if dense:
        gx = jittered_transpose(rng, ex.volume.shape, ey.volume.shape)
        gy = jittered_transpose(rng, ey.volume.shape, ex.volume.shape)
    else:
        gx = RegisteredGeometry.transpose(ex.volume.shape)
        gy = RegisteredGeometry.transpose(ey.volume.shape)
    entries = [replace(ex, targets={1: gx}), replace(ey, targets={0: gy})]
    problem = build_problem(
        entries,
        lam=lam,
        normalize=normalize,
        depth_stride=depth_stride,
        thread_count=thread_count,
    )
    fields = [
        CorrectionField(
            e.layout, rng.normal(0.0, 0.3, (e.volume.n_bscans, e.layout.n_knots))
        )
        for e in entries
    ]
    return problem, fields


def entry_from_log(
    s,
    direction: ScanDirection,
    mask=None,
    spacing_mm: float = 1.0,
    density: float = 1.0,
    validity=None,
) -> VolumeEntry:
    """Entry from explicit log values; mask defaults to every valid voxel."""
    s = np.ascontiguousarray(s, dtype=np.float64)
    volume = new_raster_volume(np.exp(s), direction, spacing_mm, 2.0, validity)
    if mask is None:
        mask = np.broadcast_to(volume.valid_ascans[:, :, None], s.shape)
    log = LogVolume(
        data=s,
        direction=direction,
        transverse_spacing_mm=spacing_mm,
        axial_spacing_um=2.0,
        validity=volume.validity,
    )
    layout = build_knot_layout(s.shape[1], spacing_mm, density)
    return VolumeEntry(
        volume=volume,
        log=log,
        mask=ForegroundMask(
            m=np.ascontiguousarray(mask, dtype=np.uint8), threshold_used=0.0
        ),
        layout=layout,
        targets={},
    )


def transpose_pair_problem(s_x, s_y, lam=0.01, normalize=True, density=1.0, **kw):
    """Exact-transpose two-volume problem from explicit log arrays."""
    ex = entry_from_log(s_x, ScanDirection.X_FAST, density=density, **kw)
    ey = entry_from_log(s_y, ScanDirection.Y_FAST, density=density, **kw)
    entries = [
        replace(ex, targets={1: RegisteredGeometry.transpose(ex.volume.shape)}),
        replace(ey, targets={0: RegisteredGeometry.transpose(ey.volume.shape)}),
    ]
    return build_problem(entries, lam=lam, normalize=normalize)
