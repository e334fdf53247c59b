"""End-to-end correction: prepare volumes, fit, apply, merge.

This is the piece the CLI drives; it wires the per-module steps together
with one configuration object and no hidden state.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

from .correction import apply_correction, merge
from .objective import (
    DEFAULT_LAMBDA,
    CorrectionProblem,
    VolumeEntry,
    build_problem,
)
from .optimizer import (
    OptimizationTrace,
    OptimizerConfig,
    default_config,
    optimize,
)
from .preprocessing import auto_top_rows, build_mask, default_epsilon, log_transform
from .spline import CorrectionField, build_knot_layout
from .volume import RasterVolume, RegisteredGeometry, orthogonal


@dataclass(frozen=True)
class RunConfig:
    lam: float = DEFAULT_LAMBDA
    density_per_mm: float = 1.0
    median_kernel: int = 3
    sigma_mult: float = 3.0
    learning_rate: float | None = None  # None: curvature-scaled automatically
    momentum: float = 0.9
    max_iterations: int = 500
    rel_tolerance: float = 1e-6
    log_every: int = 1
    thread_count: int = 1
    depth_stride: int = 1


@dataclass(frozen=True)
class CorrectionResult:
    problem: CorrectionProblem
    config: OptimizerConfig
    fields: list[CorrectionField]
    trace: OptimizationTrace
    corrected: list[RasterVolume]
    merged: RasterVolume


def prepare_entry(volume: RasterVolume, config: RunConfig) -> VolumeEntry:
    """Mask, log transform and knot layout for one volume (targets are
    attached later, once the whole set is known)."""
    mask = build_mask(
        volume,
        kernel=config.median_kernel,
        sigma_mult=config.sigma_mult,
        top_rows=auto_top_rows(volume.n_depth),
    )
    log = log_transform(volume, default_epsilon(volume))
    layout = build_knot_layout(
        volume.n_ascans, volume.transverse_spacing_mm, config.density_per_mm
    )
    return VolumeEntry(volume=volume, log=log, mask=mask, layout=layout, targets={})


def build_entries(
    volumes: Sequence[RasterVolume], config: RunConfig
) -> list[VolumeEntry]:
    prepared = [prepare_entry(v, config) for v in volumes]
    entries = []
    for i, entry in enumerate(prepared):
        targets = {
            j: RegisteredGeometry.transpose(entry.volume.shape)
            for j, other in enumerate(prepared)
            if j != i and orthogonal(entry.volume.direction, other.volume.direction)
        }
        entries.append(replace(entry, targets=targets))
    return entries


def merge_geometries(
    volumes: Sequence[RasterVolume],
) -> list[RegisteredGeometry | None]:
    """Geometries mapping the first volume's grid into each volume."""
    ref = volumes[0]
    geoms: list[RegisteredGeometry | None] = [None]
    for v in volumes[1:]:
        if orthogonal(ref.direction, v.direction):
            geoms.append(RegisteredGeometry.transpose(ref.shape))
        else:
            geoms.append(RegisteredGeometry.identity(ref.shape))
    return geoms


def run_correction(
    volumes: Sequence[RasterVolume], config: RunConfig | None = None
) -> CorrectionResult:
    if config is None:
        config = RunConfig()
    entries = build_entries(volumes, config)
    problem = build_problem(
        entries,
        lam=config.lam,
        depth_stride=config.depth_stride,
        thread_count=config.thread_count,
    )
    if config.learning_rate is None:
        opt_config = replace(
            default_config(problem),
            momentum=config.momentum,
            max_iterations=config.max_iterations,
            rel_tolerance=config.rel_tolerance,
            log_every=config.log_every,
        )
    else:
        opt_config = OptimizerConfig(
            learning_rate=config.learning_rate,
            momentum=config.momentum,
            max_iterations=config.max_iterations,
            rel_tolerance=config.rel_tolerance,
            log_every=config.log_every,
        )
    fields, trace = optimize(problem, opt_config)
    corrected = [
        apply_correction(e.volume, e.mask, f) for e, f in zip(entries, fields)
    ]
    merged = merge(corrected, merge_geometries(volumes))
    return CorrectionResult(
        problem=problem,
        config=opt_config,
        fields=fields,
        trace=trace,
        corrected=corrected,
        merged=merged,
    )


def reapply_corrections(
    volumes: Sequence[RasterVolume],
    fields: Sequence[CorrectionField],
    config: RunConfig | None = None,
) -> list[RasterVolume]:
    """Apply previously fitted fields to freshly loaded volumes, using the
    same mask construction as the fit (round-trip path)."""
    if config is None:
        config = RunConfig()
    out = []
    for volume, field in zip(volumes, fields):
        mask = build_mask(
            volume,
            kernel=config.median_kernel,
            sigma_mult=config.sigma_mult,
            top_rows=auto_top_rows(volume.n_depth),
        )
        out.append(apply_correction(volume, mask, field))
    return out
