"""The fitted quantity: squared cross-volume log differences plus an L2
penalty on the control values, under a global zero-sum constraint.

For each volume M (the moving side) and each of its orthogonal targets T,
every foreground voxel of M on a valid A-scan contributes
``(corrected_M - resampled corrected_T)**2``; samples that leave T or
whose transverse support touches an invalid T A-scan are dropped.  The
zero-sum constraint is enforced by exact mean subtraction, not a penalty.

By default the data term is divided by the residual count and the penalty
by the control count, so the weight ``lam`` transfers across volume sizes.
The raw (unnormalized) sums remain available via ``normalize=False``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import backends
from .errors import (
    DimensionMismatchError,
    NoOrthogonalTargetError,
    ValidationError,
)
from .preprocessing import ForegroundMask
from .spline import CorrectionField, KnotLayout, eval_field, integer_basis, zero_field
from .volume import (
    GeometryKind,
    LogVolume,
    RasterVolume,
    RegisteredGeometry,
    orthogonal,
)

DEFAULT_LAMBDA = 0.01
CHUNK_ROWS = 8  # B-scans per kernel call; fixed so results never depend on thread count

_GEOM_CODES = {
    GeometryKind.IDENTITY: 0,
    GeometryKind.TRANSPOSE: 1,
    GeometryKind.DENSE: 2,
}


@dataclass(frozen=True)
class VolumeEntry:
    """One volume with everything the data term needs about it."""

    volume: RasterVolume
    log: LogVolume
    mask: ForegroundMask
    layout: KnotLayout
    targets: Mapping[int, RegisteredGeometry]  # target volume index -> geometry


@dataclass(frozen=True)
class CorrectionProblem:
    entries: tuple[VolumeEntry, ...]
    lam: float = DEFAULT_LAMBDA
    normalize: bool = True
    depth_stride: int = 1
    thread_count: int = 1


@dataclass(frozen=True)
class ObjectiveReport:
    total: float
    data_terms: tuple[float, ...]  # per volume, same scaling as total
    regularizer: float
    constraint_value: float
    residual_count: int
    gradients: tuple[np.ndarray, ...]  # per volume, (n_bscans, n_knots)


def build_problem(
    entries: Sequence[VolumeEntry],
    lam: float = DEFAULT_LAMBDA,
    normalize: bool = True,
    depth_stride: int = 1,
    thread_count: int = 1,
) -> CorrectionProblem:
    entries = tuple(entries)
    if len(entries) < 2:
        raise ValidationError(f"need at least 2 volumes, got {len(entries)}")
    if len({e.volume.direction for e in entries}) < 2:
        raise NoOrthogonalTargetError(
            "all volumes share one scan direction; no orthogonal target available"
        )
    if lam < 0:
        raise ValidationError(f"lam must be >= 0, got {lam}")
    if depth_stride < 1:
        raise ValidationError(f"depth_stride must be >= 1, got {depth_stride}")
    if thread_count < 1:
        raise ValidationError(f"thread_count must be >= 1, got {thread_count}")
    for idx, e in enumerate(entries):
        if e.log.data.shape != e.volume.shape or e.mask.m.shape != e.volume.shape:
            raise DimensionMismatchError(f"volume {idx}: log/mask shape mismatch")
        if e.layout.n_ascans != e.volume.n_ascans:
            raise DimensionMismatchError(f"volume {idx}: layout built for another width")
        if not e.targets:
            raise NoOrthogonalTargetError(f"volume {idx} has no orthogonal target")
        for ti, geom in e.targets.items():
            if not 0 <= ti < len(entries) or ti == idx:
                raise ValidationError(f"volume {idx}: bad target index {ti}")
            if not orthogonal(e.volume.direction, entries[ti].volume.direction):
                raise NoOrthogonalTargetError(
                    f"volume {idx}: target {ti} shares its scan direction"
                )
            if geom.source_shape != e.volume.shape:
                raise DimensionMismatchError(
                    f"volume {idx}: geometry built for shape {geom.source_shape}"
                )
    return CorrectionProblem(
        entries=entries,
        lam=lam,
        normalize=normalize,
        depth_stride=depth_stride,
        thread_count=thread_count,
    )


def zero_fields(problem: CorrectionProblem) -> list[CorrectionField]:
    """The uniform-illumination start: every control value 0."""
    return [zero_field(e.layout, e.volume.n_bscans) for e in problem.entries]


def corrected_log_value(s: float, m: int, c_value: float) -> float:
    """Correction in the log domain: added where masked as tissue,
    background passes through."""
    return s + m * c_value


def regularizer(fields: Sequence[CorrectionField]) -> tuple[float, list[np.ndarray]]:
    """Sum of squared control values and its gradient, unnormalized."""
    value = 0.0
    grads = []
    for f in fields:
        value += float((f.values * f.values).sum())
        grads.append(2.0 * f.values)
    return value, grads


def constraint_value(fields: Sequence[CorrectionField]) -> float:
    """Sum of every control value across all volumes."""
    return float(sum(f.values.sum() for f in fields))


def control_count(fields: Sequence[CorrectionField]) -> int:
    return int(sum(f.values.size for f in fields))


def project_constraint(fields: Sequence[CorrectionField]) -> list[CorrectionField]:
    """Exact projection onto the zero-sum subspace (global mean removal)."""
    n = control_count(fields)
    if n == 0:
        return list(fields)
    mean = constraint_value(fields) / n
    return [CorrectionField(f.layout, f.values - mean) for f in fields]


def _check_fields(problem: CorrectionProblem, fields: Sequence[CorrectionField]) -> None:
    if len(fields) != len(problem.entries):
        raise DimensionMismatchError(
            f"expected {len(problem.entries)} correction fields, got {len(fields)}"
        )
    for idx, (f, e) in enumerate(zip(fields, problem.entries)):
        if f.values.shape != (e.volume.n_bscans, e.layout.n_knots):
            raise DimensionMismatchError(f"field {idx} does not match its volume")


class _VolumeArrays:
    """Contiguous kernel-ready views of one entry plus its current field."""

    def __init__(self, entry: VolumeEntry, field: CorrectionField):
        self.s = np.ascontiguousarray(entry.log.data, dtype=np.float64)
        self.mask = np.ascontiguousarray(entry.mask.m)
        self.valid = np.ascontiguousarray(entry.volume.valid_ascans)
        self.ceval = np.ascontiguousarray(eval_field(field))
        bidx, bw = integer_basis(entry.layout)
        self.bidx = np.ascontiguousarray(bidx)
        self.bw = np.ascontiguousarray(bw)


def _pair_jobs(problem: CorrectionProblem) -> list[tuple[int, int, RegisteredGeometry, int, int]]:
    jobs = []
    for mi, e in enumerate(problem.entries):
        nb = e.volume.n_bscans
        for ti in sorted(e.targets):
            geom = e.targets[ti]
            for rs in range(0, nb, CHUNK_ROWS):
                jobs.append((mi, ti, geom, rs, min(rs + CHUNK_ROWS, nb)))
    return jobs


def _run_pairs(
    problem: CorrectionProblem,
    arrays: list[_VolumeArrays],
    jobs: list[tuple[int, int, RegisteredGeometry, int, int]],
    grads: list[np.ndarray],
    data_raw: list[float],
) -> int:
    backend = backends.active()

    def run(job):
        mi, ti, geom, rs, re = job
        am, at = arrays[mi], arrays[ti]
        gm = np.zeros_like(grads[mi])
        gt = np.zeros_like(grads[ti])
        rss, cnt = backend.data_term_pair(
            am.s, am.mask, am.valid, am.ceval, am.bidx, am.bw,
            at.s, at.mask, at.valid, at.ceval, at.bidx, at.bw,
            _GEOM_CODES[geom.kind], geom.mapping, problem.depth_stride,
            rs, re, gm, gt,
        )
        return rss, cnt, gm, gt

    if problem.thread_count > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=problem.thread_count) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]

    count = 0
    # merge in job order so the reduction order is fixed
    for (mi, ti, _, _, _), (rss, cnt, gm, gt) in zip(jobs, results):
        data_raw[mi] += rss
        count += cnt
        grads[mi] += gm
        grads[ti] += gt
    return count


def data_term(
    problem: CorrectionProblem, index: int, fields: Sequence[CorrectionField]
) -> tuple[float, list[np.ndarray]]:
    """Raw squared-difference sum for one moving volume and the gradient
    contributions it induces on every volume's control values."""
    _check_fields(problem, fields)
    entry = problem.entries[index]
    if not entry.targets:
        raise NoOrthogonalTargetError(f"volume {index} has no orthogonal target")
    arrays = [_VolumeArrays(e, f) for e, f in zip(problem.entries, fields)]
    grads = [np.zeros_like(f.values) for f in fields]
    data_raw = [0.0] * len(fields)
    jobs = [j for j in _pair_jobs(problem) if j[0] == index]
    _run_pairs(problem, arrays, jobs, grads, data_raw)
    return data_raw[index], grads


def evaluate(
    problem: CorrectionProblem, fields: Sequence[CorrectionField] | None = None
) -> ObjectiveReport:
    """Objective value and gradient at ``fields`` (zeros when omitted)."""
    if fields is None:
        fields = zero_fields(problem)
    _check_fields(problem, fields)
    arrays = [_VolumeArrays(e, f) for e, f in zip(problem.entries, fields)]
    grads = [np.zeros_like(f.values) for f in fields]
    data_raw = [0.0] * len(fields)
    count = _run_pairs(problem, arrays, _pair_jobs(problem), grads, data_raw)

    reg_raw, reg_grads = regularizer(fields)
    if problem.normalize:
        n_ctl = control_count(fields)
        dscale = 1.0 / count if count else 0.0
        rscale = 1.0 / n_ctl if n_ctl else 0.0
    else:
        dscale = 1.0
        rscale = 1.0
    data_terms = tuple(v * dscale for v in data_raw)
    reg = reg_raw * rscale
    total = sum(data_terms) + problem.lam * reg
    gradients = tuple(
        g * dscale + problem.lam * rscale * rg for g, rg in zip(grads, reg_grads)
    )
    return ObjectiveReport(
        total=float(total),
        data_terms=data_terms,
        regularizer=float(reg),
        constraint_value=constraint_value(fields),
        residual_count=count,
        gradients=gradients,
    )
