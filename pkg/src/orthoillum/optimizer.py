"""Projected momentum descent on the correction objective.

Starts from zero corrections (uniform illumination), takes heavy-ball
steps, and re-projects the iterate onto the zero-sum subspace after every
update, so the constraint holds exactly at all times.  The step size
defaults to half the inverse of a power-iteration curvature estimate.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError
from .objective import (
    CorrectionProblem,
    evaluate,
    project_constraint,
    zero_fields,
)
from .spline import CorrectionField

CONVERGENCE_WINDOW = 5
POWER_ITERATIONS = 10
FALLBACK_LR = 1e-2


class TerminationReason(enum.Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max-iterations"
    DIVERGED = "diverged"


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float
    momentum: float = 0.9
    max_iterations: int = 500
    rel_tolerance: float = 1e-6
    log_every: int = 1

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ValidationError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.max_iterations < 1:
            raise ValidationError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.rel_tolerance <= 0:
            raise ValidationError(f"rel_tolerance must be > 0, got {self.rel_tolerance}")
        if self.log_every < 1:
            raise ValidationError(f"log_every must be >= 1, got {self.log_every}")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    total: float
    data: float
    regularizer: float
    gradient_norm: float
    step_norm: float
    constraint: float


@dataclass(frozen=True)
class OptimizationTrace:
    records: tuple[IterationRecord, ...]
    termination_reason: TerminationReason


def _stack(arrays) -> np.ndarray:
    return np.concatenate([np.asarray(a).ravel() for a in arrays])


def _record(it: int, report, step_norm: float) -> IterationRecord:
    return IterationRecord(
        iteration=it,
        total=report.total,
        data=float(sum(report.data_terms)),
        regularizer=report.regularizer,
        gradient_norm=float(np.linalg.norm(_stack(report.gradients))),
        step_norm=step_norm,
        constraint=report.constraint_value,
    )


def default_config(problem: CorrectionProblem) -> OptimizerConfig:
    """Step size from the data-term curvature.

    The data term is quadratic in the control values, so a
    gradient-difference against the zero point is an exact
    Hessian-vector product; ten power iterations on the zero-sum
    subspace give the dominant curvature L, and the step is 0.5/L.
    Problems with no residuals fall back to a small fixed step.
    """
    data_only = replace(problem, lam=0.0)
    base = zero_fields(problem)
    report0 = evaluate(data_only, base)
    if report0.residual_count == 0:
        return OptimizerConfig(learning_rate=FALLBACK_LR)
    g0 = _stack(report0.gradients)

    rng = np.random.default_rng(0)
    shapes = [f.values.shape for f in base]
    u = rng.standard_normal(g0.size)
    u -= u.mean()
    u /= np.linalg.norm(u)
    curvature = 0.0
    for _ in range(POWER_ITERATIONS):
        fields = _unstack(u, shapes, base)
        hv = _stack(evaluate(data_only, fields).gradients) - g0
        hv -= hv.mean()  # curvature restricted to the feasible subspace
        curvature = float(np.linalg.norm(hv))
        if curvature <= 0 or not np.isfinite(curvature):
            return OptimizerConfig(learning_rate=FALLBACK_LR)
        u = hv / curvature
    return OptimizerConfig(learning_rate=0.5 / curvature)


def _unstack(flat: np.ndarray, shapes, templates) -> list[CorrectionField]:
    fields = []
    pos = 0
    for shape, tpl in zip(shapes, templates):
        n = int(np.prod(shape))
        fields.append(CorrectionField(tpl.layout, flat[pos : pos + n].reshape(shape)))
        pos += n
    return fields


def optimize(
    problem: CorrectionProblem, config: OptimizerConfig | None = None
) -> tuple[list[CorrectionField], OptimizationTrace]:
    """Fit the correction fields; returns the best-seen iterate and the
    per-iteration trace."""
    if config is None:
        config = default_config(problem)
    fields = project_constraint(zero_fields(problem))
    report = evaluate(problem, fields)
    records = [_record(0, report, 0.0)]
    totals = [report.total]
    best_total = report.total
    best_fields = [f.copy() for f in fields]
    reason = TerminationReason.MAX_ITERATIONS

    velocity = [np.zeros_like(f.values) for f in fields]
    for it in range(1, config.max_iterations + 1):
        for v, g in zip(velocity, report.gradients):
            v *= config.momentum
            v -= config.learning_rate * g
        stepped = [
            CorrectionField(f.layout, f.values + v) for f, v in zip(fields, velocity)
        ]
        new_fields = project_constraint(stepped)
        step_norm = float(
            np.linalg.norm(
                _stack([n.values - f.values for n, f in zip(new_fields, fields)])
            )
        )
        fields = new_fields
        report = evaluate(problem, fields)
        records.append(_record(it, report, step_norm))
        totals.append(report.total)

        if not np.isfinite(report.total) or not all(
            np.isfinite(g).all() for g in report.gradients
        ):
            reason = TerminationReason.DIVERGED
            break
        if report.total < best_total:
            best_total = report.total
            best_fields = [f.copy() for f in fields]
        if it >= 2 * CONVERGENCE_WINDOW:
            # momentum makes single iterates ring, so compare window means
            recent = float(np.mean(totals[-CONVERGENCE_WINDOW:]))
            prev = float(np.mean(totals[-2 * CONVERGENCE_WINDOW : -CONVERGENCE_WINDOW]))
            decrease = (prev - recent) / max(abs(prev), 1e-300)
            if decrease < config.rel_tolerance:
                reason = TerminationReason.CONVERGED
                break

    return best_fields, OptimizationTrace(
        records=tuple(records), termination_reason=reason
    )
