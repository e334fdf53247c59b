"""Per-B-scan cubic Hermite splines over the A-scan index.

Knots are laid out uniformly over the full index range [0, n_ascans - 1]
at a fixed physical density.  Tangents follow the Catmull-Rom rule
(centered differences of neighboring knot values, one-sided at the ends),
so the spline is linear in its control values, reproduces constants and
straight lines exactly, and needs no extrapolation at the scan borders.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateScanError, OutOfDomainError


@dataclass(frozen=True)
class KnotLayout:
    """Uniform knot grid over the A-scan index range of one B-scan."""

    knot_positions: np.ndarray  # float64, ascending, endpoints included
    density_per_mm: float
    n_ascans: int

    @property
    def n_knots(self) -> int:
        return len(self.knot_positions)

    @property
    def knot_spacing(self) -> float:
        """Index units between adjacent knots."""
        return (self.n_ascans - 1) / (self.n_knots - 1)


def build_knot_layout(
    n_ascans: int, transverse_spacing_mm: float, density_per_mm: float
) -> KnotLayout:
    """Knot grid with ``round(length_mm * density) + 1`` knots, at least 2.

    Raises :class:`DegenerateScanError` for fewer than 2 A-scans or a
    non-positive density.
    """
    if n_ascans < 2:
        raise DegenerateScanError(f"need at least 2 A-scans, got {n_ascans}")
    if density_per_mm <= 0:
        raise DegenerateScanError(f"density must be positive, got {density_per_mm}")
    length_mm = (n_ascans - 1) * transverse_spacing_mm
    n_knots = max(2, int(round(length_mm * density_per_mm)) + 1)
    positions = np.linspace(0.0, n_ascans - 1.0, n_knots)
    positions.flags.writeable = False
    return KnotLayout(positions, float(density_per_mm), int(n_ascans))


@dataclass
class CorrectionField:
    """Spline control values of one volume: one row of knot values per B-scan."""

    layout: KnotLayout
    values: np.ndarray  # float64, (n_bscans, n_knots)

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != self.layout.n_knots:
            raise DegenerateScanError(
                f"control values shape {self.values.shape} does not match "
                f"{self.layout.n_knots} knots"
            )
        if not np.isfinite(self.values).all():
            raise DegenerateScanError("control values must be finite")

    @property
    def n_bscans(self) -> int:
        return self.values.shape[0]

    def copy(self) -> "CorrectionField":
        return CorrectionField(self.layout, self.values.copy())


def zero_field(layout: KnotLayout, n_bscans: int) -> CorrectionField:
    return CorrectionField(layout, np.zeros((n_bscans, layout.n_knots)))


# Hermite basis polynomials on the unit interval.
def _h00(u):
    return (2.0 * u - 3.0) * u * u + 1.0


def _h10(u):
    return ((u - 2.0) * u + 1.0) * u


def _h01(u):
    return (3.0 - 2.0 * u) * u * u


def _h11(u):
    return (u - 1.0) * u * u


def _segment(layout: KnotLayout, j: float) -> tuple[int, float]:
    """Knot segment index and local parameter in [0, 1] containing ``j``."""
    h = layout.knot_spacing
    seg = min(int(j / h), layout.n_knots - 2)
    return seg, j / h - seg


def _weights_at(layout: KnotLayout, j: float) -> dict[int, float]:
    """Sparse knot weights w with eval(j) = sum_n w[n] * control[n].

    Folds the Catmull-Rom tangent stencil into the Hermite basis, so the
    result has at most 4 nonzero entries and sums to 1.
    """
    n = layout.n_knots
    seg, u = _segment(layout, j)
    w: dict[int, float] = {}

    def add(idx: int, val: float):
        w[idx] = w.get(idx, 0.0) + val

    add(seg, _h00(u))
    add(seg + 1, _h01(u))
    # tangent at the left knot (times knot spacing)
    t10 = _h10(u)
    if seg == 0:
        add(0, -t10)
        add(1, t10)
    else:
        add(seg - 1, -0.5 * t10)
        add(seg + 1, 0.5 * t10)
    # tangent at the right knot
    t11 = _h11(u)
    if seg + 1 == n - 1:
        add(n - 2, -t11)
        add(n - 1, t11)
    else:
        add(seg, -0.5 * t11)
        add(seg + 2, 0.5 * t11)
    return w


def _check_domain(layout: KnotLayout, j) -> np.ndarray:
    jj = np.atleast_1d(np.asarray(j, dtype=np.float64))
    if (jj < 0).any() or (jj > layout.n_ascans - 1).any():
        raise OutOfDomainError(
            f"A-scan position outside [0, {layout.n_ascans - 1}]"
        )
    return jj


def basis_weights(layout: KnotLayout, j: float) -> dict[int, float]:
    """Sparse basis weights over knots at position ``j`` (the analytic
    gradient of :func:`eval_spline` with respect to each control value)."""
    _check_domain(layout, j)
    return _weights_at(layout, float(j))


def eval_spline(layout: KnotLayout, control_values: np.ndarray, j):
    """Evaluate the Hermite spline at A-scan position(s) ``j``.

    ``control_values`` is a length-``n_knots`` vector.  Scalar ``j`` gives a
    float, an array gives an array.
    """
    jj = _check_domain(layout, j)
    control_values = np.asarray(control_values, dtype=np.float64)
    if control_values.shape != (layout.n_knots,):
        raise OutOfDomainError(
            f"expected {layout.n_knots} control values, got shape "
            f"{control_values.shape}"
        )
    out = np.empty(jj.shape)
    for n, pos in enumerate(jj):
        w = _weights_at(layout, float(pos))
        out[n] = sum(control_values[idx] * val for idx, val in w.items())
    return float(out[0]) if np.isscalar(j) else out


def basis_rows(layout: KnotLayout, positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-width sparse basis: per position, 4 knot indices and weights.

    Entries beyond the actual support are padded with index 0 / weight 0,
    which scatter-adds treat as no-ops.
    """
    positions = _check_domain(layout, positions)
    idx = np.zeros((len(positions), 4), dtype=np.int64)
    wgt = np.zeros((len(positions), 4), dtype=np.float64)
    for n, pos in enumerate(positions):
        for q, (ki, kw) in enumerate(sorted(_weights_at(layout, float(pos)).items())):
            idx[n, q] = ki
            wgt[n, q] = kw
    return idx, wgt


def integer_basis(layout: KnotLayout) -> tuple[np.ndarray, np.ndarray]:
    """Basis rows at every integer A-scan index of the layout."""
    return basis_rows(layout, np.arange(layout.n_ascans, dtype=np.float64))


def dense_basis_matrix(layout: KnotLayout) -> np.ndarray:
    """Dense (n_ascans, n_knots) basis matrix B with eval = controls @ B.T."""
    idx, wgt = integer_basis(layout)
    mat = np.zeros((layout.n_ascans, layout.n_knots))
    for q in range(4):
        np.add.at(mat, (np.arange(layout.n_ascans), idx[:, q]), wgt[:, q])
    return mat


def eval_field(field: CorrectionField) -> np.ndarray:
    """Spline value at every (B-scan, A-scan) of a correction field."""
    return field.values @ dense_basis_matrix(field.layout).T
