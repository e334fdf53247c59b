"""Independent reference implementations the tests check the package against.

Everything here is written from the textbook definitions (Hermite basis
polynomials, centered-difference tangents, plain loops over voxels), not
from the package's formulation, so agreement is evidence rather than
tautology.
"""

from __future__ import annotations

import numpy as np


def _hermite(u: float) -> tuple[float, float, float, float]:
    """Cubic Hermite basis (h00, h10, h01, h11) at parameter u."""
    u2 = u * u
    u3 = u2 * u
    return (
        2.0 * u3 - 3.0 * u2 + 1.0,
        u3 - 2.0 * u2 + u,
        -2.0 * u3 + 3.0 * u2,
        u3 - u2,
    )


def spline_value(controls, x: float) -> float:
    """Catmull-Rom spline through values at integer knot indices.

    Tangents are centered differences, one-sided at the first and last
    knot; x is in knot-index units, 0 <= x <= len(controls) - 1.
    """
    c = np.asarray(controls, dtype=np.float64)
    n = len(c)
    seg = min(max(int(np.floor(x)), 0), n - 2)
    u = x - seg

    def tangent(i: int) -> float:
        if i == 0:
            return float(c[1] - c[0])
        if i == n - 1:
            return float(c[n - 1] - c[n - 2])
        return 0.5 * float(c[i + 1] - c[i - 1])

    h00, h10, h01, h11 = _hermite(u)
    return float(h00 * c[seg] + h10 * tangent(seg) + h01 * c[seg + 1] + h11 * tangent(seg + 1))


def spline_curve(layout, controls) -> np.ndarray:
    """Spline values at every integer A-scan index of a package layout."""
    h = (layout.n_ascans - 1) / (layout.n_knots - 1)
    return np.array([spline_value(controls, j / h) for j in range(layout.n_ascans)])


def axis_taps(x: float, n: int):
    """Sample indices and weights of 1D Catmull-Rom with replicated edges.

    Derived through the Hermite form on the edge-padded sequence: taps sit
    at clip(base-1 .. base+2, 0, n-1) and the per-tap weights fold the
    centered-difference tangents of the padded neighbours.
    """
    base = min(max(int(np.floor(x)), 0), n - 2)
    u = x - base
    h00, h10, h01, h11 = _hermite(u)
    weights = [
        -0.5 * h10,
        h00 - 0.5 * h11,
        h01 + 0.5 * h10,
        0.5 * h11,
    ]
    idx = [min(max(base - 1 + t, 0), n - 1) for t in range(4)]
    return idx, weights


def _interp_line(vals: np.ndarray, x: float) -> float:
    idx, w = axis_taps(x, len(vals))
    return float(sum(wi * vals[i] for i, wi in zip(idx, w)))


def sample_volume(data: np.ndarray, valid_ascans: np.ndarray, coord):
    """Separable tricubic sample; None when the position is out of bounds
    or the transverse support touches an invalid A-scan.

    The value is computed by successive full-line 1D interpolation (depth,
    then A-scan, then B-scan axis), which for a separable kernel equals
    the 4x4x4 stencil form.
    """
    nb, na, nd = data.shape
    b, a, d = (float(v) for v in coord)
    if not (0.0 <= b <= nb - 1 and 0.0 <= a <= na - 1 and 0.0 <= d <= nd - 1):
        return None

    bi, bw = axis_taps(b, nb)
    ai, aw = axis_taps(a, na)
    merged: dict[tuple[int, int], float] = {}
    for i, wb in zip(bi, bw):
        for j, wa in zip(ai, aw):
            merged[(i, j)] = merged.get((i, j), 0.0) + wb * wa
    for (i, j), w in merged.items():
        if w != 0.0 and valid_ascans[i, j] == 0:
            return None

    along_d = np.array(
        [[_interp_line(data[i, j, :], d) for j in range(na)] for i in range(nb)]
    )
    along_a = np.array([_interp_line(along_d[i, :], a) for i in range(nb)])
    return _interp_line(along_a, b)


def map_source_voxel(geom, i: int, j: int, k: int):
    """Target coordinate of a source voxel under a package geometry."""
    kind = geom.kind.value
    if kind == "identity":
        return (float(i), float(j), float(k))
    if kind == "transpose":
        return (float(j), float(i), float(k))
    return tuple(float(v) for v in geom.mapping[i, j, k])


def brute_objective(problem, fields):
    """Loop-over-all-voxels objective: per-volume raw squared-residual
    sums, the raw squared-norm penalty, and the residual count.

    The corrected target volume is materialised explicitly (log signal
    plus mask times its spline curve) and sampled with sample_volume; the
    moving side adds its own curve where masked.
    """
    data_raw = [0.0] * len(problem.entries)
    count = 0
    curves = [
        np.vstack([spline_curve(f.layout, row) for row in f.values]) for f in fields
    ]
    for mi, entry in enumerate(problem.entries):
        s_m = entry.log.data
        mask_m = entry.mask.m
        valid_m = entry.volume.valid_ascans
        nb, na, nd = s_m.shape
        for ti in sorted(entry.targets):
            geom = entry.targets[ti]
            et = problem.entries[ti]
            corrected_t = et.log.data + et.mask.m * curves[ti][:, :, None]
            valid_t = et.volume.valid_ascans
            for i in range(nb):
                for j in range(na):
                    if valid_m[i, j] == 0:
                        continue
                    for k in range(0, nd, problem.depth_stride):
                        if mask_m[i, j, k] == 0:
                            continue
                        coord = map_source_voxel(geom, i, j, k)
                        got = sample_volume(corrected_t, valid_t, coord)
                        if got is None:
                            continue
                        r = s_m[i, j, k] + curves[mi][i, j] - got
                        data_raw[mi] += r * r
                        count += 1
    reg_raw = float(sum((f.values**2).sum() for f in fields))
    return data_raw, reg_raw, count


def brute_total(problem, fields) -> float:
    """Objective total under the problem's own normalization settings."""
    data_raw, reg_raw, count = brute_objective(problem, fields)
    if problem.normalize:
        n_ctl = sum(f.values.size for f in fields)
        dscale = 1.0 / count if count else 0.0
        rscale = 1.0 / n_ctl if n_ctl else 0.0
    else:
        dscale = rscale = 1.0
    return sum(data_raw) * dscale + problem.lam * reg_raw * rscale


def finite_difference_gradients(evaluate_fn, problem, fields, step: float = 1e-4):
    """Central finite differences of the objective total, one control value
    at a time.  Returns one array per volume, shaped like the fields."""
    grads = []
    for vi in range(len(fields)):
        g = np.zeros_like(fields[vi].values)
        for r in range(g.shape[0]):
            for c in range(g.shape[1]):
                plus = [f.copy() for f in fields]
                minus = [f.copy() for f in fields]
                plus[vi].values[r, c] += step
                minus[vi].values[r, c] -= step
                g[r, c] = (
                    evaluate_fn(problem, plus).total - evaluate_fn(problem, minus).total
                ) / (2.0 * step)
        grads.append(g)
    return grads
