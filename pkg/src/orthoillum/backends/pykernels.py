"""Numpy fallback for the compiled kernels.

Same signatures and same chunk-granular summation order as the Cython
extension, so results agree to rounding noise and per-backend runs are
deterministic.  Geometry kinds are encoded as ints here (0 identity,
1 transpose, 2 dense map) to keep the compiled signature flat.
"""

from __future__ import annotations

import numpy as np

NAME = "python"

GEOM_IDENTITY = 0
GEOM_TRANSPOSE = 1
GEOM_DENSE = 2

_DENSE_BATCH = 16384  # samples per slab in the dense-map path, bounds memory


def median_filter_plane(plane: np.ndarray, valid: np.ndarray, kernel: int) -> np.ndarray:
    """2D median with a border-clamped (shrinking) window.

    Invalid A-scans (rows) neither contribute to any window nor get
    filtered themselves.
    """
    na, nd = plane.shape
    r = kernel // 2
    out = np.array(plane, dtype=np.float32)
    rows = valid == 1
    if not rows.any():
        return out
    work = plane.astype(np.float64)
    work[~rows, :] = np.nan
    padded = np.full((na + 2 * r, nd + 2 * r), np.nan)
    padded[r : na + r, r : nd + r] = work
    stack = np.empty((kernel * kernel, int(rows.sum()), nd))
    t = 0
    for dj in range(kernel):
        for dk in range(kernel):
            stack[t] = padded[dj : dj + na, dk : dk + nd][rows]
            t += 1
    out[rows] = np.nanmedian(stack, axis=0).astype(np.float32)
    return out


def _dense_basis(bidx: np.ndarray, bw: np.ndarray, n_controls: int) -> np.ndarray:
    b = np.zeros((bidx.shape[0], n_controls))
    np.add.at(b, (np.arange(bidx.shape[0])[:, None], bidx), bw)
    return b


def _axis_taps(x: np.ndarray, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Clamped Catmull-Rom taps with border duplicates folded together
    (weight moves onto the last duplicate, so nonzero weight == real tap)."""
    base = np.floor(x).astype(np.int64)
    np.clip(base, 0, max(dim - 2, 0), out=base)
    f = x - base
    idx = np.clip(base[:, None] + np.arange(-1, 3), 0, dim - 1)
    f2 = f * f
    f3 = f2 * f
    w = np.stack(
        [
            (-f3 + 2.0 * f2 - f) / 2.0,
            (3.0 * f3 - 5.0 * f2 + 2.0) / 2.0,
            (-3.0 * f3 + 4.0 * f2 + f) / 2.0,
            (f3 - f2) / 2.0,
        ],
        axis=1,
    )
    for t in range(1, 4):
        dup = idx[:, t] == idx[:, t - 1]
        w[dup, t] += w[dup, t - 1]
        w[dup, t - 1] = 0.0
    return idx, w


def data_term_pair(
    s_m,
    mask_m,
    valid_m,
    ceval_m,
    bidx_m,
    bw_m,
    s_t,
    mask_t,
    valid_t,
    ceval_t,
    bidx_t,
    bw_t,
    geom_kind,
    dense_map,
    depth_stride,
    row_start,
    row_end,
    grad_m,
    grad_t,
):
    """Residual sum + gradient for one ordered (moving, target) pair over
    moving B-scans [row_start, row_end).

    Accumulates into grad_m/grad_t in place; returns (rss, residual_count).
    Residuals exist where the moving voxel is foreground on a valid A-scan
    and the resampled target position is usable; the target mask enters
    only the target-side chain rule (background target voxels carry no
    correction).
    """
    nb, na, nd = s_m.shape
    tb, ta, td = s_t.shape
    ks = depth_stride
    b_m = _dense_basis(bidx_m, bw_m, grad_m.shape[1])
    b_t = _dense_basis(bidx_t, bw_t, grad_t.shape[1])

    if geom_kind == GEOM_TRANSPOSE:
        ni, nj, nk = min(nb, ta), min(na, tb), min(nd, td)
        rs, re = max(row_start, 0), min(row_end, ni)
        if rs >= re or nj == 0 or nk == 0:
            return 0.0, 0
        smc = s_m[rs:re, :nj, :nk:ks] + ceval_m[rs:re, :nj, None]
        mtv = mask_t[:nj, rs:re, :nk:ks].transpose(1, 0, 2)
        stc = s_t[:nj, rs:re, :nk:ks].transpose(1, 0, 2) + mtv * ceval_t[:nj, rs:re].T[:, :, None]
        inc = (
            (mask_m[rs:re, :nj, :nk:ks] == 1)
            & (valid_m[rs:re, :nj, None] == 1)
            & (valid_t[:nj, rs:re].T[:, :, None] == 1)
        )
        resid = np.where(inc, smc - stc, 0.0)
        grad_m[rs:re] += (2.0 * resid.sum(axis=2)) @ b_m[:nj]
        grad_t[:nj] -= (2.0 * (resid * mtv).sum(axis=2)).T @ b_t[rs:re]
        return float((resid * resid).sum()), int(inc.sum())

    if geom_kind == GEOM_IDENTITY:
        ni, nj, nk = min(nb, tb), min(na, ta), min(nd, td)
        rs, re = max(row_start, 0), min(row_end, ni)
        if rs >= re or nj == 0 or nk == 0:
            return 0.0, 0
        smc = s_m[rs:re, :nj, :nk:ks] + ceval_m[rs:re, :nj, None]
        mtv = mask_t[rs:re, :nj, :nk:ks]
        stc = s_t[rs:re, :nj, :nk:ks] + mtv * ceval_t[rs:re, :nj, None]
        inc = (
            (mask_m[rs:re, :nj, :nk:ks] == 1)
            & (valid_m[rs:re, :nj, None] == 1)
            & (valid_t[rs:re, :nj, None] == 1)
        )
        resid = np.where(inc, smc - stc, 0.0)
        grad_m[rs:re] += (2.0 * resid.sum(axis=2)) @ b_m[:nj]
        grad_t[rs:re] -= (2.0 * (resid * mtv).sum(axis=2)) @ b_t[:nj]
        return float((resid * resid).sum()), int(inc.sum())

    # dense per-voxel map
    rs, re = max(row_start, 0), min(row_end, nb)
    if rs >= re:
        return 0.0, 0
    inc3 = (mask_m[rs:re, :, ::ks] == 1) & (valid_m[rs:re, :, None] == 1)
    ii, jj, kk = np.nonzero(inc3)
    if ii.size == 0:
        return 0.0, 0
    ii += rs
    kk *= ks
    rss = 0.0
    count = 0
    for lo in range(0, ii.size, _DENSE_BATCH):
        sl = slice(lo, lo + _DENSE_BATCH)
        r, c = _dense_batch(
            s_m, ceval_m, bidx_m, bw_m, s_t, mask_t, valid_t, ceval_t,
            bidx_t, bw_t, dense_map, ii[sl], jj[sl], kk[sl], grad_m, grad_t,
        )
        rss += r
        count += c
    return rss, count


def _dense_batch(
    s_m, ceval_m, bidx_m, bw_m,
    s_t, mask_t, valid_t, ceval_t, bidx_t, bw_t,
    dense_map, ii, jj, kk, grad_m, grad_t,
):
    tb, ta, td = s_t.shape
    pos = dense_map[ii, jj, kk]
    inb = (
        (pos[:, 0] >= 0.0) & (pos[:, 0] <= tb - 1.0)
        & (pos[:, 1] >= 0.0) & (pos[:, 1] <= ta - 1.0)
        & (pos[:, 2] >= 0.0) & (pos[:, 2] <= td - 1.0)
    )
    if not inb.any():
        return 0.0, 0
    ii, jj, kk, pos = ii[inb], jj[inb], kk[inb], pos[inb]
    bi, wb = _axis_taps(pos[:, 0], tb)
    ai, wa = _axis_taps(pos[:, 1], ta)
    di, wd = _axis_taps(pos[:, 2], td)

    # transverse support gap: any A-scan holding nonzero merged weight
    w2 = wb[:, :, None] * wa[:, None, :]
    tvalid = valid_t[bi[:, :, None], ai[:, None, :]]
    ok = ~((w2 != 0.0) & (tvalid == 0)).any(axis=(1, 2))
    if not ok.any():
        return 0.0, 0
    ii, jj, kk = ii[ok], jj[ok], kk[ok]
    bi, ai, di = bi[ok], ai[ok], di[ok]
    wb, wa, wd, w2 = wb[ok], wa[ok], wd[ok], w2[ok]

    bix = bi[:, :, None, None]
    aix = ai[:, None, :, None]
    dix = di[:, None, None, :]
    mcube = mask_t[bix, aix, dix].astype(np.float64)
    cube = s_t[bix, aix, dix] + mcube * ceval_t[bi[:, :, None], ai[:, None, :]][:, :, :, None]
    # contract depth, then a, then b (matches the compiled loop nesting)
    vals = ((cube * wd[:, None, None, :]).sum(axis=3) * wa[:, None, :]).sum(axis=2)
    vals = (vals * wb).sum(axis=1)
    resid = s_m[ii, jj, kk] + ceval_m[ii, jj] - vals

    np.add.at(grad_m, (ii[:, None], bidx_m[jj]), (2.0 * resid)[:, None] * bw_m[jj])
    wdm = (mcube * wd[:, None, None, :]).sum(axis=3)  # (n, 4, 4)
    contrib = (2.0 * resid)[:, None, None] * w2 * wdm
    np.add.at(
        grad_t,
        (bi[:, :, None, None], bidx_t[ai][:, None, :, :]),
        -contrib[:, :, :, None] * bw_t[ai][:, None, :, :],
    )
    return float((resid * resid).sum()), int(resid.size)
