# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: fused residual/gradient accumulation and the masked
median filter.  Signatures mirror pykernels; summation is chunk-granular
so results are reproducible for any thread count."""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor
from libc.stdlib cimport free, malloc

cnp.import_array()

NAME = "compiled"

cdef enum:
    C_IDENTITY = 0
    C_TRANSPOSE = 1
    C_DENSE = 2

GEOM_IDENTITY = C_IDENTITY
GEOM_TRANSPOSE = C_TRANSPOSE
GEOM_DENSE = C_DENSE

_EMPTY_MAP = np.zeros((1, 1, 1, 3), dtype=np.float64)


def median_filter_plane(const float[:, ::1] plane, const unsigned char[::1] valid, int kernel):
    cdef Py_ssize_t na = plane.shape[0]
    cdef Py_ssize_t nd = plane.shape[1]
    out_arr = np.empty((na, nd), dtype=np.float32)
    cdef float[:, ::1] out = out_arr
    cdef double* buf = <double*> malloc(kernel * kernel * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    try:
        with nogil:
            _median_plane(plane, valid, out, kernel // 2, buf)
    finally:
        free(buf)
    return out_arr


cdef void _median_plane(const float[:, ::1] plane, const unsigned char[::1] valid,
                        float[:, ::1] out, int r, double* buf) noexcept nogil:
    cdef Py_ssize_t na = plane.shape[0]
    cdef Py_ssize_t nd = plane.shape[1]
    cdef Py_ssize_t j, k, jj, kk, j0, j1, k0, k1, n, q
    cdef double v
    for j in range(na):
        if valid[j] == 0:
            for k in range(nd):
                out[j, k] = plane[j, k]
            continue
        j0 = j - r if j - r > 0 else 0
        j1 = j + r if j + r < na - 1 else na - 1
        for k in range(nd):
            k0 = k - r if k - r > 0 else 0
            k1 = k + r if k + r < nd - 1 else nd - 1
            n = 0
            for jj in range(j0, j1 + 1):
                if valid[jj] == 0:
                    continue
                for kk in range(k0, k1 + 1):
                    v = plane[jj, kk]
                    q = n
                    while q > 0 and buf[q - 1] > v:
                        buf[q] = buf[q - 1]
                        q -= 1
                    buf[q] = v
                    n += 1
            if n % 2 == 1:
                out[j, k] = <float> buf[n // 2]
            else:
                out[j, k] = <float> (0.5 * (buf[n // 2 - 1] + buf[n // 2]))


def data_term_pair(
    const double[:, :, ::1] s_m, const unsigned char[:, :, ::1] mask_m,
    const unsigned char[:, ::1] valid_m, const double[:, ::1] ceval_m,
    const cnp.int64_t[:, ::1] bidx_m, const double[:, ::1] bw_m,
    const double[:, :, ::1] s_t, const unsigned char[:, :, ::1] mask_t,
    const unsigned char[:, ::1] valid_t, const double[:, ::1] ceval_t,
    const cnp.int64_t[:, ::1] bidx_t, const double[:, ::1] bw_t,
    int geom_kind, dense_map, int depth_stride,
    Py_ssize_t row_start, Py_ssize_t row_end,
    double[:, ::1] grad_m, double[:, ::1] grad_t,
):
    cdef const double[:, :, :, ::1] dm
    if geom_kind == C_DENSE:
        dm = dense_map
    else:
        dm = _EMPTY_MAP
    cdef double rss = 0.0
    cdef long long cnt = 0
    with nogil:
        if geom_kind == C_TRANSPOSE:
            _pair_integer(s_m, mask_m, valid_m, ceval_m, bidx_m, bw_m,
                          s_t, mask_t, valid_t, ceval_t, bidx_t, bw_t,
                          1, depth_stride, row_start, row_end,
                          grad_m, grad_t, &rss, &cnt)
        elif geom_kind == C_IDENTITY:
            _pair_integer(s_m, mask_m, valid_m, ceval_m, bidx_m, bw_m,
                          s_t, mask_t, valid_t, ceval_t, bidx_t, bw_t,
                          0, depth_stride, row_start, row_end,
                          grad_m, grad_t, &rss, &cnt)
        else:
            _pair_dense(s_m, mask_m, valid_m, ceval_m, bidx_m, bw_m,
                        s_t, mask_t, valid_t, ceval_t, bidx_t, bw_t,
                        dm, depth_stride, row_start, row_end,
                        grad_m, grad_t, &rss, &cnt)
    return rss, cnt


cdef void _pair_integer(
    const double[:, :, ::1] s_m, const unsigned char[:, :, ::1] mask_m,
    const unsigned char[:, ::1] valid_m, const double[:, ::1] ceval_m,
    const cnp.int64_t[:, ::1] bidx_m, const double[:, ::1] bw_m,
    const double[:, :, ::1] s_t, const unsigned char[:, :, ::1] mask_t,
    const unsigned char[:, ::1] valid_t, const double[:, ::1] ceval_t,
    const cnp.int64_t[:, ::1] bidx_t, const double[:, ::1] bw_t,
    int swap, int ks, Py_ssize_t rs, Py_ssize_t re,
    double[:, ::1] grad_m, double[:, ::1] grad_t,
    double* rss_out, long long* cnt_out,
) noexcept nogil:
    cdef Py_ssize_t ni, nj, nk, i, j, k, p, ti, tj
    cdef double rss = 0.0
    cdef long long cnt = 0
    cdef double cm, ct, r, racc, qacc
    cdef unsigned char mt
    if swap:
        ni = min(s_m.shape[0], s_t.shape[1])
        nj = min(s_m.shape[1], s_t.shape[0])
    else:
        ni = min(s_m.shape[0], s_t.shape[0])
        nj = min(s_m.shape[1], s_t.shape[1])
    nk = min(s_m.shape[2], s_t.shape[2])
    if rs < 0:
        rs = 0
    if re > ni:
        re = ni
    for i in range(rs, re):
        for j in range(nj):
            if swap:
                ti = j
                tj = i
            else:
                ti = i
                tj = j
            if valid_m[i, j] == 0 or valid_t[ti, tj] == 0:
                continue
            cm = ceval_m[i, j]
            ct = ceval_t[ti, tj]
            racc = 0.0
            qacc = 0.0
            k = 0
            while k < nk:
                if mask_m[i, j, k] != 0:
                    mt = mask_t[ti, tj, k]
                    if mt:
                        r = s_m[i, j, k] + cm - s_t[ti, tj, k] - ct
                        qacc += r
                    else:
                        r = s_m[i, j, k] + cm - s_t[ti, tj, k]
                    rss += r * r
                    cnt += 1
                    racc += r
                k += ks
            racc *= 2.0
            qacc *= 2.0
            for p in range(4):
                grad_m[i, bidx_m[j, p]] += racc * bw_m[j, p]
            for p in range(4):
                grad_t[ti, bidx_t[tj, p]] -= qacc * bw_t[tj, p]
    rss_out[0] += rss
    cnt_out[0] += cnt


cdef inline void _taps(double x, Py_ssize_t dim, Py_ssize_t* idx, double* w) noexcept nogil:
    cdef Py_ssize_t base = <Py_ssize_t> floor(x)
    cdef Py_ssize_t t, q
    cdef double f, f2, f3
    if base > dim - 2:
        base = dim - 2
    if base < 0:
        base = 0
    f = x - base
    f2 = f * f
    f3 = f2 * f
    w[0] = (-f3 + 2.0 * f2 - f) / 2.0
    w[1] = (3.0 * f3 - 5.0 * f2 + 2.0) / 2.0
    w[2] = (-3.0 * f3 + 4.0 * f2 + f) / 2.0
    w[3] = (f3 - f2) / 2.0
    for t in range(4):
        q = base - 1 + t
        if q < 0:
            q = 0
        if q > dim - 1:
            q = dim - 1
        idx[t] = q
    for t in range(1, 4):
        if idx[t] == idx[t - 1]:
            w[t] += w[t - 1]
            w[t - 1] = 0.0


cdef void _pair_dense(
    const double[:, :, ::1] s_m, const unsigned char[:, :, ::1] mask_m,
    const unsigned char[:, ::1] valid_m, const double[:, ::1] ceval_m,
    const cnp.int64_t[:, ::1] bidx_m, const double[:, ::1] bw_m,
    const double[:, :, ::1] s_t, const unsigned char[:, :, ::1] mask_t,
    const unsigned char[:, ::1] valid_t, const double[:, ::1] ceval_t,
    const cnp.int64_t[:, ::1] bidx_t, const double[:, ::1] bw_t,
    const double[:, :, :, ::1] dm, int ks, Py_ssize_t rs, Py_ssize_t re,
    double[:, ::1] grad_m, double[:, ::1] grad_t,
    double* rss_out, long long* cnt_out,
) noexcept nogil:
    cdef Py_ssize_t nb = s_m.shape[0]
    cdef Py_ssize_t na = s_m.shape[1]
    cdef Py_ssize_t nd = s_m.shape[2]
    cdef Py_ssize_t tb = s_t.shape[0]
    cdef Py_ssize_t ta = s_t.shape[1]
    cdef Py_ssize_t td = s_t.shape[2]
    cdef Py_ssize_t i, j, k
    cdef double rss = 0.0
    cdef long long cnt = 0
    if rs < 0:
        rs = 0
    if re > nb:
        re = nb
    for i in range(rs, re):
        for j in range(na):
            if valid_m[i, j] == 0:
                continue
            k = 0
            while k < nd:
                if mask_m[i, j, k] != 0 and _dense_voxel(
                        s_m, ceval_m, bidx_m, bw_m,
                        s_t, mask_t, valid_t, ceval_t, bidx_t, bw_t,
                        dm, i, j, k, tb, ta, td, grad_m, grad_t, &rss):
                    cnt += 1
                k += ks
    rss_out[0] += rss
    cnt_out[0] += cnt


cdef inline bint _dense_voxel(
    const double[:, :, ::1] s_m, const double[:, ::1] ceval_m,
    const cnp.int64_t[:, ::1] bidx_m, const double[:, ::1] bw_m,
    const double[:, :, ::1] s_t, const unsigned char[:, :, ::1] mask_t,
    const unsigned char[:, ::1] valid_t, const double[:, ::1] ceval_t,
    const cnp.int64_t[:, ::1] bidx_t, const double[:, ::1] bw_t,
    const double[:, :, :, ::1] dm,
    Py_ssize_t i, Py_ssize_t j, Py_ssize_t k,
    Py_ssize_t tb, Py_ssize_t ta, Py_ssize_t td,
    double[:, ::1] grad_m, double[:, ::1] grad_t,
    double* rss,
) noexcept nogil:
    cdef Py_ssize_t p, q, u, z, ib, ja
    cdef Py_ssize_t bi[4]
    cdef Py_ssize_t ai[4]
    cdef Py_ssize_t di[4]
    cdef double wb[4]
    cdef double wa[4]
    cdef double wd[4]
    cdef double xb, xa, xd, acc, sa, sd, cval, r, wdm, coef
    xb = dm[i, j, k, 0]
    xa = dm[i, j, k, 1]
    xd = dm[i, j, k, 2]
    if not (xb >= 0.0 and xb <= tb - 1.0 and
            xa >= 0.0 and xa <= ta - 1.0 and
            xd >= 0.0 and xd <= td - 1.0):
        return False
    _taps(xb, tb, bi, wb)
    _taps(xa, ta, ai, wa)
    _taps(xd, td, di, wd)
    for p in range(4):
        for q in range(4):
            if wb[p] * wa[q] != 0.0 and valid_t[bi[p], ai[q]] == 0:
                return False
    acc = 0.0
    for p in range(4):
        sa = 0.0
        for q in range(4):
            ib = bi[p]
            ja = ai[q]
            cval = ceval_t[ib, ja]
            sd = 0.0
            for u in range(4):
                if mask_t[ib, ja, di[u]]:
                    sd += wd[u] * (s_t[ib, ja, di[u]] + cval)
                else:
                    sd += wd[u] * s_t[ib, ja, di[u]]
            sa += wa[q] * sd
        acc += wb[p] * sa
    r = s_m[i, j, k] + ceval_m[i, j] - acc
    rss[0] += r * r
    for p in range(4):
        grad_m[i, bidx_m[j, p]] += 2.0 * r * bw_m[j, p]
    for p in range(4):
        for q in range(4):
            ib = bi[p]
            ja = ai[q]
            wdm = 0.0
            for u in range(4):
                if mask_t[ib, ja, di[u]]:
                    wdm += wd[u]
            coef = 2.0 * r * wb[p] * wa[q] * wdm
            if coef == 0.0:
                continue
            for z in range(4):
                grad_t[ib, bidx_t[ja, z]] -= coef * bw_t[ja, z]
    return True
