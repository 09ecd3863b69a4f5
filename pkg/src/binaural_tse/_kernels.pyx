# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. See ``_kernels_py`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, sqrt, M_PI

cnp.import_array()

# Re-anchor the phase recurrence this often to bound accumulated rounding.
DEF _REANCHOR = 64


def accumulate_image_spectra(spec_left, spec_right, dir_index, gains, delays, long fft_size):
    cdef double complex[:, ::1] hl = np.ascontiguousarray(spec_left, dtype=np.complex128)
    cdef double complex[:, ::1] hr = np.ascontiguousarray(spec_right, dtype=np.complex128)
    cdef long long[::1] idx = np.ascontiguousarray(dir_index, dtype=np.int64)
    cdef double[::1] g = np.ascontiguousarray(gains, dtype=np.float64)
    cdef double[::1] tau = np.ascontiguousarray(delays, dtype=np.float64)
    cdef Py_ssize_t n_bins = hl.shape[1]
    cdef Py_ssize_t n_img = g.shape[0]
    out = np.zeros((2, n_bins), dtype=np.complex128)
    cdef double complex[:, ::1] acc = out
    cdef Py_ssize_t i, k
    cdef long long d
    cdef double w, ang
    cdef double complex z, step
    for i in range(n_img):
        d = idx[i]
        w = -2.0 * M_PI * tau[i] / fft_size
        step = cos(w) + 1j * sin(w)
        z = g[i]
        for k in range(n_bins):
            if k % _REANCHOR == 0:
                ang = w * k
                z = g[i] * (cos(ang) + 1j * sin(ang))
            acc[0, k] += z * hl[d, k]
            acc[1, k] += z * hr[d, k]
            z = z * step
    return out


def frame_xcorr(left, right, starts, long frame_length, long max_lag):
    cdef double[::1] l = np.ascontiguousarray(left, dtype=np.float64)
    cdef double[::1] r = np.ascontiguousarray(right, dtype=np.float64)
    cdef long long[::1] st = np.ascontiguousarray(starts, dtype=np.int64)
    cdef Py_ssize_t n = l.shape[0]
    cdef Py_ssize_t n_frames = st.shape[0]
    cdef Py_ssize_t n_lags = 2 * max_lag + 1
    corr_arr = np.zeros((n_frames, n_lags), dtype=np.float64)
    el_arr = np.zeros(n_frames, dtype=np.float64)
    er0_arr = np.zeros(n_frames, dtype=np.float64)
    cdef double[:, ::1] corr = corr_arr
    cdef double[::1] el = el_arr
    cdef double[::1] er0 = er0_arr
    cdef Py_ssize_t f, j, m, a, b
    cdef long long s
    cdef double num, er, lv, rv, ee, den
    for f in range(n_frames):
        s = st[f]
        ee = 0.0
        for m in range(frame_length):
            a = s + m
            if 0 <= a < n:
                ee += l[a] * l[a]
        el[f] = ee
        for j in range(n_lags):
            num = 0.0
            er = 0.0
            for m in range(frame_length):
                a = s + m
                b = a + j - max_lag
                if 0 <= b < n:
                    rv = r[b]
                    er += rv * rv
                    if a < n:
                        num += l[a] * rv
            if j == max_lag:
                er0[f] = er
            den = sqrt(ee * er)
            if den > 0:
                corr[f, j] = num / den
    return corr_arr, el_arr, er0_arr
