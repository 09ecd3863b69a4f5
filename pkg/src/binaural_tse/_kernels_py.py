"""Pure-numpy implementations of the hot kernels.

Used when the compiled ``_kernels`` extension is unavailable or when
``BINAURAL_TSE_PURE_PYTHON`` is set.  Signatures match the extension exactly.
"""

import numpy as np

_CHUNK = 256


def accumulate_image_spectra(spec_left, spec_right, dir_index, gains, delays, fft_size):
    """Sum ``gain * H[dir] * exp(-2j*pi*k*delay/fft_size)`` over all images.

    Parameters
    ----------
    spec_left, spec_right : complex ndarray, shape (D, K)
        One-sided HRIR spectra of every referenced grid direction.
    dir_index : int ndarray, shape (I,)
        Row of ``spec_*`` used by each image.
    gains, delays : float ndarray, shape (I,)
        Per-image gain and delay in samples.

    Returns
    -------
    complex ndarray, shape (2, K)
    """
    spec_left = np.asarray(spec_left, dtype=np.complex128)
    spec_right = np.asarray(spec_right, dtype=np.complex128)
    dir_index = np.asarray(dir_index, dtype=np.int64)
    gains = np.asarray(gains, dtype=np.float64)
    delays = np.asarray(delays, dtype=np.float64)
    n_bins = spec_left.shape[1]
    k = np.arange(n_bins, dtype=np.float64)
    out = np.zeros((2, n_bins), dtype=np.complex128)
    for start in range(0, gains.shape[0], _CHUNK):
        sl = slice(start, start + _CHUNK)
        phase = np.exp(np.outer(delays[sl], (-2j * np.pi / fft_size) * k)) * gains[sl, None]
        idx = dir_index[sl]
        out[0] += np.einsum("ik,ik->k", phase, spec_left[idx])
        out[1] += np.einsum("ik,ik->k", phase, spec_right[idx])
    return out


def frame_xcorr(left, right, starts, frame_length, max_lag):
    """Normalized interaural cross-correlation for each frame and lag.

    ``c[f, j] = sum_n l[n] r[n + lag_j] / sqrt(sum_n l[n]^2 * sum_n r[n + lag_j]^2)``
    with ``n`` running over the frame starting at ``starts[f]`` and
    ``lag_j = j - max_lag``.  Samples of ``right`` outside the signal count as
    zero.  Entries with zero energy are set to 0.

    Returns
    -------
    corr : ndarray, shape (F, 2*max_lag + 1)
    energy_left : ndarray, shape (F,)
    energy_right : ndarray, shape (F,)
        Right-channel energy at lag 0.
    """
    left = np.asarray(left, dtype=np.float64)
    right = np.asarray(right, dtype=np.float64)
    starts = np.asarray(starts, dtype=np.int64)
    n_lags = 2 * max_lag + 1
    n = left.shape[0]
    padded_l = np.zeros(n + frame_length)
    padded_l[:n] = left
    padded_r = np.zeros(n + frame_length + 2 * max_lag)
    padded_r[max_lag : max_lag + n] = right
    idx = starts[:, None] + np.arange(frame_length)[None, :]
    lf = padded_l[idx]
    el = np.einsum("fn,fn->f", lf, lf)
    corr = np.zeros((starts.shape[0], n_lags))
    er0 = np.zeros(starts.shape[0])
    for j in range(n_lags):
        rf = padded_r[idx + j]
        num = np.einsum("fn,fn->f", lf, rf)
        er = np.einsum("fn,fn->f", rf, rf)
        if j == max_lag:
            er0 = er
        den = np.sqrt(el * er)
        ok = den > 0
        corr[ok, j] = num[ok] / den[ok]
    return corr, el, er0
