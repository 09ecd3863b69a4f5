"""Evaluation metrics: binaural SI-SDR, SI-SDR improvement, STFT MAE and
interaural cue histograms.

Cue conventions: ITD is positive when the left channel leads, ILD is
positive when the left channel is louder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import signal as sps

from . import kernels
from .dsp import BinauralClip, BinauralSpectrogram, StftConfig, stft
from .errors import InvalidInputError

__all__ = [
    "SI_SDR_CAP_DB",
    "CueConfig",
    "CueHistogram",
    "CueDeviation",
    "MetricsReport",
    "si_sdr",
    "si_sdr_binaural",
    "si_sdr_binaural_detail",
    "si_sdr_improvement",
    "si_sdr_shift_tolerant",
    "mae_stft",
    "erb_space",
    "cue_histograms",
    "cue_deviation",
    "evaluate",
]

SI_SDR_CAP_DB = 100.0


def si_sdr(target, estimate, cap: float = SI_SDR_CAP_DB):
    """Scale-invariant SDR of one channel in dB, or ``None`` for a silent target.

    No mean removal.  Exact matches (zero residual) return ``cap``.
    """
    t = np.asarray(target, dtype=np.float64)
    e = np.asarray(estimate, dtype=np.float64)
    if t.shape != e.shape:
        raise InvalidInputError(f"length mismatch: {t.shape} vs {e.shape}")
    tt = float(t @ t)
    if tt == 0.0:
        return None
    s = (float(e @ t) / tt) * t
    res = e - s
    ss, rr = float(s @ s), float(res @ res)
    if rr == 0.0 or (ss > 0 and rr <= ss * 10 ** (-cap / 10)):
        return cap
    if ss == 0.0:
        return -cap
    return min(cap, max(-cap, 10.0 * math.log10(ss / rr)))


def si_sdr_binaural_detail(target: BinauralClip, estimate: BinauralClip):
    """Mean of the per-ear SI-SDR plus degenerate-channel flags.

    Silent target channels are excluded from the mean; if both are silent
    the value is ``nan``.
    """
    if len(target) != len(estimate):
        raise InvalidInputError("target and estimate lengths differ")
    values, flags = [], []
    for name, t, e in (("left", target.left, estimate.left), ("right", target.right, estimate.right)):
        v = si_sdr(t.samples, e.samples)
        if v is None:
            flags.append(f"silent_target_{name}")
        else:
            values.append(v)
    return (float(np.mean(values)) if values else float("nan")), flags


def si_sdr_binaural(target: BinauralClip, estimate: BinauralClip) -> float:
    return si_sdr_binaural_detail(target, estimate)[0]


def si_sdr_improvement(mixture: BinauralClip, target: BinauralClip, estimate: BinauralClip) -> float:
    """Output SI-SDR minus input (mixture) SI-SDR, both against ``target``."""
    return si_sdr_binaural(target, estimate) - si_sdr_binaural(target, mixture)


def si_sdr_shift_tolerant(target: BinauralClip, estimate: BinauralClip, max_shift: int = 256):
    """Binaural SI-SDR after aligning ``estimate`` to ``target`` by integer lag.

    Diagnostic only; the headline metric is not shift-compensated.

    Returns
    -------
    (float, int)
        SI-SDR in dB and the lag (samples by which the estimate lags).
    """
    t, e = target.data, estimate.data
    n = t.shape[1]
    xc = sum(sps.correlate(e[c], t[c], mode="full", method="fft") for c in range(2))
    lags = np.arange(-n + 1, n)
    window = np.abs(lags) <= max_shift
    lag = int(lags[window][np.argmax(xc[window])])
    aligned = np.zeros_like(e)
    if lag >= 0:
        aligned[:, : n - lag] = e[:, lag:]
    else:
        aligned[:, -lag:] = e[:, : n + lag]
    return si_sdr_binaural(target, BinauralClip.from_array(aligned, target.sample_rate)), lag


def mae_stft(target_spec: BinauralSpectrogram, estimate_spec: BinauralSpectrogram) -> float:
    """``1/(K L) * sum_{k,l} (|t_L - e_L| + |t_R - e_R|)`` with complex moduli."""
    t = np.asarray(getattr(target_spec, "bins", target_spec))
    e = np.asarray(getattr(estimate_spec, "bins", estimate_spec))
    if t.shape != e.shape:
        raise InvalidInputError(f"spectrogram shapes differ: {t.shape} vs {e.shape}")
    _, k, l = t.shape
    return float(np.abs(t - e).sum() / (k * l))


@dataclass(frozen=True)
class CueConfig:
    n_bands: int = 24
    f_low_hz: float = 80.0
    f_high_hz: float = 7500.0
    frame_s: float = 0.020
    frame_overlap: float = 0.5
    coherence_threshold: float = 0.95
    itd_bin_ms: float = 0.025
    ild_bin_db: float = 0.25
    itd_range_ms: float = 1.0
    ild_range_db: float = 25.0
    energy_floor_db: float = -60.0


@dataclass(frozen=True)
class CueHistogram:
    kind: str
    bin_edges: np.ndarray
    weights: np.ndarray
    n_admitted: int = 0

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def empty(self) -> bool:
        return not np.any(self.weights > 0)

    @property
    def bin_width(self) -> float:
        return float(self.bin_edges[1] - self.bin_edges[0])

    def peak(self) -> float:
        """Center of the heaviest bin (lowest bin on ties); ``nan`` when empty."""
        if self.empty:
            return float("nan")
        return float(self.centers[int(np.argmax(self.weights))])


class CueDeviation(NamedTuple):
    delta_itd_ms: float
    delta_ild_db: float
    flags: tuple = ()


def erb_space(f_low: float, f_high: float, n: int) -> np.ndarray:
    """Center frequencies equally spaced on the ERB-rate scale."""
    rate = lambda f: 21.4 * np.log10(1 + 0.00437 * f)  # noqa: E731
    inv = lambda e: (10 ** (e / 21.4) - 1) / 0.00437  # noqa: E731
    return inv(np.linspace(rate(f_low), rate(f_high), n))


def _centered_edges(width, half_range):
    n = int(round(half_range / width))
    centers = np.arange(-n, n + 1) * width
    return np.concatenate([centers - width / 2, [centers[-1] + width / 2]])


def _refine_peak(corr, j, omega):
    """Sub-sample peak offset assuming a locally cosine-shaped correlation."""
    if j == 0 or j == corr.shape[0] - 1:
        return 0.0
    y_m, y_0, y_p = corr[j - 1], corr[j], corr[j + 1]
    s = math.sin(omega)
    if abs(s) < 1e-6:
        den = y_m - 2 * y_0 + y_p
        return 0.0 if den == 0 else float(np.clip(0.5 * (y_m - y_p) / den, -0.5, 0.5))
    delta = math.atan2(y_p - y_m, 2.0 * y_0 * s) / omega
    return float(np.clip(delta, -0.5, 0.5))


def cue_histograms(clip: BinauralClip, config: CueConfig | None = None):
    """Coherence-gated, coherence-weighted ITD and ILD histograms.

    The clip is split by a gammatone filterbank; each band is cut into
    frames.  Per (band, frame): interaural coherence is the maximum of the
    normalized cross-correlation within the ITD search range, ITD is its
    (sub-sample) location, ILD is the left/right energy ratio in dB.  A pair
    enters both histograms with weight equal to its coherence when the
    coherence reaches the threshold and both ears carry energy within
    ``energy_floor_db`` of the loudest band frame.

    Returns
    -------
    (CueHistogram, CueHistogram)
        ITD histogram in ms and ILD histogram in dB.
    """
    config = config or CueConfig()
    fs = clip.sample_rate
    if len(clip) < 0.5 * fs:
        raise InvalidInputError("cue analysis needs at least 0.5 s of signal")
    frame = int(round(config.frame_s * fs))
    hop = max(1, int(round(frame * (1 - config.frame_overlap))))
    max_lag = int(round(config.itd_range_ms * 1e-3 * fs))
    starts = np.arange(0, len(clip) - frame + 1, hop)
    centers = erb_space(config.f_low_hz, config.f_high_hz, config.n_bands)
    data = clip.data
    per_band = []
    for fc in centers:
        b, a = sps.gammatone(fc, "iir", fs=fs)
        left = sps.lfilter(b, a, data[0])
        right = sps.lfilter(b, a, data[1])
        corr, el, er = kernels.frame_xcorr(left, right, starts, frame, max_lag)
        per_band.append((fc, corr, el, er))
    loudest = max(max(el.max(), er.max()) for _, _, el, er in per_band)
    floor = loudest * 10 ** (config.energy_floor_db / 10)
    itd_vals, ild_vals, weights = [], [], []
    for fc, corr, el, er in per_band:
        omega = 2 * math.pi * fc / fs
        peak_idx = np.argmax(corr, axis=1)
        coherence = corr[np.arange(corr.shape[0]), peak_idx]
        admit = (coherence >= config.coherence_threshold) & (el > floor) & (er > floor) & (el > 0) & (er > 0)
        for f in np.flatnonzero(admit):
            j = int(peak_idx[f])
            lag = j - max_lag + _refine_peak(corr[f], j, omega)
            itd_vals.append(1e3 * lag / fs)
            ild_vals.append(10 * math.log10(el[f] / er[f]))
            weights.append(float(coherence[f]))
    itd_edges = _centered_edges(config.itd_bin_ms, config.itd_range_ms)
    ild_edges = _centered_edges(config.ild_bin_db, config.ild_range_db)
    w = np.asarray(weights)
    itd_w, _ = np.histogram(np.asarray(itd_vals), bins=itd_edges, weights=w)
    ild_w, _ = np.histogram(np.clip(ild_vals, ild_edges[0], ild_edges[-1]), bins=ild_edges, weights=w)
    n = len(weights)
    return CueHistogram("itd", itd_edges, itd_w, n), CueHistogram("ild", ild_edges, ild_w, n)


def cue_deviation(target: BinauralClip, estimate: BinauralClip, config: CueConfig | None = None) -> CueDeviation:
    """Absolute distance between the dominant histogram peaks of two clips."""
    t_itd, t_ild = cue_histograms(target, config)
    e_itd, e_ild = cue_histograms(estimate, config)
    flags = []
    if t_itd.empty:
        flags.append("empty_target_histogram")
    if e_itd.empty:
        flags.append("empty_estimate_histogram")
    if flags:
        return CueDeviation(float("nan"), float("nan"), tuple(flags))
    return CueDeviation(abs(e_itd.peak() - t_itd.peak()), abs(e_ild.peak() - t_ild.peak()), ())


@dataclass
class MetricsReport:
    si_sdr_db: float
    si_sdri_db: float
    mae_stft: float
    delta_itd_ms: float
    delta_ild_db: float
    degenerate_flags: list = field(default_factory=list)
    external: dict = field(default_factory=dict)
    diagnostic: dict = field(default_factory=dict)

    def to_dict(self):
        def clean(v):
            return None if isinstance(v, float) and not math.isfinite(v) else v

        return {
            "si_sdr_db": clean(self.si_sdr_db),
            "si_sdri_db": clean(self.si_sdri_db),
            "mae_stft": clean(self.mae_stft),
            "delta_itd_ms": clean(self.delta_itd_ms),
            "delta_ild_db": clean(self.delta_ild_db),
            "degenerate_flags": list(self.degenerate_flags),
            "external": dict(self.external),
            "diagnostic": {k: clean(v) for k, v in self.diagnostic.items()},
        }


def evaluate(mixture: BinauralClip, target: BinauralClip, estimate: BinauralClip,
             stft_config: StftConfig | None = None, cue_config: CueConfig | None = None,
             external: dict | None = None, shift_tolerant: bool = True) -> MetricsReport:
    """Full metric suite for one extraction result."""
    out, flags = si_sdr_binaural_detail(target, estimate)
    inp, _ = si_sdr_binaural_detail(target, mixture)
    stft_config = stft_config or StftConfig()
    mae = mae_stft(stft(target, stft_config), stft(estimate, stft_config))
    dev = cue_deviation(target, estimate, cue_config)
    diagnostic = {}
    if shift_tolerant:
        value, lag = si_sdr_shift_tolerant(target, estimate)
        diagnostic = {"si_sdr_db_shift_tolerant_diagnostic": value, "shift_samples": lag}
    return MetricsReport(
        si_sdr_db=out,
        si_sdri_db=out - inp,
        mae_stft=mae,
        delta_itd_ms=dev.delta_itd_ms,
        delta_ild_db=dev.delta_ild_db,
        degenerate_flags=list(flags) + list(dev.flags),
        external=dict(external or {}),
        diagnostic=diagnostic,
    )
