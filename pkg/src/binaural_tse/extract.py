"""HRTF-conditioned extraction baselines.

Both spatial filters reduce the two-channel mixture to one scalar estimate
per time-frequency bin and then re-spatialize it with the clue, so the
output's interaural transfer function equals the clue's by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dsp import BinauralClip, BinauralSpectrogram, istft
from .errors import InvalidInputError
from .hrtf import Direction, HrtfSet, get_clue, nearest_direction

__all__ = [
    "ExtractionClue",
    "ExtractionResult",
    "matched_filter_extract",
    "mvdr_extract",
    "mvdr_weights",
    "oracle_mask_extract",
    "DEAD_BIN_THRESHOLD",
    "DEFAULT_LOADING",
]

DEAD_BIN_THRESHOLD = 1e-12
DEFAULT_LOADING = 1e-3
MIN_FRAMES = 8
_MAX_CONDITION = 1e14


@dataclass(frozen=True)
class ExtractionClue:
    """Direct-path HRTF pair ``(2, K)`` at the nearest grid direction."""

    clue: np.ndarray
    direction: Direction

    def __post_init__(self):
        clue = np.asarray(self.clue, dtype=np.complex128)
        if clue.ndim != 2 or clue.shape[0] != 2:
            raise InvalidInputError(f"clue must have shape (2, K), got {clue.shape}")
        object.__setattr__(self, "clue", clue)

    @classmethod
    def from_hrtf(cls, hrtf: HrtfSet, query: Direction, fft_size: int = 512) -> "ExtractionClue":
        direction, _ = nearest_direction(hrtf, query)
        return cls(get_clue(hrtf, query, fft_size), direction)

    @property
    def n_bins(self) -> int:
        return self.clue.shape[1]

    def live_bins(self) -> np.ndarray:
        power = np.sum(np.abs(self.clue) ** 2, axis=0)
        return power >= DEAD_BIN_THRESHOLD * power.max()


@dataclass(frozen=True)
class ExtractionResult:
    estimate: BinauralClip
    method: str
    diagnostics: dict = field(default_factory=dict)
    spectrogram: BinauralSpectrogram | None = field(default=None, repr=False)


def _check(mix: BinauralSpectrogram, clue: ExtractionClue):
    if clue.n_bins != mix.config.n_bins:
        raise InvalidInputError(f"clue has {clue.n_bins} bins, mixture has {mix.config.n_bins}")


def _finish(mix, bins, method, diagnostics):
    spec = mix.with_bins(bins)
    return ExtractionResult(istft(spec), method, diagnostics, spec)


def matched_filter_extract(mix: BinauralSpectrogram, clue: ExtractionClue) -> ExtractionResult:
    """Per bin: ``g = h^H x / |h|^2``, output ``g * h``.

    Bins whose clue power is below ``1e-12`` of the strongest bin are zeroed.
    """
    _check(mix, clue)
    h = clue.clue
    live = clue.live_bins()
    power = np.sum(np.abs(h) ** 2, axis=0)
    scalar = np.zeros(mix.bins.shape[1:], dtype=np.complex128)
    scalar[live] = np.einsum("ck,ckl->kl", h[:, live].conj(), mix.bins[:, live]) / power[live, None]
    out = h[:, :, None] * scalar[None]
    return _finish(mix, out, "matched", {"dead_bins": int((~live).sum())})


def mvdr_weights(covariance: np.ndarray, clue: np.ndarray, loading: float = DEFAULT_LOADING):
    """Loaded MVDR weights for each bin.

    Parameters
    ----------
    covariance : complex ndarray, shape (K, 2, 2)
    clue : complex ndarray, shape (2, K)
    loading : float
        Diagonal loading relative to the mean eigenvalue, ``eps * tr(Phi) / 2``.

    Returns
    -------
    weights : complex ndarray, shape (2, K)
    fallback : bool ndarray, shape (K,)
        Bins where the loaded covariance was singular; these carry
        matched-filter weights instead.
    condition : float ndarray, shape (K,)
    """
    n_bins = covariance.shape[0]
    trace = np.real(np.trace(covariance, axis1=1, axis2=2))
    loaded = covariance + (loading * trace / 2.0)[:, None, None] * np.eye(2)
    h = clue.T  # (K, 2)
    condition = np.linalg.cond(loaded)
    fallback = ~np.isfinite(condition) | (condition > _MAX_CONDITION) | (trace <= 0)
    weights = np.zeros((n_bins, 2), dtype=np.complex128)
    ok = ~fallback
    if ok.any():
        num = np.linalg.solve(loaded[ok], h[ok][..., None])[..., 0]
        den = np.einsum("kc,kc->k", h[ok].conj(), num)
        weights[ok] = num / den[:, None]
    power = np.sum(np.abs(h[fallback]) ** 2, axis=1)
    safe = power > 0
    fb = np.zeros((fallback.sum(), 2), dtype=np.complex128)
    fb[safe] = h[fallback][safe] / power[safe, None]
    weights[fallback] = fb
    return weights.T, fallback, condition


def mvdr_extract(mix: BinauralSpectrogram, clue: ExtractionClue, loading: float = DEFAULT_LOADING,
                 covariance: np.ndarray | None = None) -> ExtractionResult:
    """MVDR (minimum power distortionless response) steered by the clue.

    The spatial covariance is the frame average of ``x x^H`` per bin unless
    ``covariance`` (shape ``(K, 2, 2)``) is supplied, e.g. to freeze it.
    Output is ``(w^H x) * h``.
    """
    _check(mix, clue)
    x = mix.bins
    n_frames = x.shape[2]
    if covariance is None:
        if n_frames < MIN_FRAMES:
            raise InvalidInputError(f"MVDR needs at least {MIN_FRAMES} frames, got {n_frames}")
        covariance = np.einsum("akl,bkl->kab", x, x.conj()) / n_frames
    live = clue.live_bins()
    weights, fallback, condition = mvdr_weights(covariance, clue.clue, loading)
    weights[:, ~live] = 0.0
    scalar = np.einsum("ck,ckl->kl", weights.conj(), x)
    out = clue.clue[:, :, None] * scalar[None]
    diagnostics = {
        "loading": loading,
        "dead_bins": int((~live).sum()),
        "fallback_bins": np.flatnonzero(fallback & live).tolist(),
        "max_condition": float(np.max(condition[live])) if live.any() else None,
        "weights": weights,
    }
    return _finish(mix, out, "mvdr", diagnostics)


def oracle_mask_extract(mix: BinauralSpectrogram, target_spec: BinauralSpectrogram) -> ExtractionResult:
    """Ideal-ratio-style mask ``|t| / (|t| + |x - t|)`` applied to the mixture."""
    if target_spec.bins.shape != mix.bins.shape:
        raise InvalidInputError("target and mixture spectrograms differ in shape")
    t = np.abs(target_spec.bins)
    r = np.abs(mix.bins - target_spec.bins)
    den = t + r
    mask = np.zeros_like(t)
    np.divide(t, den, out=mask, where=den > 0)
    mask = np.clip(mask, 0.0, 1.0)
    return _finish(mix, mask * mix.bins, "oracle", {"mean_mask": float(mask.mean())})
