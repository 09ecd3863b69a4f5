"""Signal primitives: clips, STFT/iSTFT, impulse-response spectra and
frequency-domain fractional delays.

All arithmetic is float64 / complex128.  Spectra are one-sided.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .errors import ConfigError, InvalidInputError, TruncationError

__all__ = [
    "MonoClip",
    "BinauralClip",
    "StftConfig",
    "BinauralSpectrogram",
    "stft",
    "istft",
    "ir_spectrum",
    "fractional_delay_phase",
    "apply_fractional_delay",
    "convolve",
]


def _as_real_vector(x, name):
    arr = np.array(x, dtype=np.float64, copy=True).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite samples")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MonoClip:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise InvalidInputError(f"sample_rate must be a positive integer, got {self.sample_rate}")
        object.__setattr__(self, "sample_rate", int(self.sample_rate))
        object.__setattr__(self, "samples", _as_real_vector(self.samples, "samples"))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def fit(self, n_samples: int) -> "MonoClip":
        """Cut or zero-pad to exactly ``n_samples``."""
        out = np.zeros(n_samples)
        n = min(n_samples, len(self))
        out[:n] = self.samples[:n]
        return MonoClip(out, self.sample_rate)


@dataclass(frozen=True)
class BinauralClip:
    left: MonoClip
    right: MonoClip

    def __post_init__(self):
        if self.left.sample_rate != self.right.sample_rate:
            raise InvalidInputError("left and right sample rates differ")
        if len(self.left) != len(self.right):
            raise InvalidInputError("left and right lengths differ")

    @classmethod
    def from_array(cls, data, sample_rate: int) -> "BinauralClip":
        """Build from a ``(2, N)`` array."""
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] != 2:
            raise InvalidInputError(f"expected shape (2, N), got {data.shape}")
        return cls(MonoClip(data[0], sample_rate), MonoClip(data[1], sample_rate))

    @property
    def data(self) -> np.ndarray:
        return np.stack([self.left.samples, self.right.samples])

    @property
    def sample_rate(self) -> int:
        return self.left.sample_rate

    def __len__(self):
        return len(self.left)

    def scaled(self, gain: float) -> "BinauralClip":
        return BinauralClip.from_array(gain * self.data, self.sample_rate)

    def __add__(self, other: "BinauralClip") -> "BinauralClip":
        if other.sample_rate != self.sample_rate:
            raise InvalidInputError("sample rates differ")
        return BinauralClip.from_array(self.data + other.data, self.sample_rate)


_WINDOWS = ("hann", "rect")


@dataclass(frozen=True)
class StftConfig:
    """Analysis parameters. Defaults: 512-point Hann window, 75 % overlap."""

    window_length: int = 512
    hop: int = 128
    window: str = "hann"

    def __post_init__(self):
        if self.window not in _WINDOWS:
            raise ConfigError(f"unknown window {self.window!r}; expected one of {_WINDOWS}")
        if self.window_length <= 0 or self.window_length % 2:
            raise ConfigError("window_length must be a positive even integer")
        if not 0 < self.hop <= self.window_length // 2:
            # centered framing with L = ceil(N / hop) only covers the tail when hop <= window/2
            raise ConfigError("hop must satisfy 0 < hop <= window_length / 2")
        if not sps.check_COLA(self.window_array(), self.window_length, self.window_length - self.hop):
            raise ConfigError(
                f"{self.window} window of length {self.window_length} with hop {self.hop} "
                "violates constant overlap-add"
            )

    @property
    def n_bins(self) -> int:
        return self.window_length // 2 + 1

    def window_array(self) -> np.ndarray:
        if self.window == "hann":
            return sps.get_window("hann", self.window_length, fftbins=True)
        return np.ones(self.window_length)

    def n_frames(self, n_samples: int) -> int:
        return -(-n_samples // self.hop)


@dataclass(frozen=True)
class BinauralSpectrogram:
    """Two-channel one-sided STFT, ``bins`` has shape ``(2, K, L)``.

    ``length`` is the time-domain length the spectrogram was computed from,
    so :func:`istft` can return a clip of the original size.
    """

    bins: np.ndarray
    config: StftConfig
    sample_rate: int
    length: int = field(default=-1)

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=np.complex128)
        if bins.ndim != 3 or bins.shape[0] != 2:
            raise InvalidInputError(f"bins must have shape (2, K, L), got {bins.shape}")
        if bins.shape[1] != self.config.n_bins:
            raise InvalidInputError(
                f"K={bins.shape[1]} does not match window_length/2+1={self.config.n_bins}"
            )
        object.__setattr__(self, "bins", bins)
        if self.length < 0:
            object.__setattr__(self, "length", bins.shape[2] * self.config.hop)

    @property
    def shape(self):
        return self.bins.shape

    def with_bins(self, bins) -> "BinauralSpectrogram":
        return BinauralSpectrogram(bins, self.config, self.sample_rate, self.length)


def _frames(x: np.ndarray, config: StftConfig) -> np.ndarray:
    n = x.shape[-1]
    half = config.window_length // 2
    n_frames = config.n_frames(n)
    padded = np.zeros(x.shape[:-1] + (n + config.window_length,))
    padded[..., half : half + n] = x
    view = np.lib.stride_tricks.sliding_window_view(padded, config.window_length, axis=-1)
    return view[..., : (n_frames - 1) * config.hop + 1 : config.hop, :]


def stft(clip: BinauralClip, config: StftConfig | None = None) -> BinauralSpectrogram:
    """Centered STFT with zero padding of ``window_length/2`` on both ends.

    Produces ``K = window_length/2 + 1`` bins and ``L = ceil(N / hop)`` frames.
    """
    config = config or StftConfig()
    if len(clip) == 0:
        raise InvalidInputError("cannot transform an empty clip")
    frames = _frames(clip.data, config) * config.window_array()
    bins = np.fft.rfft(frames, axis=-1)  # (2, L, K)
    return BinauralSpectrogram(np.swapaxes(bins, 1, 2), config, clip.sample_rate, len(clip))


def istft(spec: BinauralSpectrogram) -> BinauralClip:
    """Weighted overlap-add inverse of :func:`stft`.

    Uses the analysis window for synthesis and divides by the summed squared
    window, so reconstruction is exact wherever at least one frame has a
    nonzero window value.
    """
    config = spec.config
    if not sps.check_COLA(config.window_array(), config.window_length, config.window_length - config.hop):
        raise ConfigError("spectrogram config is not COLA")
    win = config.window_array()
    n_frames = spec.bins.shape[2]
    frames = np.fft.irfft(np.swapaxes(spec.bins, 1, 2), n=config.window_length, axis=-1) * win
    total = (n_frames - 1) * config.hop + config.window_length
    out = np.zeros((2, total))
    norm = np.zeros(total)
    win_sq = win * win
    for t in range(n_frames):
        start = t * config.hop
        out[:, start : start + config.window_length] += frames[:, t]
        norm[start : start + config.window_length] += win_sq
    half = config.window_length // 2
    out = out[:, half : half + spec.length]
    norm = norm[half : half + spec.length]
    if out.shape[1] < spec.length:
        out = np.pad(out, ((0, 0), (0, spec.length - out.shape[1])))
        norm = np.pad(norm, (0, spec.length - norm.shape[0]))
    safe = norm > 1e-12 * win_sq.max()
    out[:, safe] /= norm[safe]
    out[:, ~safe] = 0.0
    return BinauralClip.from_array(out, spec.sample_rate)


def ir_spectrum(ir, fft_size: int) -> np.ndarray:
    """One-sided spectrum of ``ir`` zero-padded to ``fft_size``.

    Raises
    ------
    TruncationError
        If ``ir`` is longer than ``fft_size``; never truncates silently.
    """
    ir = np.asarray(ir, dtype=np.float64)
    if ir.shape[-1] > fft_size:
        raise TruncationError(f"impulse response of length {ir.shape[-1]} exceeds fft_size {fft_size}")
    return np.fft.rfft(ir, n=fft_size, axis=-1)


def fractional_delay_phase(tau: float, fft_size: int) -> np.ndarray:
    """Phase factors ``exp(-2j*pi*k*tau/fft_size)`` for ``k = 0 .. fft_size/2``."""
    if not np.isfinite(tau) or tau < 0:
        raise InvalidInputError(f"delay must be finite and non-negative, got {tau}")
    k = np.arange(fft_size // 2 + 1)
    return np.exp(-2j * np.pi * k * (tau / fft_size))


def apply_fractional_delay(x, tau: float, fft_size: int | None = None) -> np.ndarray:
    """Delay a real signal by ``tau`` samples (circular within ``fft_size``)."""
    x = np.asarray(x, dtype=np.float64)
    n = fft_size or x.shape[-1]
    return np.fft.irfft(ir_spectrum(x, n) * fractional_delay_phase(tau, n), n=n, axis=-1)


def convolve(x, h) -> np.ndarray:
    """Full linear convolution along the last axis."""
    x = np.asarray(x, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    while x.ndim < h.ndim:
        x = x[np.newaxis]
    while h.ndim < x.ndim:
        h = h[np.newaxis]
    return sps.fftconvolve(x, h, axes=-1)
