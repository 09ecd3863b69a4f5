"""Shoebox image-source expansion and BRIR synthesis.

A BRIR is the sum over image sources of the nearest-grid HRIR pair, scaled
by the image gain and delayed by a (fractional) propagation delay applied
as a frequency-domain phase ramp.  Gain and delay are common to both ears.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import GeometryError, InfeasibleAcousticsError, InvalidInputError, SingularityError, SizingError
from .hrtf import Direction, HrtfSet, SphericalPos

__all__ = [
    "RoomSpec",
    "ListenerPose",
    "ImageSource",
    "ImageSourceList",
    "Brir",
    "t60_to_reflection",
    "source_world_position",
    "expand_images",
    "direct_path",
    "synthesize_brir",
    "required_fft_size",
    "schroeder_decay",
    "estimate_t60",
]

SPEED_OF_SOUND = 343.0
SABINE_CONSTANT = 0.161


@dataclass(frozen=True)
class RoomSpec:
    dimensions_m: tuple
    t60_s: float = 0.5
    max_order: int = 10
    speed_of_sound_mps: float = SPEED_OF_SOUND
    anechoic: bool = False

    def __post_init__(self):
        dims = tuple(float(d) for d in self.dimensions_m)
        if len(dims) != 3 or min(dims) <= 0:
            raise InvalidInputError(f"room needs three positive dimensions, got {self.dimensions_m}")
        object.__setattr__(self, "dimensions_m", dims)
        if self.max_order < 0 or int(self.max_order) != self.max_order:
            raise InvalidInputError("max_order must be a non-negative integer")
        if not self.anechoic and not self.t60_s > 0:
            raise InvalidInputError("t60_s must be positive for a reverberant room")
        if not self.speed_of_sound_mps > 0:
            raise InvalidInputError("speed of sound must be positive")

    @property
    def volume(self) -> float:
        lx, ly, lz = self.dimensions_m
        return lx * ly * lz

    @property
    def surface(self) -> float:
        lx, ly, lz = self.dimensions_m
        return 2 * (lx * ly + lx * lz + ly * lz)

    @property
    def effective_order(self) -> int:
        return 0 if self.anechoic else int(self.max_order)


@dataclass(frozen=True)
class ListenerPose:
    position_m: tuple
    yaw_deg: float = 0.0

    def __post_init__(self):
        pos = tuple(float(p) for p in self.position_m)
        if len(pos) != 3:
            raise InvalidInputError("listener position needs three coordinates")
        object.__setattr__(self, "position_m", pos)

    def rotation(self) -> np.ndarray:
        """Head-to-world rotation about the vertical axis."""
        c, s = math.cos(math.radians(self.yaw_deg)), math.sin(math.radians(self.yaw_deg))
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class ImageSource:
    direction: Direction
    gain: float
    delay_samples: float
    order: int


@dataclass(frozen=True)
class ImageSourceList:
    """Columnar image-source expansion.

    ``indices`` holds the per-axis lattice index ``(a, b, c)`` of each image;
    the reflection order is ``|a| + |b| + |c|``.
    """

    azimuths: np.ndarray
    elevations: np.ndarray
    gains: np.ndarray
    delays: np.ndarray
    orders: np.ndarray
    indices: np.ndarray
    sample_rate: int
    beta: float = 0.0
    distances: np.ndarray = field(default=None, repr=False)

    def __len__(self):
        return self.gains.shape[0]

    def __getitem__(self, i) -> ImageSource:
        return ImageSource(
            Direction(self.azimuths[i], self.elevations[i]),
            float(self.gains[i]),
            float(self.delays[i]),
            int(self.orders[i]),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def direct(self) -> ImageSource:
        return self[int(np.flatnonzero(self.orders == 0)[0])]

    @classmethod
    def from_images(cls, images, sample_rate) -> "ImageSourceList":
        images = list(images)
        return cls(
            azimuths=np.array([im.direction.azimuth_deg for im in images]),
            elevations=np.array([im.direction.elevation_deg for im in images]),
            gains=np.array([im.gain for im in images], dtype=np.float64),
            delays=np.array([im.delay_samples for im in images], dtype=np.float64),
            orders=np.array([im.order for im in images], dtype=np.int64),
            indices=np.zeros((len(images), 3), dtype=np.int64),
            sample_rate=sample_rate,
        )


@dataclass(frozen=True)
class Brir:
    left: np.ndarray
    right: np.ndarray
    sample_rate: int

    @property
    def pair(self) -> np.ndarray:
        return np.stack([self.left, self.right])

    def __len__(self):
        return self.left.shape[0]


def t60_to_reflection(room: RoomSpec) -> float:
    """Uniform wall pressure-reflection coefficient from Sabine's formula.

    ``A = 0.161 V / T60``, ``a = A / S``, ``beta = sqrt(1 - a)``.  Anechoic
    rooms return 0.

    Raises
    ------
    InfeasibleAcousticsError
        If the absorption coefficient reaches 1.
    """
    if room.anechoic:
        return 0.0
    if not room.t60_s > 0:
        raise InvalidInputError("t60_s must be positive")
    absorption = SABINE_CONSTANT * room.volume / room.t60_s / room.surface
    if absorption >= 1.0:
        raise InfeasibleAcousticsError(
            f"room {room.dimensions_m} cannot reach T60={room.t60_s:.3f}s "
            f"(absorption coefficient {absorption:.3f} >= 1)"
        )
    return math.sqrt(1.0 - absorption)


def source_world_position(source: SphericalPos, listener: ListenerPose) -> np.ndarray:
    return np.asarray(listener.position_m) + listener.rotation() @ source.cartesian()


def _inside(point, dims) -> bool:
    return all(0.0 < p < d for p, d in zip(point, dims))


def _lattice(max_order: int) -> np.ndarray:
    r = np.arange(-max_order, max_order + 1)
    grid = np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)
    order = np.abs(grid).sum(axis=1)
    grid = grid[order <= max_order]
    order = np.abs(grid).sum(axis=1)
    # stable order: by reflection order, then lexicographic
    return grid[np.lexsort((grid[:, 2], grid[:, 1], grid[:, 0], order))]


def expand_images(room: RoomSpec, source: SphericalPos, listener: ListenerPose, sample_rate: int) -> ImageSourceList:
    """All shoebox images with total reflection count up to the room's order.

    Along each axis, lattice index ``a`` places the image at ``a*L + x`` for
    even ``a`` and ``a*L + (L - x)`` for odd ``a``; ``|a|`` is the number of
    reflections off that axis' walls.  Gain is ``beta**order / distance``,
    delay is ``distance / c * fs`` samples.

    Raises
    ------
    GeometryError
        Listener or source not strictly inside the room.
    SingularityError
        Source coincides with the listener.
    """
    dims = np.asarray(room.dimensions_m)
    src = source_world_position(source, listener)
    if not _inside(listener.position_m, dims):
        raise GeometryError(f"listener {listener.position_m} outside room {room.dimensions_m}")
    if not _inside(src, dims):
        raise GeometryError(f"source at {np.round(src, 4).tolist()} outside room {room.dimensions_m}")
    beta = t60_to_reflection(room)
    lattice = _lattice(room.effective_order)
    odd = (lattice % 2) != 0
    pos = lattice * dims + np.where(odd, dims - src, src)
    rel_world = pos - np.asarray(listener.position_m)
    rel_head = rel_world @ listener.rotation()  # R^T applied to row vectors
    dist = np.linalg.norm(rel_head, axis=1)
    if dist.min() < 1e-9:
        raise SingularityError("source coincides with the listener")
    order = np.abs(lattice).sum(axis=1)
    gains = beta**order / dist if room.effective_order else 1.0 / dist
    horiz = np.hypot(rel_head[:, 0], rel_head[:, 1])
    az = np.degrees(np.arctan2(rel_head[:, 1], rel_head[:, 0])) % 360.0
    az[horiz == 0] = 0.0
    el = np.degrees(np.arctan2(rel_head[:, 2], horiz))
    return ImageSourceList(
        azimuths=az,
        elevations=el,
        gains=np.asarray(gains, dtype=np.float64),
        delays=dist / room.speed_of_sound_mps * sample_rate,
        orders=order,
        indices=lattice,
        sample_rate=int(sample_rate),
        beta=beta,
        distances=dist,
    )


def direct_path(source: SphericalPos, sample_rate: int = 16000, speed_of_sound: float = SPEED_OF_SOUND) -> ImageSource:
    """Free-field propagation: gain ``1/r``, delay ``r/c*fs``."""
    if not source.radius_m > 0:
        raise SingularityError("zero source distance")
    return ImageSource(
        direction=source.direction,
        gain=1.0 / source.radius_m,
        delay_samples=source.radius_m / speed_of_sound * sample_rate,
        order=0,
    )


def required_fft_size(images: ImageSourceList, ir_length: int, margin: int = 64) -> int:
    need = int(math.ceil(float(np.max(images.delays)))) + ir_length + margin
    return 1 << (need - 1).bit_length()


def synthesize_brir(images: ImageSourceList, hrtf: HrtfSet, fft_size: int | None = None) -> Brir:
    """Accumulate ``gain * H(dir) * exp(-2j pi k tau / N)`` over images, then invert.

    Each image uses the HRIR of its nearest grid direction.  The returned
    BRIR has ``fft_size`` samples.

    Raises
    ------
    SizingError
        If the largest delay plus the HRIR length exceeds ``fft_size``.
    """
    if images.sample_rate != hrtf.sample_rate:
        raise InvalidInputError("image list and HRTF set have different sample rates")
    if fft_size is None:
        fft_size = required_fft_size(images, hrtf.ir_length)
    longest = float(np.max(images.delays)) + hrtf.ir_length
    if longest > fft_size:
        raise SizingError(f"delays need {math.ceil(longest)} samples but fft_size is {fft_size}")
    grid_index = hrtf.nearest_indices(images.azimuths, images.elevations)
    used, dir_index = np.unique(grid_index, return_inverse=True)
    spectra = np.fft.rfft(hrtf.irs[used], n=fft_size, axis=-1)  # (D, 2, K)
    acc = kernels.accumulate_image_spectra(
        spectra[:, 0], spectra[:, 1], dir_index, images.gains, images.delays, fft_size
    )
    ir = np.fft.irfft(acc, n=fft_size, axis=-1)
    return Brir(ir[0], ir[1], hrtf.sample_rate)


def schroeder_decay(ir) -> np.ndarray:
    """Energy decay curve in dB (0 dB at t=0), summed over channels."""
    ir = np.atleast_2d(np.asarray(ir, dtype=np.float64))
    energy = (ir**2).sum(axis=0)
    edc = np.cumsum(energy[::-1])[::-1]
    with np.errstate(divide="ignore"):
        return 10 * np.log10(edc / edc[0])


def estimate_t60(ir, sample_rate: int, fit_range=(-5.0, -25.0)) -> float:
    """Reverberation time from a linear fit to the Schroeder curve.

    The default fits the -5..-25 dB span (T20) and extrapolates to 60 dB.
    """
    edc = schroeder_decay(ir)
    hi, lo = fit_range
    start = int(np.argmax(edc <= hi))
    stop = int(np.argmax(edc <= lo))
    if stop <= start + 1:
        raise InvalidInputError("decay curve does not span the fit range")
    t = np.arange(start, stop) / sample_rate
    slope, _ = np.polyfit(t, edc[start:stop], 1)
    return -60.0 / slope
