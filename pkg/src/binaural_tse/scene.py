"""Scene rendering and reproducible dataset sampling.

A scene holds two sources in a shoebox room around a listener.  The
mixture is the sum of the two reverberant binaural renders; the targets
are the dry signals convolved with the direct-path HRIR only (no
propagation gain or delay).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import signal as sps
from scipy.io import wavfile

from .dsp import BinauralClip, BinauralSpectrogram, MonoClip, StftConfig, convolve, stft
from .errors import ConfigError, InvalidInputError, SilentSourceError
from .hrtf import Direction, HrtfSet, SphericalPos, nearest_direction
from .room import (
    ListenerPose,
    RoomSpec,
    expand_images,
    source_world_position,
    synthesize_brir,
    t60_to_reflection,
)

__all__ = [
    "SourceSpec",
    "SceneSpec",
    "RenderedScene",
    "DatasetProtocol",
    "pseudo_speech",
    "resolve_signal",
    "render_target",
    "render_reverberant",
    "render_stft_domain",
    "mix_scene",
    "sample_dataset",
    "angular_sweep_protocol",
]


@dataclass(frozen=True)
class SourceSpec:
    """``signal`` is a :class:`MonoClip`, a WAV path, or ``"synth:<seed>"``."""

    pos: SphericalPos
    signal: object
    muted: bool = False

    def to_dict(self):
        if isinstance(self.signal, MonoClip):
            raise InvalidInputError("in-memory signals cannot be serialized")
        return {
            "azimuth_deg": self.pos.direction.azimuth_deg,
            "elevation_deg": self.pos.direction.elevation_deg,
            "radius_m": self.pos.radius_m,
            "signal": str(self.signal),
            "muted": self.muted,
        }

    @classmethod
    def from_dict(cls, d):
        pos = SphericalPos(Direction(d["azimuth_deg"], d["elevation_deg"]), d["radius_m"])
        return cls(pos, d["signal"], d.get("muted", False))


@dataclass(frozen=True)
class SceneSpec:
    room: RoomSpec
    listener: ListenerPose
    sources: tuple
    sir_db: float = 0.0
    target_index: int = 1
    duration_s: float = 5.0
    sample_rate: int = 16000
    seed: int = 0
    scene_id: str = "scene"
    hrtf_subject: str = ""
    tags: dict = field(default_factory=dict)

    def __post_init__(self):
        sources = tuple(self.sources)
        if len(sources) != 2:
            raise InvalidInputError(f"a scene has exactly two sources, got {len(sources)}")
        object.__setattr__(self, "sources", sources)
        if self.target_index not in (1, 2):
            raise InvalidInputError("target_index must be 1 or 2")
        if not math.isfinite(self.sir_db):
            raise InvalidInputError("sir_db must be finite")
        if not self.duration_s > 0:
            raise InvalidInputError("duration_s must be positive")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.sample_rate))

    @property
    def row_id(self) -> str:
        return f"{self.scene_id}-t{self.target_index}"

    def swapped(self) -> "SceneSpec":
        """The mirrored scene: sources exchanged, SIR negated, same target speaker."""
        return replace(
            self, sources=self.sources[::-1], sir_db=-self.sir_db, target_index=3 - self.target_index
        )

    def to_dict(self):
        return {
            "scene_id": self.scene_id,
            "room": {
                "dimensions_m": list(self.room.dimensions_m),
                "t60_s": self.room.t60_s,
                "max_order": self.room.max_order,
                "speed_of_sound_mps": self.room.speed_of_sound_mps,
                "anechoic": self.room.anechoic,
            },
            "listener": {"position_m": list(self.listener.position_m), "yaw_deg": self.listener.yaw_deg},
            "sources": [s.to_dict() for s in self.sources],
            "sir_db": self.sir_db,
            "target_index": self.target_index,
            "duration_s": self.duration_s,
            "sample_rate": self.sample_rate,
            "seed": self.seed,
            "hrtf_subject": self.hrtf_subject,
            "tags": dict(self.tags),
        }

    @classmethod
    def from_dict(cls, d):
        room = d["room"]
        return cls(
            room=RoomSpec(
                tuple(room["dimensions_m"]),
                room["t60_s"],
                room["max_order"],
                room.get("speed_of_sound_mps", 343.0),
                room.get("anechoic", False),
            ),
            listener=ListenerPose(tuple(d["listener"]["position_m"]), d["listener"]["yaw_deg"]),
            sources=tuple(SourceSpec.from_dict(s) for s in d["sources"]),
            sir_db=d["sir_db"],
            target_index=d["target_index"],
            duration_s=d["duration_s"],
            sample_rate=d["sample_rate"],
            seed=d["seed"],
            scene_id=d["scene_id"],
            hrtf_subject=d.get("hrtf_subject", ""),
            tags=d.get("tags", {}),
        )


@dataclass(frozen=True)
class RenderedScene:
    mixture: BinauralClip
    targets: tuple
    reverberant: tuple
    metadata: dict

    def target(self, index: int) -> BinauralClip:
        return self.targets[index - 1]


def pseudo_speech(seed: int, duration_s: float = 5.0, sample_rate: int = 16000) -> MonoClip:
    """Deterministic speech-like test signal.

    Voiced harmonic excitation with a wandering pitch and some aspiration
    noise, shaped by three formant resonators and gated into syllables.
    """
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))
    fs = sample_rate
    f0_base = rng.uniform(95.0, 230.0)
    drift = sps.lfilter([0.002], [1, -0.998], rng.standard_normal(n))
    f0 = f0_base * np.exp(0.15 * drift / (np.abs(drift).max() + 1e-12))
    phase = 2 * np.pi * np.cumsum(f0) / fs
    voiced = np.zeros(n)
    for h in range(1, int(0.45 * fs / f0_base)):
        amp = 1.0 / h
        voiced += amp * np.where(h * f0 < 0.45 * fs, np.cos(h * phase + rng.uniform(0, 2 * np.pi)), 0.0)
    excitation = voiced + 0.3 * rng.standard_normal(n)
    out = excitation
    for lo, hi in ((300, 850), (900, 2300), (2400, 3400)):
        fc = rng.uniform(lo, hi)
        bw = 0.12 * fc
        r = math.exp(-math.pi * bw / fs)
        b, a = [1 - r], [1, -2 * r * math.cos(2 * math.pi * fc / fs), r * r]
        out = out + 4.0 * sps.lfilter(b, a, excitation)
    env = np.zeros(n)
    pos = int(rng.uniform(0.0, 0.15) * fs)
    while pos < n:
        length = int(rng.uniform(0.12, 0.35) * fs)
        seg = np.hanning(length) ** 0.5
        end = min(n, pos + length)
        env[pos:end] = seg[: end - pos] * rng.uniform(0.4, 1.0)
        pos = end + int(rng.exponential(0.08) * fs)
    out = out * env
    rms = np.sqrt(np.mean(out**2))
    return MonoClip(0.05 * out / rms if rms > 0 else out, sample_rate)


def resolve_signal(ref, sample_rate: int, duration_s: float, base_dir=None) -> MonoClip:
    """Load a source signal and cut or zero-pad it to ``duration_s``."""
    n = int(round(duration_s * sample_rate))
    if isinstance(ref, MonoClip):
        clip = ref
    elif isinstance(ref, str) and ref.startswith("synth:"):
        clip = pseudo_speech(int(ref.split(":", 1)[1]), duration_s, sample_rate)
    else:
        path = Path(ref)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        rate, data = wavfile.read(path)
        if data.ndim > 1:
            data = data[:, 0]
        if np.issubdtype(data.dtype, np.integer):
            data = data / float(np.iinfo(data.dtype).max)
        clip = MonoClip(data, rate)
    if clip.sample_rate != sample_rate:
        raise InvalidInputError(f"signal at {clip.sample_rate} Hz, scene expects {sample_rate} Hz")
    return clip.fit(n)


def render_target(source: SourceSpec, hrtf: HrtfSet, duration_s: float, sample_rate: int, base_dir=None) -> BinauralClip:
    """Dry signal convolved with the nearest-grid direct-path HRIR pair.

    No 1/r gain and no propagation delay.
    """
    if hrtf.sample_rate != sample_rate:
        raise InvalidInputError("HRTF set and scene sample rates differ")
    y = resolve_signal(source.signal, sample_rate, duration_s, base_dir)
    n = len(y)
    if source.muted:
        return BinauralClip.from_array(np.zeros((2, n)), sample_rate)
    _, index = nearest_direction(hrtf, source.pos.direction)
    return BinauralClip.from_array(convolve(y.samples, hrtf.irs[index])[:, :n], sample_rate)


def render_reverberant(source: SourceSpec, room: RoomSpec, listener: ListenerPose, hrtf: HrtfSet,
                       duration_s: float, sample_rate: int, base_dir=None):
    """Dry signal convolved with the synthesized BRIR; returns ``(clip, images)``."""
    y = resolve_signal(source.signal, sample_rate, duration_s, base_dir)
    images = expand_images(room, source.pos, listener, sample_rate)
    if source.muted:
        return BinauralClip.from_array(np.zeros((2, len(y))), sample_rate), images
    brir = synthesize_brir(images, hrtf)
    return BinauralClip.from_array(convolve(y.samples, brir.pair)[:, : len(y)], sample_rate), images


def render_stft_domain(dry: MonoClip, clue, config: StftConfig | None = None,
                       gain: float = 1.0, delay_samples: float = 0.0) -> BinauralSpectrogram:
    """Multiplicative STFT-domain rendering ``Y(k,l) * gain * h(k) * exp(-2j pi k tau / K)``.

    With ``gain=1, delay_samples=0`` this is the clue-rendered direct-path
    target; with the direct-path gain and delay it is an anechoic single-image
    mixture in the same transfer-function model the extractors assume.
    """
    config = config or StftConfig()
    clue = np.asarray(clue)
    if clue.shape != (2, config.n_bins):
        raise InvalidInputError(f"clue must have shape (2, {config.n_bins})")
    y = stft(BinauralClip(dry, dry), config).bins[0]
    k = np.arange(config.n_bins)
    ramp = gain * np.exp(-2j * np.pi * k * delay_samples / config.window_length)
    bins = clue[:, :, None] * (ramp[:, None] * y)[None]
    return BinauralSpectrogram(bins, config, dry.sample_rate, len(dry))


def _energy(clip: BinauralClip) -> float:
    return float(np.sum(clip.data**2))


def mix_scene(spec: SceneSpec, hrtf: HrtfSet, base_dir=None) -> RenderedScene:
    """Render both sources, scale them to the requested SIR and sum.

    SIR is measured on the reverberant renders with energy summed over both
    ears.  The two gains are chosen so the total energy of the scaled renders
    equals that of the unscaled ones; this keeps the mixture unchanged when
    the sources are swapped and the SIR negated.  A muted source contributes
    silence and leaves the other source unscaled.
    """
    if hrtf.sample_rate != spec.sample_rate:
        raise InvalidInputError("HRTF set and scene sample rates differ")
    revs, targets, direct = [], [], []
    for src in spec.sources:
        rev, images = render_reverberant(src, spec.room, spec.listener, hrtf, spec.duration_s, spec.sample_rate, base_dir)
        revs.append(rev)
        targets.append(render_target(src, hrtf, spec.duration_s, spec.sample_rate, base_dir))
        d = images.direct
        direct.append({"gain": d.gain, "delay_samples": d.delay_samples})
    energies = [_energy(r) for r in revs]
    muted = [s.muted for s in spec.sources]
    if all(muted):
        raise SilentSourceError("both sources are muted")
    for e, m, i in zip(energies, muted, (1, 2)):
        if e <= 0 and not m:
            raise SilentSourceError(f"source {i} renders to silence; SIR cannot be realized")
    if any(muted):
        gains = [0.0 if m else 1.0 for m in muted]
        realized = None
    else:
        rho = 10.0 ** (spec.sir_db / 10.0)
        total = energies[0] + energies[1]
        gains = [math.sqrt(total * rho / (1.0 + rho) / energies[0]), math.sqrt(total / (1.0 + rho) / energies[1])]
        realized = 10.0 * math.log10(gains[0] ** 2 * energies[0] / (gains[1] ** 2 * energies[1]))
        if abs(realized - spec.sir_db) > 1e-9:
            raise AssertionError(f"realized SIR {realized} != requested {spec.sir_db}")
    scaled = tuple(r.scaled(g) for r, g in zip(revs, gains))
    scaled_targets = tuple(t.scaled(g) for t, g in zip(targets, gains))
    mixture = scaled[0] + scaled[1]
    metadata = {
        "scene_id": spec.scene_id,
        "t60_s": None if spec.room.anechoic else spec.room.t60_s,
        "reflection_coefficient": t60_to_reflection(spec.room),
        "sir_db": realized,
        "source_gains": gains,
        "direct_path": direct,
        "positions": [
            source_world_position(s.pos, spec.listener).tolist() for s in spec.sources
        ],
        "seed": spec.seed,
        "hrtf_subject": hrtf.subject_id,
    }
    return RenderedScene(mixture, scaled_targets, scaled, metadata)


@dataclass(frozen=True)
class DatasetProtocol:
    """Sampling ranges for a simulated dataset.

    Defaults: T60 0.2-0.8 s, SIR -5 to 5 dB, 5 s clips at 16 kHz, rooms of
    4-8 x 3-6 x 2.5-3.5 m and sources 1-2.5 m from the listener.  With
    ``separations`` set, source 2 is placed at exactly each listed azimuth
    offset from source 1, ``scenes_per_separation`` times.
    """

    utterances: tuple = ()
    hrtf_subjects: tuple = ("synthetic",)
    n_mixtures: int = 100
    split: str = "train"
    name: str = "sim"
    room_x_m: tuple = (4.0, 8.0)
    room_y_m: tuple = (3.0, 6.0)
    room_z_m: tuple = (2.5, 3.5)
    t60_s: tuple = (0.2, 0.8)
    sir_db: tuple = (-5.0, 5.0)
    radius_m: tuple = (1.0, 2.5)
    elevation_deg: tuple = (-30.0, 30.0)
    listener_height_m: tuple = (1.2, 1.8)
    wall_margin_m: float = 0.2
    max_order: int = 10
    duration_s: float = 5.0
    sample_rate: int = 16000
    separations: tuple = ()
    scenes_per_separation: int = 30
    integer_azimuths: bool = False

    def __post_init__(self):
        if self.split not in ("train", "valid", "test"):
            raise ConfigError(f"unknown split {self.split!r}")
        for sep in self.separations:
            if not 0 < sep <= 180:
                raise ConfigError(f"separation {sep} outside (0, 180]")
        for name in ("room_x_m", "room_y_m", "room_z_m", "t60_s", "sir_db", "radius_m", "elevation_deg"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"{name}: lower bound exceeds upper bound")

    @property
    def total_mixtures(self) -> int:
        if self.separations:
            return len(self.separations) * self.scenes_per_separation
        return self.n_mixtures

    def to_dict(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d):
        known = cls.__dataclass_fields__
        unknown = set(d) - set(known)
        if unknown:
            raise ConfigError(f"unknown protocol fields: {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


def angular_sweep_protocol(separations=tuple(range(20, 91, 10)), scenes_per_separation: int = 30,
                           **overrides) -> DatasetProtocol:
    """Protocol for the azimuth-separation sweep.

    Defaults: sources at 1.5 m, heights within +-0.3 m of ear level,
    T60 = 0.37 s, integer-degree azimuths and equal source levels; every
    mixture is evaluated for both speakers.
    """
    separations = tuple(float(s) for s in separations)
    if not separations:
        raise ConfigError("at least one separation is required")
    height = math.degrees(math.atan2(0.3, 1.5))
    params = dict(
        split="test",
        name="sweep",
        t60_s=(0.37, 0.37),
        sir_db=(0.0, 0.0),
        radius_m=(1.5, 1.5),
        elevation_deg=(-height, height),
        separations=separations,
        scenes_per_separation=scenes_per_separation,
        integer_azimuths=True,
    )
    params.update(overrides)
    return DatasetProtocol(**params)


def _place_sources(rng, protocol, dims, separation):
    for _ in range(1000):
        pos = tuple(
            rng.uniform(protocol.wall_margin_m, d - protocol.wall_margin_m) for d in dims[:2]
        ) + (rng.uniform(*protocol.listener_height_m),)
        pos = pos[:2] + (min(pos[2], dims[2] - protocol.wall_margin_m),)
        listener = ListenerPose(pos, float(rng.uniform(0.0, 360.0)))
        if protocol.integer_azimuths:
            az1 = float(rng.integers(0, 360))
        else:
            az1 = float(rng.uniform(0.0, 360.0))
        if separation is None:
            az2 = float(rng.integers(0, 360)) if protocol.integer_azimuths else float(rng.uniform(0.0, 360.0))
        else:
            az2 = (az1 + separation * (1 if rng.random() < 0.5 else -1)) % 360.0
        placed = []
        for az in (az1, az2):
            el = float(rng.uniform(*protocol.elevation_deg))
            r = float(rng.uniform(*protocol.radius_m))
            placed.append(SphericalPos(Direction(az, el), r))
        ok = True
        for sp in placed:
            w = source_world_position(sp, listener)
            if not all(protocol.wall_margin_m / 2 < c < d - protocol.wall_margin_m / 2 for c, d in zip(w, dims)):
                ok = False
        if ok:
            return listener, placed
    raise ConfigError("could not place sources inside the room; widen the room or shrink the radius range")


def sample_dataset(protocol: DatasetProtocol, seed: int):
    """Deterministic stream of :class:`SceneSpec` for ``protocol``.

    Each mixture draws from its own generator seeded by ``(seed, index)``,
    so the stream is reproducible and independent of how it is consumed.
    Test splits yield every mixture twice, with target 1 then target 2.
    """
    if not protocol.utterances:
        raise ConfigError("utterance pool is empty")
    if not protocol.hrtf_subjects:
        raise ConfigError("HRTF subject pool is empty")
    for i in range(protocol.total_mixtures):
        ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, i])
        rng = np.random.default_rng(ss)
        scene_seed = int(ss.generate_state(1, dtype=np.uint64)[0])
        separation = None
        tags = {}
        if protocol.separations:
            separation = protocol.separations[i // protocol.scenes_per_separation]
            tags["separation_deg"] = separation
        dims = tuple(float(rng.uniform(*r)) for r in (protocol.room_x_m, protocol.room_y_m, protocol.room_z_m))
        room = RoomSpec(dims, float(rng.uniform(*protocol.t60_s)), protocol.max_order)
        listener, placed = _place_sources(rng, protocol, dims, separation)
        utt = rng.choice(len(protocol.utterances), size=2, replace=len(protocol.utterances) < 2)
        sources = tuple(SourceSpec(p, protocol.utterances[int(u)]) for p, u in zip(placed, utt))
        subject = protocol.hrtf_subjects[int(rng.integers(len(protocol.hrtf_subjects)))]
        sir = float(rng.uniform(*protocol.sir_db))
        targets = (1, 2) if protocol.split == "test" else (int(rng.integers(1, 3)),)
        for t in targets:
            yield SceneSpec(
                room=room,
                listener=listener,
                sources=sources,
                sir_db=sir,
                target_index=t,
                duration_s=protocol.duration_s,
                sample_rate=protocol.sample_rate,
                seed=scene_seed,
                scene_id=f"{protocol.name}-{i:06d}",
                hrtf_subject=subject,
                tags=dict(tags),
            )
