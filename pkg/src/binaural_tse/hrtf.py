"""HRTF sets: data model, interchange-format I/O, nearest-neighbour lookup.

Coordinates: azimuth counterclockwise from the front (0 deg front, 90 deg
left), elevation up from the horizontal plane.

Interchange format
------------------
``<name>.hrtfset.json``::

    {"subject_id": str, "sample_rate": int, "radius_m": float,
     "ir_length": int,
     "entries": [{"azimuth_deg": float, "elevation_deg": float, "offset": int}, ...]}

``<name>.hrtfset.f32``: little-endian float32; at each entry's ``offset``
(counted in elements) sit ``ir_length`` left samples then ``ir_length``
right samples.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .dsp import ir_spectrum
from .errors import FormatError, IntegrityError, InvalidInputError

__all__ = [
    "Direction",
    "SphericalPos",
    "Hrir",
    "HrtfSet",
    "angular_distance",
    "nearest_direction",
    "get_clue",
    "load_hrtf_set",
    "save_hrtf_set",
    "synthetic_hrtf_set",
    "grid_resolution",
]


@dataclass(frozen=True)
class Direction:
    azimuth_deg: float
    elevation_deg: float

    def __post_init__(self):
        az, el = float(self.azimuth_deg), float(self.elevation_deg)
        if not (math.isfinite(az) and math.isfinite(el)):
            raise InvalidInputError("direction angles must be finite")
        if not -90.0 <= el <= 90.0:
            raise InvalidInputError(f"elevation {el} outside [-90, 90]")
        az = az % 360.0
        if az == 360.0:  # -1e-17 % 360 rounds up
            az = 0.0
        object.__setattr__(self, "azimuth_deg", az)
        object.__setattr__(self, "elevation_deg", el)

    def unit_vector(self) -> np.ndarray:
        az, el = np.radians(self.azimuth_deg), np.radians(self.elevation_deg)
        return np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])

    @classmethod
    def from_vector(cls, v) -> "Direction":
        x, y, z = (float(c) for c in v)
        horiz = math.hypot(x, y)
        el = math.degrees(math.atan2(z, horiz))
        az = math.degrees(math.atan2(y, x)) if horiz > 0 else 0.0
        return cls(az, max(-90.0, min(90.0, el)))


@dataclass(frozen=True)
class SphericalPos:
    direction: Direction
    radius_m: float

    def __post_init__(self):
        if not self.radius_m > 0:
            raise InvalidInputError(f"radius must be positive, got {self.radius_m}")

    def cartesian(self) -> np.ndarray:
        return self.radius_m * self.direction.unit_vector()


@dataclass(frozen=True)
class Hrir:
    left: np.ndarray
    right: np.ndarray
    sample_rate: int

    def __post_init__(self):
        left = np.asarray(self.left, dtype=np.float64).reshape(-1)
        right = np.asarray(self.right, dtype=np.float64).reshape(-1)
        if left.size == 0 or left.shape != right.shape:
            raise InvalidInputError("HRIR channels must be non-empty and of equal length")
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    @property
    def pair(self) -> np.ndarray:
        return np.stack([self.left, self.right])


def angular_distance(a: Direction, b: Direction) -> float:
    """Great-circle angle between two directions, in degrees within [0, 180]."""
    phi_a, phi_b = math.radians(a.elevation_deg), math.radians(b.elevation_deg)
    dtheta = math.radians(a.azimuth_deg - b.azimuth_deg)
    c = math.sin(phi_a) * math.sin(phi_b) + math.cos(phi_a) * math.cos(phi_b) * math.cos(dtheta)
    return math.degrees(math.acos(max(-1.0, min(1.0, c))))


def _angular_distances(az, el, query: Direction) -> np.ndarray:
    phi = np.radians(el)
    phi_q = math.radians(query.elevation_deg)
    c = np.sin(phi) * math.sin(phi_q) + np.cos(phi) * math.cos(phi_q) * np.cos(
        np.radians(az - query.azimuth_deg)
    )
    return np.degrees(np.arccos(np.clip(c, -1.0, 1.0)))


class HrtfSet:
    """Immutable directional grid of HRIR pairs at one radius and sample rate.

    ``irs`` has shape ``(n_entries, 2, ir_length)``.
    """

    def __init__(self, azimuths, elevations, irs, sample_rate, radius_m, subject_id="unknown"):
        dirs = [Direction(a, e) for a, e in zip(np.asarray(azimuths).ravel(), np.asarray(elevations).ravel())]
        irs = np.array(irs, dtype=np.float64)
        if not dirs:
            raise InvalidInputError("an HRTF set needs at least one entry")
        if irs.ndim != 3 or irs.shape[0] != len(dirs) or irs.shape[1] != 2 or irs.shape[2] == 0:
            raise InvalidInputError(f"irs must have shape ({len(dirs)}, 2, L>0), got {irs.shape}")
        if not np.all(np.isfinite(irs)):
            raise InvalidInputError("HRIR samples must be finite")
        if not radius_m > 0 or int(sample_rate) != sample_rate or sample_rate <= 0:
            raise InvalidInputError("radius_m and sample_rate must be positive")
        seen = {}
        for i, d in enumerate(dirs):
            key = (round(d.azimuth_deg, 9), round(d.elevation_deg, 9))
            if key in seen:
                raise IntegrityError(
                    f"duplicate direction az={d.azimuth_deg} el={d.elevation_deg} "
                    f"(entries {seen[key]} and {i})"
                )
            seen[key] = i
        irs.setflags(write=False)
        self.directions = tuple(dirs)
        self.azimuths = np.array([d.azimuth_deg for d in dirs])
        self.elevations = np.array([d.elevation_deg for d in dirs])
        self.azimuths.setflags(write=False)
        self.elevations.setflags(write=False)
        self.irs = irs
        self.sample_rate = int(sample_rate)
        self.radius_m = float(radius_m)
        self.subject_id = str(subject_id)

    @classmethod
    def from_entries(cls, entries, sample_rate, radius_m, subject_id="unknown") -> "HrtfSet":
        """Build from ``[(Direction, Hrir), ...]``."""
        entries = list(entries)
        if not entries:
            raise InvalidInputError("an HRTF set needs at least one entry")
        lengths = {h.left.size for _, h in entries}
        if len(lengths) != 1:
            raise InvalidInputError("all HRIRs must share one length")
        if any(h.sample_rate != sample_rate for _, h in entries):
            raise InvalidInputError("all HRIRs must share the set's sample rate")
        return cls(
            [d.azimuth_deg for d, _ in entries],
            [d.elevation_deg for d, _ in entries],
            [h.pair for _, h in entries],
            sample_rate,
            radius_m,
            subject_id,
        )

    def __len__(self):
        return len(self.directions)

    @property
    def ir_length(self) -> int:
        return self.irs.shape[2]

    def hrir(self, index: int) -> Hrir:
        return Hrir(self.irs[index, 0], self.irs[index, 1], self.sample_rate)

    @property
    def entries(self):
        return [(d, self.hrir(i)) for i, d in enumerate(self.directions)]

    def distances_to(self, query: Direction) -> np.ndarray:
        return _angular_distances(self.azimuths, self.elevations, query)

    def nearest_indices(self, azimuths, elevations) -> np.ndarray:
        """Vectorised :func:`nearest_direction` for many queries; same tie rule."""
        az = np.asarray(azimuths, dtype=np.float64).ravel()
        el = np.asarray(elevations, dtype=np.float64).ravel()
        phi_g = np.radians(self.elevations)
        sin_g, cos_g = np.sin(phi_g), np.cos(phi_g)
        out = np.empty(az.size, dtype=np.int64)
        for start in range(0, az.size, 512):
            sl = slice(start, start + 512)
            phi_q = np.radians(el[sl])[:, None]
            c = np.sin(phi_q) * sin_g + np.cos(phi_q) * cos_g * np.cos(
                np.radians(self.azimuths[None, :] - (az[sl] % 360.0)[:, None])
            )
            d = np.degrees(np.arccos(np.clip(c, -1.0, 1.0)))
            best = d.min(axis=1, keepdims=True)
            out[sl] = np.argmax(d <= best + 1e-12, axis=1)
        return out


def nearest_direction(hrtf: HrtfSet, query: Direction):
    """Grid direction closest to ``query`` in great-circle distance.

    Ties (within 1e-12 deg) go to the lowest entry index.

    Returns
    -------
    (Direction, int)
    """
    d = hrtf.distances_to(query)
    best = d.min()
    index = int(np.flatnonzero(d <= best + 1e-12)[0])
    return hrtf.directions[index], index


def get_clue(hrtf: HrtfSet, query: Direction, fft_size: int) -> np.ndarray:
    """One-sided spectra ``(2, fft_size/2+1)`` of the nearest grid HRIR pair."""
    _, index = nearest_direction(hrtf, query)
    return ir_spectrum(hrtf.irs[index], fft_size)


def grid_resolution(hrtf: HrtfSet):
    """Azimuth and elevation step of a regular grid, ``None`` where irregular."""

    def step(values):
        u = np.unique(np.round(values, 9))
        if u.size < 2:
            return None
        diffs = np.diff(u)
        return float(diffs.min()) if np.allclose(diffs, diffs[0], atol=1e-6) else None

    return step(hrtf.azimuths), step(hrtf.elevations)


_SCHEMA = {
    "type": "object",
    "required": ["subject_id", "sample_rate", "radius_m", "ir_length", "entries"],
    "properties": {
        "subject_id": {"type": "string"},
        "sample_rate": {"type": "integer", "exclusiveMinimum": 0},
        "radius_m": {"type": "number", "exclusiveMinimum": 0},
        "ir_length": {"type": "integer", "exclusiveMinimum": 0},
        "entries": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["azimuth_deg", "elevation_deg", "offset"],
                "properties": {
                    "azimuth_deg": {"type": "number"},
                    "elevation_deg": {"type": "number", "minimum": -90, "maximum": 90},
                    "offset": {"type": "integer", "minimum": 0},
                },
            },
        },
    },
}


def _paths(path):
    path = Path(path)
    name = path.name
    for suffix in (".hrtfset.json", ".hrtfset.f32"):
        if name.endswith(suffix):
            base = path.with_name(name[: -len(suffix)])
            break
    else:
        base = path
    return base.with_name(base.name + ".hrtfset.json"), base.with_name(base.name + ".hrtfset.f32")


def load_hrtf_set(path, format: str = "interchange") -> HrtfSet:
    """Read and validate an interchange-format HRTF set.

    ``path`` may name the manifest, the sample blob, or their common stem.

    Raises
    ------
    FormatError
        Schema violation, unreadable file, or truncated sample blob.
    IntegrityError
        Duplicate directions.
    """
    if format != "interchange":
        raise FormatError(f"unsupported HRTF format {format!r}; convert to the interchange format first")
    manifest_path, blob_path = _paths(path)
    try:
        meta = json.loads(manifest_path.read_text())
    except FileNotFoundError as exc:
        raise FormatError(f"manifest not found: {manifest_path}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc}") from exc
    try:
        jsonschema.validate(meta, _SCHEMA)
    except jsonschema.ValidationError as exc:
        field = "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in exc.absolute_path)
        raise FormatError(exc.message, field=field) from exc
    if not blob_path.exists():
        raise FormatError(f"sample blob not found: {blob_path}")
    blob = np.fromfile(blob_path, dtype="<f4")
    n = meta["ir_length"]
    irs = []
    for i, entry in enumerate(meta["entries"]):
        off = entry["offset"]
        if off + 2 * n > blob.size:
            raise FormatError(
                f"needs {2 * n} samples at offset {off}, blob has {blob.size}",
                field=f"$.entries[{i}].offset",
            )
        irs.append(blob[off : off + 2 * n].astype(np.float64).reshape(2, n))
    return HrtfSet(
        [e["azimuth_deg"] for e in meta["entries"]],
        [e["elevation_deg"] for e in meta["entries"]],
        irs,
        meta["sample_rate"],
        meta["radius_m"],
        meta["subject_id"],
    )


def save_hrtf_set(hrtf: HrtfSet, path) -> Path:
    """Write ``hrtf`` in the interchange format; returns the manifest path.

    Samples are stored as float32, so a set loaded from disk round-trips
    bit-exactly.
    """
    manifest_path, blob_path = _paths(path)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    n = hrtf.ir_length
    entries = [
        {"azimuth_deg": float(d.azimuth_deg), "elevation_deg": float(d.elevation_deg), "offset": 2 * n * i}
        for i, d in enumerate(hrtf.directions)
    ]
    meta = {
        "subject_id": hrtf.subject_id,
        "sample_rate": hrtf.sample_rate,
        "radius_m": hrtf.radius_m,
        "ir_length": n,
        "entries": entries,
    }
    manifest_path.write_text(json.dumps(meta, indent=1) + "\n")
    hrtf.irs.astype("<f4").tofile(blob_path)
    return manifest_path


# Brown & Duda pinna echo parameters (reflection coefficient, A, B, D);
# delays are given in samples at 44.1 kHz.
_PINNA = ((0.5, 1.0, 2.0, 1.0), (-1.0, 5.0, 4.0, 0.5), (0.5, 5.0, 7.0, 0.5), (-0.25, 5.0, 11.0, 0.5), (0.25, 5.0, 13.0, 0.5))


def _ear_response(u, ear_axis, pinna_axis, freqs, head_radius, c, pinna_gain):
    """Spherical-head shadow, Woodworth delay and pinna echoes for one ear."""
    cos_inc = float(np.clip(u @ ear_axis, -1.0, 1.0))
    inc = math.acos(cos_inc)  # 0 = source on the ear axis
    alpha = 1.05 + 0.95 * math.cos(inc / math.radians(150.0) * math.pi)
    w = 2 * np.pi * freqs
    w0 = c / head_radius
    shadow = (1 + 1j * alpha * w / (2 * w0)) / (1 + 1j * w / (2 * w0))
    if inc < math.pi / 2:
        delay = -head_radius / c * math.cos(inc)
    else:
        delay = head_radius / c * (inc - math.pi / 2)
    # pinna echoes depend on elevation and on the angle to the direction the
    # pinna faces, which differs per ear and breaks front/back symmetry
    el = math.asin(float(np.clip(u[2], -1, 1)))
    theta = math.acos(float(np.clip(u @ pinna_axis, -1, 1)))
    pinna = np.ones_like(w, dtype=np.complex128)
    for rho, a, b, d in _PINNA:
        tau = (a * math.cos(theta / 2) * math.sin(d * (math.pi / 2 - el)) + b) / 44100.0
        pinna = pinna + pinna_gain * rho * np.exp(-1j * w * tau)
    return shadow * pinna * np.exp(-1j * w * delay)


def synthetic_hrtf_set(
    azimuth_step=6.0,
    elevation_step=3.0,
    elevation_range=(-90.0, 90.0),
    sample_rate=16000,
    ir_length=128,
    head_radius=0.0875,
    radius_m=1.5,
    pinna_gain=0.3,
    subject_id="synthetic",
    speed_of_sound=343.0,
) -> HrtfSet:
    """Analytic spherical-head HRTF set on a regular grid.

    A stand-in for measured sets: Brown-Duda head shadow, Woodworth ITD and a
    five-echo pinna model that breaks front/back symmetry.  The onset of the
    nearer ear sits at ``ir_length // 4`` samples.
    """
    lo, hi = elevation_range
    elevations = np.arange(lo, hi + 1e-9, elevation_step) if elevation_step else np.array([lo])
    azimuths = np.arange(0.0, 360.0 - 1e-9, azimuth_step)
    n_fft = 4 * ir_length
    freqs = np.fft.rfftfreq(n_fft, 1.0 / sample_rate)
    base = ir_length // 4 / sample_rate + head_radius / speed_of_sound
    taper = np.ones(ir_length)
    fade = ir_length // 8
    taper[-fade:] = 0.5 * (1 + np.cos(np.linspace(0, np.pi, fade)))
    axes = (
        (np.array([0.0, 1.0, 0.0]), np.array([1.0, 1.0, 0.0]) / math.sqrt(2)),
        (np.array([0.0, -1.0, 0.0]), np.array([1.0, -1.0, 0.0]) / math.sqrt(2)),
    )
    az_all, el_all, irs = [], [], []
    for el in elevations:
        for az in azimuths:
            u = Direction(az, el).unit_vector()
            pair = []
            for ear_axis, pinna_axis in axes:
                h = _ear_response(u, ear_axis, pinna_axis, freqs, head_radius, speed_of_sound, pinna_gain)
                h = h * np.exp(-2j * np.pi * freqs * base)
                pair.append(np.fft.irfft(h, n=n_fft)[:ir_length] * taper)
            az_all.append(az)
            el_all.append(el)
            irs.append(pair)
    return HrtfSet(az_all, el_all, np.array(irs), sample_rate, radius_m, subject_id)
