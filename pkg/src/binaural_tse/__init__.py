"""Binaural two-speaker scene simulation and HRTF-conditioned extraction evaluation."""

__version__ = "0.1.0"

from .dsp import BinauralClip, BinauralSpectrogram, MonoClip, StftConfig, istft, stft  # noqa: E402
from .errors import (  # noqa: E402
    BinauralTseError,
    ConfigError,
    FormatError,
    IntegrityError,
    InvalidInputError,
    MissingArtifactError,
)
from .extract import ExtractionClue, matched_filter_extract, mvdr_extract, oracle_mask_extract  # noqa: E402
from .hrtf import Direction, HrtfSet, SphericalPos, load_hrtf_set, save_hrtf_set, synthetic_hrtf_set  # noqa: E402
from .metrics import cue_deviation, cue_histograms, evaluate, mae_stft, si_sdr_binaural, si_sdr_improvement  # noqa: E402
from .room import ListenerPose, RoomSpec, expand_images, synthesize_brir  # noqa: E402
from .scene import DatasetProtocol, SceneSpec, SourceSpec, angular_sweep_protocol, mix_scene, sample_dataset  # noqa: E402

__all__ = [
    "BinauralClip", "BinauralSpectrogram", "MonoClip", "StftConfig", "stft", "istft",
    "BinauralTseError", "ConfigError", "FormatError", "IntegrityError", "InvalidInputError", "MissingArtifactError",
    "ExtractionClue", "matched_filter_extract", "mvdr_extract", "oracle_mask_extract",
    "Direction", "HrtfSet", "SphericalPos", "load_hrtf_set", "save_hrtf_set", "synthetic_hrtf_set",
    "cue_deviation", "cue_histograms", "evaluate", "mae_stft", "si_sdr_binaural", "si_sdr_improvement",
    "ListenerPose", "RoomSpec", "expand_images", "synthesize_brir",
    "DatasetProtocol", "SceneSpec", "SourceSpec", "angular_sweep_protocol", "mix_scene", "sample_dataset",
]
