"""Backend selection for the hot kernels.

The compiled extension is used when importable; setting the environment
variable ``BINAURAL_TSE_PURE_PYTHON=1`` forces the numpy fallback.
"""

import importlib
import os

from . import _kernels_py

__all__ = ["BACKEND", "accumulate_image_spectra", "frame_xcorr", "get_backend", "available_backends"]


def _load_compiled():
    try:
        return importlib.import_module(f"{__package__}._kernels")
    except ImportError:
        return None


_compiled = _load_compiled()


def available_backends():
    return ["python"] + (["cython"] if _compiled is not None else [])


def get_backend(name):
    """Return the kernel module for ``"cython"`` or ``"python"``."""
    if name == "python":
        return _kernels_py
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


if _compiled is not None and not os.environ.get("BINAURAL_TSE_PURE_PYTHON"):
    BACKEND = "cython"
else:
    BACKEND = "python"

_active = get_backend(BACKEND)
accumulate_image_spectra = _active.accumulate_image_spectra
frame_xcorr = _active.frame_xcorr
