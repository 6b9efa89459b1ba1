"""Ridgelet frame discretisation and adaptive solver for s . grad u + kappa u = f."""

import os as _os

# RIDGESOLVE_THREADS caps the BLAS/OpenMP pools; it must be set before numpy loads
_threads = _os.environ.get("RIDGESOLVE_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from .frame import (
    CoeffVector,
    FrameIndex,
    FrameSpec,
    Preconditioner,
    analyze,
    frame_layout,
    synthesize,
)
from .windows import Tile, TransitionProfile, WindowFamily

__version__ = "0.1.0"

__all__ = [
    "CoeffVector",
    "FrameIndex",
    "FrameSpec",
    "Preconditioner",
    "Tile",
    "TransitionProfile",
    "WindowFamily",
    "analyze",
    "frame_layout",
    "synthesize",
]
