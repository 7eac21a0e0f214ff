"""Kernel backend selection.

The compiled extension is preferred when importable; set PDMM_KERNELS to
"python" or "cython" to force one side (the benchmark and the parity tests
use this).
"""
import os

from . import _kernels_py

try:
    from . import _kernels_cy
except ImportError:
    _kernels_cy = None


def _select():
    choice = os.environ.get("PDMM_KERNELS", "auto")
    if choice == "python":
        return _kernels_py, "python"
    if choice == "cython":
        if _kernels_cy is None:
            raise ImportError("PDMM_KERNELS=cython but the compiled extension is not built")
        return _kernels_cy, "cython"
    if choice != "auto":
        raise ValueError(f"PDMM_KERNELS must be auto, python, or cython, not {choice!r}")
    if _kernels_cy is not None:
        return _kernels_cy, "cython"
    return _kernels_py, "python"


kernels, BACKEND = _select()

conv2d_forward = kernels.conv2d_forward
conv2d_backward = kernels.conv2d_backward
maxpool2_forward = kernels.maxpool2_forward
maxpool2_backward = kernels.maxpool2_backward
