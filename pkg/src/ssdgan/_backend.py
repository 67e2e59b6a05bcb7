"""Selects the conv2d kernel implementation at import time.

The compiled Cython extension is preferred when present; the pure-numpy
fallback is used otherwise, or when SSDGAN_DISABLE_EXT is set.  Both
expose the same two functions and are exercised against each other in
the test suite.
"""

import os

from . import _conv_numpy

if os.environ.get("SSDGAN_DISABLE_EXT"):
    _impl = _conv_numpy
else:
    try:
        from . import _convkernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _conv_numpy

NAME = _impl.NAME
conv2d_forward = _impl.conv2d_forward
conv2d_backward = _impl.conv2d_backward


def backend_name():
    return NAME
