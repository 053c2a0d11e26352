"""Kernel backend selection.

The compiled extension is preferred when it imported cleanly; the numpy
implementation is the fallback.  ``WORDSPOT_BACKEND=python`` or
``WORDSPOT_BACKEND=cython`` forces a backend (forcing ``cython`` without
a built extension is an error).
"""

import os

from wordspot.nn import _pykernels

try:
    from wordspot.nn import _ckernels
except ImportError:
    _ckernels = None

_forced = os.environ.get("WORDSPOT_BACKEND", "").strip().lower()
if _forced == "python":
    _impl = _pykernels
elif _forced == "cython":
    if _ckernels is None:
        raise ImportError("WORDSPOT_BACKEND=cython but the compiled extension is not available")
    _impl = _ckernels
elif _forced:
    raise ImportError("unknown WORDSPOT_BACKEND %r (use 'python' or 'cython')" % _forced)
else:
    _impl = _ckernels if _ckernels is not None else _pykernels

BACKEND = _impl.BACKEND
HAVE_EXTENSION = _ckernels is not None

conv3x3_forward = _impl.conv3x3_forward
conv3x3_backward = _impl.conv3x3_backward
maxpool2x2_forward = _impl.maxpool2x2_forward
maxpool2x2_backward = _impl.maxpool2x2_backward


def available_backends():
    """Names of the kernel backends importable in this environment."""
    names = ["python"]
    if _ckernels is not None:
        names.append("cython")
    return names


def get_backend(name):
    """Return the kernel module for an explicit backend name."""
    if name == "python":
        return _pykernels
    if name == "cython":
        if _ckernels is None:
            raise ValueError("compiled kernel backend is not available")
        return _ckernels
    raise ValueError("unknown backend %r" % name)
