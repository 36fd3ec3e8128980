"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the pure-Python
twins are used. Set ``ADAPTDYN_BACKEND=python`` to force the fallback or
``ADAPTDYN_BACKEND=compiled`` to fail loudly when the extension is missing.
"""
import os

from . import _pykernels

_requested = os.environ.get("ADAPTDYN_BACKEND", "auto").lower()

if _requested == "python":
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = _pykernels
        BACKEND = "python"

ibm_run = _impl.ibm_run
lv_advance = _impl.lv_advance

IBM_TSTOP = _pykernels.IBM_TSTOP
IBM_MUTATION = _pykernels.IBM_MUTATION
IBM_REFILL = _pykernels.IBM_REFILL
IBM_EXTINCT = _pykernels.IBM_EXTINCT
IBM_MAXEVENTS = _pykernels.IBM_MAXEVENTS
IBM_LOGFULL = _pykernels.IBM_LOGFULL
MAXD = _pykernels.MAXD


def get_backend(name):
    """Return a namespace with ``ibm_run`` and ``lv_advance`` for ``name``."""
    if name == "python":
        return _pykernels
    if name == "compiled":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
