"""Kernel backend selection.

The compiled Cython module is used when it imports; otherwise the
pure-Python twin in ``_pykernels`` takes over. ``use_backend`` switches
explicitly (tests and benchmarks run both).
"""

import logging

from . import _pykernels

log = logging.getLogger(__name__)

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None
    log.debug("compiled kernels unavailable; using pure-Python fallback")

HAVE_COMPILED = _compiled is not None
kernels = _compiled if HAVE_COMPILED else _pykernels


def use_backend(name):
    """Select ``"compiled"`` or ``"python"`` kernels; returns the previous name."""
    global kernels
    prev = current()
    if name == "compiled":
        if not HAVE_COMPILED:
            raise RuntimeError("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
        kernels = _compiled
    elif name == "python":
        kernels = _pykernels
    else:
        raise ValueError(f"unknown backend {name!r}")
    return prev


def current():
    return "compiled" if kernels is _compiled and _compiled is not None else "python"
