"""Kernel backend selection.

The compiled extension is used when it imports; setting ``LAGP_PURE_PYTHON``
(to anything non-empty) forces the numpy fallback.
"""

import os

from . import _pure

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = {"pure": _pure}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled

if os.environ.get("LAGP_PURE_PYTHON") or _compiled is None:
    kernels = _pure
else:
    kernels = _compiled


def get(name=None):
    """Return a backend module by name, or the active one."""
    if name is None:
        return kernels
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}") from None


def available():
    return sorted(BACKENDS)
