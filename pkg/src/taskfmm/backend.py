"""Engine backend selection.

The compiled extension is preferred.  Set ``TASKFMM_BACKEND=python`` to
force the pure-Python engine, or pass ``backend=`` explicitly.
"""

import logging
import os

from . import _pycore

logger = logging.getLogger(__name__)

try:
    from . import _core
except ImportError:  # extension not built
    _core = None

_BACKENDS = {"python": _pycore}
if _core is not None:
    _BACKENDS["compiled"] = _core


def available():
    return sorted(_BACKENDS)


def get_backend(name=None):
    if name in (None, "auto"):
        name = os.environ.get("TASKFMM_BACKEND", "auto")
    if name == "auto":
        return _core if _core is not None else _pycore
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} not available (have {available()})") from None


DEFAULT = get_backend()
if DEFAULT is _pycore:
    logger.info("compiled core not available, using the pure-Python engine")
