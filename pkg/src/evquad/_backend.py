"""Select the kernel implementation at import time.

The compiled extension is preferred; set ``EVQUAD_PURE=1`` to force the numpy
fallback. Both expose the contract documented in ``_pykernels``.
"""
import logging
import os

from . import _pykernels

log = logging.getLogger(__name__)

pure = _pykernels

if os.environ.get("EVQUAD_PURE", "") not in ("", "0"):
    compiled = None
else:
    try:
        from . import _kernels as compiled
    except ImportError as exc:  # pragma: no cover - depends on the build
        log.debug("compiled kernels unavailable: %s", exc)
        compiled = None

kernels = compiled if compiled is not None else pure
BACKEND = kernels.BACKEND
