"""Pick the compiled kernels when available, else the pure-Python fallback.

Set ``DIALECTID_PURE_PYTHON=1`` to force the fallback.
"""

import logging
import os

from . import _sgns_py

log = logging.getLogger(__name__)

BACKEND = "python"
train_pairs = _sgns_py.train_pairs

if os.environ.get("DIALECTID_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _sgns
    except ImportError:  # extension not built
        log.debug("compiled skip-gram kernel unavailable, using pure Python")
    else:
        BACKEND = "cython"
        train_pairs = _sgns.train_pairs
