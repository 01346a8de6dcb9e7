"""Kernel dispatch: compiled extension when importable, numpy otherwise.

Set ``ACGNET_PURE_PYTHON=1`` in the environment to force the fallback.
``BACKENDS`` always lists every implementation that can be loaded, so
tests and benchmarks can compare them side by side.
"""

import os

from . import _pykernels

BACKENDS = {"python": _pykernels}
try:
    from . import _ckernels

    BACKENDS["cython"] = _ckernels
except ImportError:  # extension not built
    pass

if os.environ.get("ACGNET_PURE_PYTHON", "").lower() in ("1", "true", "yes"):
    BACKEND = "python"
else:
    BACKEND = "cython" if "cython" in BACKENDS else "python"

_impl = BACKENDS[BACKEND]
sparsify_rows = _impl.sparsify_rows
epm_term = _impl.epm_term
greedy_match = _impl.greedy_match
