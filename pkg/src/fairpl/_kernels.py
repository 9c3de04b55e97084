"""Kernel backend selection.

Prefers the compiled extension; falls back to the numpy implementation when
the build is unavailable. FAIRPL_PURE_PY=1 forces the fallback (used by the
benchmark and the backend-equivalence tests).
"""

import os

_force_pure = os.environ.get("FAIRPL_PURE_PY", "") not in ("", "0")

if _force_pure:
    from fairpl import _kernels_py as _impl
else:
    try:
        from fairpl import _speedups as _impl  # type: ignore[attr-defined]
    except ImportError:
        from fairpl import _kernels_py as _impl

BACKEND: str = _impl.BACKEND
sample_pl_rankings = _impl.sample_pl_rankings
plrank3_accumulate = _impl.plrank3_accumulate
