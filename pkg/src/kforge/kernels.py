"""Kernel backend selection.

Imports the compiled extension when available, otherwise the pure-Python
fallback. Set ``KFORGE_PURE_PYTHON=1`` to force the fallback (used by the
benchmark and the equivalence tests).
"""
from __future__ import annotations

import os

if os.environ.get("KFORGE_PURE_PYTHON") == "1":
    from kforge import _kernels_py as _impl
else:
    try:
        from kforge import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        from kforge import _kernels_py as _impl

BACKEND: str = _impl.IMPLEMENTATION
scan_json_span = _impl.scan_json_span
bucket_pair_stats = _impl.bucket_pair_stats
