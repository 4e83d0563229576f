"""Kernel selection: compiled Cython core when available, pure Python otherwise.

Set ``GRIDSPECTRA_PURE=1`` to force the pure-Python kernels (used by the
parity tests and the benchmark).
"""

from __future__ import annotations

import os

if os.environ.get("GRIDSPECTRA_PURE", "") not in ("", "0"):
    from gridspectra import _kernels_py as _impl
else:
    try:
        from gridspectra import _ckernels as _impl  # type: ignore[no-redef]
    except ImportError:
        from gridspectra import _kernels_py as _impl  # type: ignore[no-redef]

COMPILED: bool = _impl.COMPILED
bucket_states = _impl.bucket_states
diff_columns = _impl.diff_columns
f2_membership = _impl.f2_membership
f2_rank = _impl.f2_rank


def implementation_name() -> str:
    return "cython" if COMPILED else "pure-python"
