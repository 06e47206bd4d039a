"""Import-time selection of the splatting kernel.

The compiled extension is preferred; the numpy fallback keeps the package
fully functional without a C toolchain. Set PIVGEN_PURE_PYTHON=1 to force
the fallback (used by the backend-comparison benchmark and tests).
"""

from __future__ import annotations

import os

if os.environ.get("PIVGEN_PURE_PYTHON") == "1":
    from . import _fallback as _impl
    BACKEND = "python"
else:
    try:
        from . import _native as _impl  # type: ignore[attr-defined]
        BACKEND = "native"
    except ImportError:
        from . import _fallback as _impl
        BACKEND = "python"

splat_accumulate = _impl.splat_accumulate


def active_backend() -> str:
    """'native' (compiled extension) or 'python' (numpy fallback)."""
    return BACKEND
