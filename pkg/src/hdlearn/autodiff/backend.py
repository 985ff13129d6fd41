"""Execution backend selection.

The compiled extension is preferred; set HDLEARN_PURE_PYTHON=1 to force the
pure-Python fallback (used by the backend-comparison benchmark and as a last
resort when the extension failed to build).
"""

import os

_force_pure = os.environ.get("HDLEARN_PURE_PYTHON", "") not in ("", "0")

if _force_pure:
    from . import pykernel as kernel
else:
    try:
        from . import _ckernel as kernel  # type: ignore[attr-defined]
    except ImportError:
        from . import pykernel as kernel

COMPILED = bool(getattr(kernel, "COMPILED", False))


def backend_name():
    return "compiled" if COMPILED else "pure-python"
