"""Stepping-core backend selection.

The compiled extension is preferred when importable; the pure-Python
fallback is bitwise-equivalent and always available. Set SFK_BACKEND to
``compiled`` or ``python`` to force a choice (``auto`` or unset picks
compiled when present).
"""

from __future__ import annotations

import os

_requested = os.environ.get("SFK_BACKEND", "auto").strip().lower()

if _requested in ("", "auto"):
    try:
        from . import _kernels as backend  # type: ignore[attr-defined]

        BACKEND_NAME = "compiled"
    except ImportError:
        from . import fallback as backend  # type: ignore[no-redef]

        BACKEND_NAME = "python"
elif _requested in ("compiled", "cython", "c"):
    from . import _kernels as backend  # type: ignore[attr-defined, no-redef]

    BACKEND_NAME = "compiled"
elif _requested in ("python", "fallback", "pure"):
    from . import fallback as backend  # type: ignore[no-redef]

    BACKEND_NAME = "python"
else:
    raise ImportError(
        f"SFK_BACKEND={_requested!r} not recognized; "
        "use 'auto', 'compiled', or 'python'"
    )
