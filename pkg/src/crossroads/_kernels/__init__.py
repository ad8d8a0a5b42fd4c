"""Kernel backend selection: compiled extension if present, numpy otherwise.

Set CROSSROADS_PURE_PYTHON=1 to force the numpy fallback.
"""

import os

if os.environ.get("CROSSROADS_PURE_PYTHON") == "1":
    from . import fallback as backend
else:
    try:
        from . import _native as backend  # type: ignore[attr-defined]
    except ImportError:
        from . import fallback as backend

BACKEND_NAME: str = backend.NAME
advance = backend.advance
poses = backend.poses
collisions = backend.collisions
