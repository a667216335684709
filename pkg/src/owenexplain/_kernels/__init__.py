"""Kernel backend selection.

The compiled Cython core is used when importable; otherwise the numpy
fallback takes over transparently. OWEN_EXPLAIN_BACKEND=pure|compiled|auto
overrides the choice (compiled raises if the extension is missing).
"""

from __future__ import annotations

import os

_requested = os.environ.get("OWEN_EXPLAIN_BACKEND", "auto").lower()
if _requested not in {"auto", "pure", "compiled"}:
    raise RuntimeError(
        f"OWEN_EXPLAIN_BACKEND must be auto, pure or compiled, got {_requested!r}"
    )

if _requested == "pure":
    from . import _pure as _impl
else:
    try:
        from . import _compiled as _impl  # type: ignore[no-redef]
    except ImportError:
        if _requested == "compiled":
            raise
        from . import _pure as _impl  # type: ignore[no-redef]

BACKEND = _impl.BACKEND
gaussian_kernel = _impl.gaussian_kernel
gaussian_blur = _impl.gaussian_blur
apply_masks = _impl.apply_masks
popcounts = _impl.popcounts
shapley_from_table = _impl.shapley_from_table

__all__ = [
    "BACKEND",
    "gaussian_kernel",
    "gaussian_blur",
    "apply_masks",
    "popcounts",
    "shapley_from_table",
]
