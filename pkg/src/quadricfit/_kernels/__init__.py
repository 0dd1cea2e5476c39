"""Hot-kernel backend selection.

Prefers the compiled extension (``_core``); falls back to the vectorized
numpy implementation when the extension has not been built. Set
``QUADRICFIT_FORCE_PYTHON_KERNELS=1`` to force the fallback (used by the
parity tests and the benchmark).
"""

import os

if os.environ.get("QUADRICFIT_FORCE_PYTHON_KERNELS") == "1":
    from . import fallback as _impl
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import fallback as _impl

BACKEND = _impl.BACKEND
boxes_from_duals = _impl.boxes_from_duals
tangency_values = _impl.tangency_values
voxel_box_overlap = _impl.voxel_box_overlap


def backend() -> str:
    """Name of the active kernel backend: 'compiled' or 'python'."""
    return BACKEND
