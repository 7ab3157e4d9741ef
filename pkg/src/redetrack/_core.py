"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback. Set ``REDETRACK_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _fallback

BACKEND = "python"
_impl = _fallback
if os.environ.get("REDETRACK_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback

keyed_normal = _impl.keyed_normal
keyed_uniform = _impl.keyed_uniform
keyed_normals = _impl.keyed_normals
nms = _impl.nms
topk_anchors = _impl.topk_anchors
topk_anchors_batch = _impl.topk_anchors_batch
paint_responses = _impl.paint_responses
hungarian_square = _impl.hungarian_square
block_match = _impl.block_match
fill_dense = _impl.fill_dense
