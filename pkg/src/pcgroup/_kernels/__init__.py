"""Kernel backend selection.

The compiled Cython kernels are used when the extension built; the numpy
fallback is bit-compatible (same float32 arithmetic) but slower.  Set
PCGROUP_FORCE_PYTHON=1 to force the fallback, e.g. for benchmarking.
"""

import os

if os.environ.get("PCGROUP_FORCE_PYTHON"):
    from . import _pykern as kern
else:
    try:
        from . import _ckern as kern  # type: ignore[attr-defined]
    except ImportError:
        from . import _pykern as kern

from . import _pykern as pykern

COMPILED = bool(kern.COMPILED)

assign_leaves = kern.assign_leaves
brute_knn = kern.brute_knn
octree_knn = kern.octree_knn


def get_num_threads():
    """Thread count for batch queries (PCGROUP_THREADS, default 1)."""
    try:
        return max(1, int(os.environ.get("PCGROUP_THREADS", "1")))
    except ValueError:
        return 1
