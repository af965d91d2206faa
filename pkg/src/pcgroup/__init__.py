"""Point-cloud instance grouping toolkit.

Geometric inference pipeline for 3D instance grouping: octree radius k-NN
with breadth-first arithmetic indexing, soft score-threshold grouping,
class-aware pyramid scaling with inverse mapping, late devoxelization,
brute-force oracles, synthetic scenes, metrics, and a benchmark harness.
"""

from ._kernels import COMPILED as KERNELS_COMPILED

__version__ = "0.1.0"

__all__ = ["KERNELS_COMPILED", "__version__"]
