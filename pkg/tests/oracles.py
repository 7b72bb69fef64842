"""Independent oracles used by the test suite.

These deliberately avoid the library's arithmetic: spatial scores are
checked by counting voxel-grid cell centers inside each box, retrieval
rankings by a plain sorted scan, and clustering by scipy's single-linkage
agglomeration.
"""

import math

import numpy as np


def _axis_count(lo: float, hi: float, x0: float, cell: float, n: int) -> int:
    """Number of cell centers x0 + (i + 0.5)*cell, i in [0, n), inside [lo, hi]."""
    if hi < lo:
        return 0
    i_min = math.ceil((lo - x0) / cell - 0.5)
    i_max = math.floor((hi - x0) / cell - 0.5)
    i_min = max(i_min, 0)
    i_max = min(i_max, n - 1)
    return max(0, i_max - i_min + 1)


def voxel_counts(box_a, box_b, n: int):
    """Cell-center counts (in A, in B, in both) on an n^3 grid spanning the
    joint bounding box.  Axis-aligned boxes factorize the 3-D count into a
    product of per-axis counts, so arbitrary resolutions cost nothing."""
    lo = np.minimum(box_a.min, box_b.min)
    hi = np.maximum(box_a.max, box_b.max)
    span = np.maximum(hi - lo, 1e-12)
    n_a = n_b = n_ab = 1
    for k in range(3):
        cell = span[k] / n
        ca = _axis_count(box_a.min[k], box_a.max[k], lo[k], cell, n)
        cb = _axis_count(box_b.min[k], box_b.max[k], lo[k], cell, n)
        cab = _axis_count(max(box_a.min[k], box_b.min[k]),
                          min(box_a.max[k], box_b.max[k]), lo[k], cell, n)
        n_a *= ca
        n_b *= cb
        n_ab *= cab
    return n_a, n_b, n_ab


def voxel_counts_literal(box_a, box_b, n: int):
    """Same counts via an explicit 3-D meshgrid of cell centers; cross-checks
    the factorized counter.  Keep n small."""
    lo = np.minimum(box_a.min, box_b.min)
    hi = np.maximum(box_a.max, box_b.max)
    span = np.maximum(hi - lo, 1e-12)
    axes = [lo[k] + (np.arange(n) + 0.5) * (span[k] / n) for k in range(3)]
    xx, yy, zz = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([xx, yy, zz], axis=-1)
    in_a = np.all((pts >= box_a.min) & (pts <= box_a.max), axis=-1)
    in_b = np.all((pts >= box_b.min) & (pts <= box_b.max), axis=-1)
    return int(in_a.sum()), int(in_b.sum()), int((in_a & in_b).sum())


def voxel_iou(box_a, box_b, n: int = 16384) -> float:
    n_a, n_b, n_ab = voxel_counts(box_a, box_b, n)
    union = n_a + n_b - n_ab
    return n_ab / union if union > 0 else 0.0


def voxel_maxios(box_a, box_b, n: int = 16384) -> float:
    n_a, n_b, n_ab = voxel_counts(box_a, box_b, n)
    r_a = n_ab / n_a if n_a > 0 else 0.0
    r_b = n_ab / n_b if n_b > 0 else 0.0
    return max(r_a, r_b)


def voxel_iou_at_resolution(box_a, box_b, resolution: float) -> float:
    """Literal meshgrid counting at a fixed metric resolution."""
    lo = np.minimum(box_a.min, box_b.min)
    hi = np.maximum(box_a.max, box_b.max)
    n = int(math.ceil(float((hi - lo).max()) / resolution))
    n_a, n_b, n_ab = voxel_counts_literal(box_a, box_b, n)
    union = n_a + n_b - n_ab
    return n_ab / union if union > 0 else 0.0


def brute_force_ranking(vectors: dict, query: np.ndarray, k: int):
    """Exhaustive scan: sort ids by (-dot, id), take k."""
    scored = sorted(((float(np.dot(query, v)), i) for i, v in vectors.items()),
                    key=lambda p: (-p[0], p[1]))
    return [(i, s) for s, i in scored[:k]]


def scipy_single_linkage(points: np.ndarray, cutoff: float):
    """Cluster labels from scipy single-linkage cut at the cutoff distance."""
    from scipy.cluster.hierarchy import fcluster, linkage
    if len(points) == 1:
        return np.array([1])
    z = linkage(points, method="single")
    return fcluster(z, t=cutoff, criterion="distance")
