"""Pure-numpy fallback for the Hausdorff kernels.

Same contract as the compiled module. Distances are computed in chunks so
memory stays bounded for large boundary sets.
"""
import numpy as np

_CHUNK = 512


def _pairwise_sq(chunk, pts_b):
    diff = chunk[:, None, :] - pts_b[None, :, :]
    return (diff * diff).sum(axis=2)


def directed_hausdorff_sq(pts_a, pts_b):
    if len(pts_a) == 0 or len(pts_b) == 0:
        raise ValueError("directed_hausdorff_sq requires non-empty point sets")
    pts_a = np.asarray(pts_a, dtype=np.int64)
    pts_b = np.asarray(pts_b, dtype=np.int64)
    cmax = 0
    for start in range(0, len(pts_a), _CHUNK):
        chunk = pts_a[start:start + _CHUNK]
        mins = _pairwise_sq(chunk, pts_b).min(axis=1)
        cmax = max(cmax, int(mins.max()))
    return float(cmax)


def min_distances_sq(pts_a, pts_b):
    if len(pts_a) == 0 or len(pts_b) == 0:
        raise ValueError("min_distances_sq requires non-empty point sets")
    pts_a = np.asarray(pts_a, dtype=np.int64)
    pts_b = np.asarray(pts_b, dtype=np.int64)
    out = np.empty(len(pts_a), dtype=np.int64)
    for start in range(0, len(pts_a), _CHUNK):
        chunk = pts_a[start:start + _CHUNK]
        out[start:start + _CHUNK] = _pairwise_sq(chunk, pts_b).min(axis=1)
    return out
