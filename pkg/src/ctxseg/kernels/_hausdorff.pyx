# Compiled inner loop for the symmetric Hausdorff distance over boundary
# point sets. O(|A|*|B|) time, O(1) extra memory, with the standard
# early-break: once a candidate pair falls below the running maximum the
# current source point cannot raise it.
import numpy as np

cimport numpy as cnp

cnp.import_array()


def directed_hausdorff_sq(cnp.int64_t[:, :] pts_a, cnp.int64_t[:, :] pts_b):
    """Max over a in A of min over b in B of squared euclidean distance.

    Both arrays are (n, 2) int64 pixel coordinates and must be non-empty.
    Returns a python float (squared distance).
    """
    cdef Py_ssize_t na = pts_a.shape[0]
    cdef Py_ssize_t nb = pts_b.shape[0]
    cdef Py_ssize_t i, j
    cdef cnp.int64_t dr, dc, d, cmin
    cdef cnp.int64_t cmax = 0
    cdef bint broke

    if na == 0 or nb == 0:
        raise ValueError("directed_hausdorff_sq requires non-empty point sets")

    for i in range(na):
        cmin = 0x7FFFFFFFFFFFFFFF
        broke = False
        for j in range(nb):
            dr = pts_a[i, 0] - pts_b[j, 0]
            dc = pts_a[i, 1] - pts_b[j, 1]
            d = dr * dr + dc * dc
            if d < cmax:
                broke = True
                break
            if d < cmin:
                cmin = d
        if not broke and cmin > cmax:
            cmax = cmin
    return float(cmax)


def min_distances_sq(cnp.int64_t[:, :] pts_a, cnp.int64_t[:, :] pts_b):
    """Per-point min over B of squared distance, for every point of A.

    Used by the percentile Hausdorff variant, which needs the full
    distribution of point-to-set distances rather than only the max.
    """
    cdef Py_ssize_t na = pts_a.shape[0]
    cdef Py_ssize_t nb = pts_b.shape[0]
    cdef Py_ssize_t i, j
    cdef cnp.int64_t dr, dc, d, cmin

    if na == 0 or nb == 0:
        raise ValueError("min_distances_sq requires non-empty point sets")

    out = np.empty(na, dtype=np.int64)
    cdef cnp.int64_t[:] out_v = out
    for i in range(na):
        cmin = 0x7FFFFFFFFFFFFFFF
        for j in range(nb):
            dr = pts_a[i, 0] - pts_b[j, 0]
            dc = pts_a[i, 1] - pts_b[j, 1]
            d = dr * dr + dc * dc
            if d < cmin:
                cmin = d
        out_v[i] = cmin
    return out
