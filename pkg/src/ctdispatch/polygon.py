"""Convex polygons in the plane given as intersections of half-planes.

A half-plane row ``(a, b, c)`` means ``a*u + b*v <= c``.
"""
import numpy as np

UNIT_BOX = np.array([[-1.0, 0.0, 0.0], [1.0, 0.0, 1.0], [0.0, -1.0, 0.0], [0.0, 1.0, 1.0]])
UNIT_SQUARE = [np.array([0.0, 0.0]), np.array([1.0, 0.0]), np.array([1.0, 1.0]), np.array([0.0, 1.0])]


def normalize_rows(H, zero_tol=1e-14):
    """Scale rows to unit normals; returns (rows, mask of kept rows).

    Rows with vanishing normal are dropped from the result.
    """
    H = np.asarray(H, dtype=float).reshape(-1, 3)
    norms = np.hypot(H[:, 0], H[:, 1])
    keep = norms > zero_tol
    return H[keep] / norms[keep, None], keep


def clip(vertices, row, tol=0.0):
    """Sutherland-Hodgman clip of a convex polygon by one half-plane."""
    a, b, c = row
    out = []
    nv = len(vertices)
    for i in range(nv):
        p, q = vertices[i], vertices[(i + 1) % nv]
        fp = a * p[0] + b * p[1] - c
        fq = a * q[0] + b * q[1] - c
        if fp <= tol:
            out.append(p)
        if (fp < -tol and fq > tol) or (fp > tol and fq < -tol):
            s = fp / (fp - fq)
            out.append(p + s * (q - p))
    return _dedupe(out)


def _dedupe(points, tol=1e-13):
    out = []
    for p in points:
        if not out or np.abs(p - out[-1]).max() > tol:
            out.append(np.asarray(p, dtype=float))
    if len(out) > 1 and np.abs(out[0] - out[-1]).max() <= tol:
        out.pop()
    return out


def polygon(H):
    """Vertices (counter-clockwise) of ``H`` intersected with the unit square."""
    verts = list(UNIT_SQUARE)
    for row in np.asarray(H, dtype=float).reshape(-1, 3):
        verts = clip(verts, row)
        if len(verts) < 3:
            return verts
    return verts


def area(vertices):
    if len(vertices) < 3:
        return 0.0
    v = np.asarray(vertices)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def diameter(vertices):
    v = np.asarray(vertices)
    if len(v) < 2:
        return 0.0
    diff = v[:, None, :] - v[None, :, :]
    return float(np.sqrt((diff ** 2).sum(-1)).max())


def supporting_rows(H, vertices, tol=1e-10, min_length=1e-12):
    """Indices of rows of ``H`` that carry an edge of the polygon."""
    H = np.asarray(H, dtype=float).reshape(-1, 3)
    v = np.asarray(vertices)
    if len(v) < 3 or H.shape[0] == 0:
        return []
    resid = H[:, :2] @ v.T - H[:, 2:3]
    on = np.abs(resid) <= tol
    keep = []
    nv = len(v)
    for j in range(H.shape[0]):
        for i in range(nv):
            k = (i + 1) % nv
            if on[j, i] and on[j, k] and np.linalg.norm(v[k] - v[i]) > min_length:
                keep.append(j)
                break
    return keep


def merge_duplicates(H, tol=1e-9):
    """Collapse rows whose normalised coefficients agree within ``tol``.

    Keeps the tightest offset among near-parallel duplicates.
    """
    H = np.asarray(H, dtype=float).reshape(-1, 3)
    order = np.lexsort((H[:, 2], np.round(H[:, 1] / tol), np.round(H[:, 0] / tol)))
    kept = []
    for i in order:
        if kept:
            j = kept[-1]
            if np.abs(H[i, :2] - H[j, :2]).max() <= tol:
                if H[i, 2] < H[j, 2]:
                    kept[-1] = i
                continue
        kept.append(i)
    return sorted(kept)


def segment_coverage(H, p0, p1, tol=1e-10):
    """Parameter interval [s_lo, s_hi] of ``p0 + s (p1 - p0)`` inside ``H``.

    Returns None when the segment misses the polygon.
    """
    H = np.asarray(H, dtype=float).reshape(-1, 3)
    lo, hi = 0.0, 1.0
    d = p1 - p0
    for a, b, c in H:
        slope = a * d[0] + b * d[1]
        offset = c + tol - (a * p0[0] + b * p0[1])
        if abs(slope) < 1e-15:
            if offset < 0:
                return None
            continue
        s = offset / slope
        if slope > 0:
            hi = min(hi, s)
        else:
            lo = max(lo, s)
    if lo > hi:
        return None
    return lo, hi
