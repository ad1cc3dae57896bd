"""Exact triangle-triangle self-intersection detection with an AABB tree.

Used as the audit path behind the fast grid proxies: a median-split
bounding-volume hierarchy prunes candidate pairs, a Moller-style
interval test decides actual intersection.  Pairs sharing a vertex are
topological neighbors, not intersections.
"""

from __future__ import annotations

import numpy as np

from .meshes import TriMesh

_LEAF_SIZE = 8
_EPS = 1e-12


class _AABBTree:
    def __init__(self, tris: np.ndarray):
        self.tris = tris
        lo = tris.min(axis=1)
        hi = tris.max(axis=1)
        self.centers = 0.5 * (lo + hi)
        self.lo, self.hi = lo, hi
        self.nodes: list[tuple[np.ndarray, np.ndarray, int, int, np.ndarray | None]] = []
        self._build(np.arange(len(tris)))

    def _build(self, idx: np.ndarray) -> int:
        lo = self.lo[idx].min(axis=0)
        hi = self.hi[idx].max(axis=0)
        node_id = len(self.nodes)
        if len(idx) <= _LEAF_SIZE:
            self.nodes.append((lo, hi, -1, -1, idx))
            return node_id
        self.nodes.append((lo, hi, -1, -1, None))
        axis = int(np.argmax(hi - lo))
        order = np.argsort(self.centers[idx, axis], kind="stable")
        half = len(idx) // 2
        left = self._build(idx[order[:half]])
        right = self._build(idx[order[half:]])
        self.nodes[node_id] = (lo, hi, left, right, None)
        return node_id

    def candidate_pairs(self):
        """Yield index-array pairs (i_list, j_list) of potentially
        overlapping triangles, i < j."""
        stack = [(0, 0)]
        while stack:
            a, b = stack.pop()
            lo_a, hi_a, l_a, r_a, leaf_a = self.nodes[a]
            lo_b, hi_b, l_b, r_b, leaf_b = self.nodes[b]
            if np.any(lo_a > hi_b) or np.any(lo_b > hi_a):
                continue
            if leaf_a is not None and leaf_b is not None:
                if a == b:
                    ii, jj = np.triu_indices(len(leaf_a), k=1)
                    yield leaf_a[ii], leaf_a[jj]
                else:
                    ii, jj = np.meshgrid(leaf_a, leaf_b, indexing="ij")
                    yield ii.ravel(), jj.ravel()
                continue
            if a == b:
                stack += [(l_a, l_a), (r_a, r_a), (l_a, r_a)]
            elif leaf_a is not None:
                stack += [(a, l_b), (a, r_b)]
            elif leaf_b is not None:
                stack += [(l_a, b), (r_a, b)]
            else:
                stack += [(l_a, l_b), (l_a, r_b), (r_a, l_b), (r_a, r_b)]


def _tri_pair_intersects(t1: np.ndarray, t2: np.ndarray) -> bool:
    """Moller interval test for one triangle pair.

    All comparisons use unit plane normals and a tolerance scaled by the
    triangles' size, so the verdict is independent of absolute scale.
    """

    def plane(tri):
        n = np.cross(tri[1] - tri[0], tri[2] - tri[0])
        mag = np.linalg.norm(n)
        if mag <= 0.0:
            return None, 0.0
        n = n / mag
        return n, -np.dot(n, tri[0])

    scale = max(
        np.linalg.norm(t1.max(axis=0) - t1.min(axis=0)),
        np.linalg.norm(t2.max(axis=0) - t2.min(axis=0)),
    )
    eps = _EPS * max(scale, 1e-30)

    n1, d1 = plane(t1)
    n2, d2 = plane(t2)
    if n1 is None or n2 is None:
        return False  # degenerate triangle has no interior to cross
    dist2 = t2 @ n1 + d1
    if np.all(dist2 > eps) or np.all(dist2 < -eps):
        return False
    dist1 = t1 @ n2 + d2
    if np.all(dist1 > eps) or np.all(dist1 < -eps):
        return False

    direction = np.cross(n1, n2)
    d_mag = np.linalg.norm(direction)
    if d_mag < 1e-8:  # planes parallel within noise: coplanar handling
        return _coplanar_overlap(t1, t2, n1)
    direction = direction / d_mag

    def interval(tri, dist):
        """Projection interval of the triangle's plane-crossing segment."""
        proj = tri @ direction
        pts = []
        for i in range(3):
            if abs(dist[i]) <= eps:
                pts.append(proj[i])
        for i in range(3):
            j = (i + 1) % 3
            if (dist[i] > eps and dist[j] < -eps) or (dist[i] < -eps and dist[j] > eps):
                frac = dist[i] / (dist[i] - dist[j])
                pts.append(proj[i] + frac * (proj[j] - proj[i]))
        if not pts:
            return None
        return min(pts), max(pts)

    i1 = interval(t1, dist1)
    i2 = interval(t2, dist2)
    if i1 is None or i2 is None:
        return False
    return i1[0] <= i2[1] + eps and i2[0] <= i1[1] + eps


def _coplanar_overlap(t1: np.ndarray, t2: np.ndarray, normal: np.ndarray) -> bool:
    axis = int(np.argmax(np.abs(normal)))
    keep = [k for k in range(3) if k != axis]
    a = t1[:, keep]
    b = t2[:, keep]

    def edges(poly):
        return [(poly[i], poly[(i + 1) % 3]) for i in range(3)]

    def seg_cross(p, q, r, s):
        d1 = np.cross(q - p, r - p)
        d2 = np.cross(q - p, s - p)
        d3 = np.cross(s - r, p - r)
        d4 = np.cross(s - r, q - r)
        return (d1 * d2 < 0) and (d3 * d4 < 0)

    for p, q in edges(a):
        for r, s in edges(b):
            if seg_cross(p, q, r, s):
                return True

    def inside(pt, poly):
        signs = [np.cross(poly[(i + 1) % 3] - poly[i], pt - poly[i]) for i in range(3)]
        return all(s > 0 for s in signs) or all(s < 0 for s in signs)

    return inside(a[0], b) or inside(b[0], a)


def self_intersections(mesh: TriMesh, max_reports: int = 64) -> list[tuple[int, int]]:
    """Pairs of non-adjacent intersecting triangles (exact audit mode)."""
    tris = mesh.triangle_points
    faces = mesh.faces
    tree = _AABBTree(tris)
    hits: list[tuple[int, int]] = []
    for ii, jj in tree.candidate_pairs():
        for i, j in zip(ii, jj):
            if len(set(faces[i]) & set(faces[j])):
                continue
            if _tri_pair_intersects(tris[i], tris[j]):
                hits.append((int(i), int(j)) if i < j else (int(j), int(i)))
                if len(hits) >= max_reports:
                    return sorted(set(hits))
    return sorted(set(hits))
