"""Triangulated closed meshes from blade grids, plus OBJ/STL input/output.

The structured grid is an open surface; for volume integrals it is closed
by welding the sharp trailing-edge seam, fanning the root section onto a
cap and collapsing the tip section onto a fan.  Quads are split along the
shorter diagonal so the triangulation is deterministic.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class TriMesh:
    vertices: np.ndarray  # (V, 3)
    faces: np.ndarray  # (F, 3) int

    def __post_init__(self):
        if self.faces.size and self.faces.max() >= len(self.vertices):
            raise ValueError("face index out of range")

    @property
    def triangle_points(self) -> np.ndarray:
        return self.vertices[self.faces]

    def signed_volume(self) -> float:
        p = self.triangle_points
        return float(np.einsum("ij,ij->i", p[:, 0], np.cross(p[:, 1], p[:, 2])).sum() / 6.0)

    def boundary_edge_count(self) -> int:
        """Number of undirected edges not shared by exactly two opposite
        directed edges; zero for a watertight, consistently wound mesh."""
        f = self.faces
        directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        a = directed.min(axis=1).astype(np.int64)
        b = directed.max(axis=1).astype(np.int64)
        key = a * len(self.vertices) + b
        forward = directed[:, 0] < directed[:, 1]
        order = np.argsort(key, kind="stable")
        key_sorted = key[order]
        fwd_sorted = forward[order]
        bad = 0
        edges, starts = np.unique(key_sorted, return_index=True)
        starts = list(starts) + [len(key_sorted)]
        for i in range(len(edges)):
            lo, hi = starts[i], starts[i + 1]
            if hi - lo != 2 or fwd_sorted[lo:hi].sum() != 1:
                bad += 1
        return bad

    def is_watertight(self) -> bool:
        return self.boundary_edge_count() == 0


def _split_quads(grid: np.ndarray, index: np.ndarray) -> list[tuple[int, int, int]]:
    """Triangulate the structured quads along each quad's shorter diagonal."""
    s, r = grid.shape[:2]
    faces = []
    for i in range(s - 1):
        for j in range(r - 1):
            v00, v10 = index[i, j], index[i + 1, j]
            v01, v11 = index[i, j + 1], index[i + 1, j + 1]
            d_main = np.linalg.norm(grid[i, j] - grid[i + 1, j + 1])
            d_anti = np.linalg.norm(grid[i + 1, j] - grid[i, j + 1])
            if d_main <= d_anti:
                tris = [(v00, v10, v11), (v00, v11, v01)]
            else:
                tris = [(v00, v10, v01), (v10, v11, v01)]
            faces.extend((a, b, c) for a, b, c in tris if len({a, b, c}) == 3)
    return faces


def close_blade_grid(grid: np.ndarray) -> TriMesh:
    """Watertight triangulation of a blade grid.

    Welds the trailing-edge seam (first and last chordwise nodes coincide
    on a sharp-trailing-edge section), caps the root ring with a centroid
    fan and the tip ring likewise.  The result is wound so the enclosed
    volume is positive (outward normals); a flat degenerate grid raises.
    """
    s, r = grid.shape[:2]
    index = np.arange(s * r).reshape(s, r)
    index[s - 1, :] = index[0, :]  # weld TE seam

    used = np.unique(index)
    remap = -np.ones(s * r, dtype=int)
    remap[used] = np.arange(len(used))
    index = remap[index]
    vertices = grid.reshape(-1, 3)[used]

    faces = _split_quads(grid, index)

    # root cap: ring at j=0 (welded, so one closed loop of s-1 nodes)
    root_ring = index[: s - 1, 0]
    root_centroid = grid[: s - 1, 0].mean(axis=0)
    tip_ring = index[: s - 1, r - 1]
    tip_centroid = grid[: s - 1, r - 1].mean(axis=0)
    vertices = np.vstack([vertices, root_centroid, tip_centroid])
    c_root, c_tip = len(vertices) - 2, len(vertices) - 1
    for k in range(s - 1):
        k2 = (k + 1) % (s - 1)
        if root_ring[k] != root_ring[k2]:
            faces.append((root_ring[k2], root_ring[k], c_root))
        if tip_ring[k] != tip_ring[k2]:
            faces.append((tip_ring[k], tip_ring[k2], c_tip))

    mesh = TriMesh(vertices=vertices, faces=np.asarray(faces, dtype=int))
    vol = mesh.signed_volume()
    if vol == 0.0:
        raise ValueError("degenerate grid encloses no volume")
    if vol < 0.0:
        mesh = TriMesh(vertices=vertices, faces=mesh.faces[:, ::-1].copy())
    return mesh


# --- OBJ / STL -------------------------------------------------------


def write_grid_obj(path, grid: np.ndarray) -> None:
    """Open structured surface as OBJ: row-major vertices, quad faces."""
    s, r = grid.shape[:2]
    lines = [f"v {p[0]:.12g} {p[1]:.12g} {p[2]:.12g}" for p in grid.reshape(-1, 3)]
    for i in range(s - 1):
        for j in range(r - 1):
            v00 = i * r + j + 1
            v01 = i * r + j + 2
            v10 = (i + 1) * r + j + 1
            v11 = (i + 1) * r + j + 2
            lines.append(f"f {v00} {v10} {v11} {v01}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_trimesh_obj(path, mesh: TriMesh) -> None:
    lines = [f"v {p[0]:.12g} {p[1]:.12g} {p[2]:.12g}" for p in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    Path(path).write_text("\n".join(lines) + "\n")


def write_trimesh_stl(path, mesh: TriMesh) -> None:
    """Binary STL of the (closed) triangulation."""
    tris = mesh.triangle_points
    normals = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    lengths = np.linalg.norm(normals, axis=1)
    normals = np.where(lengths[:, None] > 0, normals / np.maximum(lengths, 1e-300)[:, None], 0.0)
    with open(path, "wb") as fh:
        fh.write(b"propspace blade mesh".ljust(80, b"\0"))
        fh.write(struct.pack("<I", len(tris)))
        for n, tri in zip(normals, tris):
            fh.write(struct.pack("<3f", *n))
            for p in tri:
                fh.write(struct.pack("<3f", *p))
            fh.write(struct.pack("<H", 0))


def read_obj(path) -> TriMesh:
    """Triangle mesh from OBJ; quad faces are split by the shorter diagonal."""
    vertices, faces = [], []
    for raw in Path(path).read_text().splitlines():
        parts = raw.split()
        if not parts:
            continue
        if parts[0] == "v":
            vertices.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(tok.split("/")[0]) - 1 for tok in parts[1:]]
            if len(idx) == 3:
                faces.append(idx)
            elif len(idx) == 4:
                v = np.asarray(vertices)
                if np.linalg.norm(v[idx[0]] - v[idx[2]]) <= np.linalg.norm(v[idx[1]] - v[idx[3]]):
                    faces += [[idx[0], idx[1], idx[2]], [idx[0], idx[2], idx[3]]]
                else:
                    faces += [[idx[0], idx[1], idx[3]], [idx[1], idx[2], idx[3]]]
            else:
                raise ValueError("only triangle and quad OBJ faces are supported")
    return TriMesh(vertices=np.asarray(vertices, dtype=float), faces=np.asarray(faces, dtype=int))


def read_stl(path) -> TriMesh:
    """Binary or ASCII STL; coincident corners are merged into shared vertices."""
    raw = Path(path).read_bytes()
    if raw[:5] == b"solid" and b"facet" in raw[:1000]:
        tokens = raw.decode("ascii", errors="ignore").split()
        pts = []
        i = 0
        while i < len(tokens):
            if tokens[i] == "vertex":
                pts.append([float(tokens[i + 1]), float(tokens[i + 2]), float(tokens[i + 3])])
                i += 4
            else:
                i += 1
        corners = np.asarray(pts, dtype=float).reshape(-1, 3, 3)
    else:
        (count,) = struct.unpack_from("<I", raw, 80)
        data = np.frombuffer(raw, dtype=np.uint8, count=count * 50, offset=84)
        rec = data.reshape(count, 50)
        floats = rec[:, :48].copy().view("<f4").reshape(count, 4, 3)
        corners = floats[:, 1:4, :].astype(float)
    flat = corners.reshape(-1, 3)
    uniq, inverse = np.unique(flat.round(decimals=12), axis=0, return_inverse=True)
    faces = inverse.reshape(-1, 3)
    return TriMesh(vertices=uniq, faces=faces)


def load_mesh(path) -> TriMesh:
    suffix = Path(path).suffix.lower()
    if suffix == ".obj":
        return read_obj(path)
    if suffix == ".stl":
        return read_stl(path)
    raise ValueError(f"unsupported mesh format {suffix!r}")
