import numpy as np
import pytest

from propspace.baseline import builtin_baseline
from propspace.design_space import DesignSpace
from propspace.meshes import TriMesh
from propspace.surface import baseline_surface


@pytest.fixture(scope="session")
def baseline():
    return builtin_baseline()


@pytest.fixture(scope="session")
def space(baseline):
    return DesignSpace.default_for(baseline)


@pytest.fixture(scope="session")
def base_surface(baseline, space):
    return baseline_surface(baseline, space)


def cube_mesh(lo=0.0, hi=1.0, offset=(0.0, 0.0, 0.0)) -> TriMesh:
    """Axis-aligned cube with outward-oriented triangles."""
    off = np.asarray(offset, dtype=float)
    v = np.array(
        [[x, y, z] for x in (lo, hi) for y in (lo, hi) for z in (lo, hi)], dtype=float
    ) + off
    quads = [
        (0, 1, 3, 2),  # x = lo
        (4, 6, 7, 5),  # x = hi
        (0, 4, 5, 1),  # y = lo
        (2, 3, 7, 6),  # y = hi
        (0, 2, 6, 4),  # z = lo
        (1, 5, 7, 3),  # z = hi
    ]
    faces = []
    for a, b, c, d in quads:
        faces += [(a, b, c), (a, c, d)]
    return TriMesh(vertices=v, faces=np.asarray(faces))


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> TriMesh:
    """Unit icosahedron subdivided and projected on the sphere."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
            (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
            (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
        ],
        dtype=float,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = list(verts)
    for _ in range(subdivisions):
        cache = {}
        new_faces = []

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                m = m / np.linalg.norm(m)
                cache[key] = len(verts)
                verts.append(m)
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return TriMesh(vertices=np.asarray(verts) * radius, faces=np.asarray(faces))


def subdivide4(mesh: TriMesh) -> TriMesh:
    """Flat 4-way subdivision (midpoint split) of every triangle."""
    verts = list(mesh.vertices)
    cache = {}
    faces = []

    def midpoint(i, j):
        key = (min(i, j), max(i, j))
        if key not in cache:
            cache[key] = len(verts)
            verts.append(0.5 * (verts[i] + verts[j]))
        return cache[key]

    for a, b, c in mesh.faces:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
    return TriMesh(vertices=np.asarray(verts), faces=np.asarray(faces))
