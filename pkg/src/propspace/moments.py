"""Geometric moments of closed triangulated meshes.

Volume-integral monomial moments M_{p,q,r} = int x^p y^q z^r dV are
converted to surface integrals over the boundary and integrated in closed
form per flat facet (Gauss quadrature exact for the polynomial degree at
hand).  Each moment is computed three times -- routing the antiderivative
through the x, y and z normal components -- and averaged, which keeps the
result symmetric under axis relabeling.

The Monte-Carlo estimator provides an independent cross-check: rejection
sampling in the bounding box with a parity (ray-crossing) inside test.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np

from .meshes import TriMesh


class MomentsError(ValueError):
    pass


class NonWatertightMeshError(MomentsError):
    pass


class OrientationError(MomentsError):
    pass


def moment_tuples(max_order: int) -> list[tuple[int, int, int]]:
    """All (p, q, r) with p+q+r <= max_order, lexicographically ordered."""
    return [
        (p, q, r)
        for p in range(max_order + 1)
        for q in range(max_order + 1 - p)
        for r in range(max_order + 1 - p - q)
    ]


def order_tuples(s: int) -> list[tuple[int, int, int]]:
    """The (s+1)(s+2)/2 exponent triples of exactly order s, lexicographic."""
    return [(p, q, r) for (p, q, r) in moment_tuples(s) if p + q + r == s]


@dataclass(frozen=True)
class MomentVector:
    """Moments keyed by exponent triple; frame is raw, central or invariant."""

    order: int
    components: dict[tuple[int, int, int], float]
    frame: str = "raw"

    def __getitem__(self, key: tuple[int, int, int]) -> float:
        return self.components[key]

    @property
    def volume(self) -> float:
        return self.components[(0, 0, 0)]

    @property
    def centroid(self) -> np.ndarray:
        v = self.volume
        return np.array(
            [self.components[(1, 0, 0)], self.components[(0, 1, 0)], self.components[(0, 0, 1)]]
        ) / v

    def as_array(self, s: int | None = None) -> np.ndarray:
        """Components of exactly order s (all orders if None), lexicographic."""
        keys = order_tuples(s) if s is not None else moment_tuples(self.order)
        return np.array([self.components[k] for k in keys])

    def to_json(self) -> str:
        payload = {f"{p}.{q}.{r}": v for (p, q, r), v in sorted(self.components.items())}
        return json.dumps({"frame": self.frame, "order": self.order, "moments": payload}, indent=2)


@lru_cache(maxsize=16)
def _triangle_quadrature(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Barycentric points/weights exact for polynomials up to ``degree`` on
    the unit triangle; weights sum to the unit-triangle area 1/2.

    Low degrees use compact symmetric (Dunavant) rules; higher degrees fall
    back to a Duffy map of a Gauss-Legendre product rule."""
    if degree <= 5:
        if degree <= 1:
            pts = np.array([[1 / 3, 1 / 3, 1 / 3]])
            wts = np.array([0.5])
        elif degree == 2:
            pts = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
            wts = np.full(3, 1 / 6)
        elif degree == 3:
            pts = np.array(
                [[1 / 3, 1 / 3, 1 / 3], [0.6, 0.2, 0.2], [0.2, 0.6, 0.2], [0.2, 0.2, 0.6]]
            )
            wts = np.array([-27 / 96, 25 / 96, 25 / 96, 25 / 96])
        else:  # degree 4 and 5: Dunavant 7-point rule (exact to degree 5)
            a = 0.059715871789770
            b = 0.470142064105115
            c = 0.797426985353087
            d = 0.101286507323456
            pts = np.array(
                [
                    [1 / 3, 1 / 3, 1 / 3],
                    [a, b, b], [b, a, b], [b, b, a],
                    [c, d, d], [d, c, d], [d, d, c],
                ]
            )
            wts = 0.5 * np.array(
                [0.225,
                 0.132394152788506, 0.132394152788506, 0.132394152788506,
                 0.125939180544827, 0.125939180544827, 0.125939180544827]
            )
        return pts, wts
    n = max(degree + 1, 1)
    x, w = np.polynomial.legendre.leggauss(n)
    u = 0.5 * (x + 1.0)
    wu = 0.5 * w
    uu, vv = np.meshgrid(u, u, indexing="ij")
    a = uu.ravel()
    b = (vv * (1.0 - uu)).ravel()
    weights = (np.outer(wu, wu) * (1.0 - uu)).ravel()
    return np.stack([1.0 - a - b, a, b], axis=1), weights


def surface_moments(mesh: TriMesh, max_order: int) -> MomentVector:
    """Exact polynomial volume moments of a watertight, outward-oriented mesh."""
    if max_order < 0:
        raise ValueError("max_order must be non-negative")
    if not mesh.is_watertight():
        raise NonWatertightMeshError("mesh has boundary or inconsistently shared edges")
    tris = mesh.triangle_points
    normals = 0.5 * np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])  # area-scaled

    bary, weights = _triangle_quadrature(max_order + 1)
    points = np.einsum("kb,fbc->fkc", bary, tris)  # (F, K, 3)

    max_pow = max_order + 2
    pows = np.empty((3, max_pow, *points.shape[:2]))
    pows[:, 0] = 1.0
    for axis in range(3):
        for a in range(1, max_pow):
            pows[axis, a] = pows[axis, a - 1] * points[..., axis]

    components: dict[tuple[int, int, int], float] = {}
    for p, q, r in moment_tuples(max_order):
        acc = 0.0
        for axis, (dp, dq, dr) in enumerate(((1, 0, 0), (0, 1, 0), (0, 0, 1))):
            exp = (p + dp, q + dq, r + dr)
            integrand = pows[0, exp[0]] * pows[1, exp[1]] * pows[2, exp[2]]
            per_tri = 2.0 * (integrand @ weights)  # int over the facet / facet area
            acc += float(np.dot(per_tri, normals[:, axis])) / exp[axis]
        components[(p, q, r)] = acc / 3.0

    if components[(0, 0, 0)] <= 0.0:
        raise OrientationError(
            f"signed volume {components[(0, 0, 0)]:g} <= 0: normals are not outward"
        )
    return MomentVector(order=max_order, components=components, frame="raw")


def central_moments(raw: MomentVector) -> MomentVector:
    """Translate raw moments to the centroid frame (binomial shift)."""
    if raw.frame != "raw":
        raise ValueError("expected raw moments")
    c = raw.centroid
    components = {}
    for p, q, r in moment_tuples(raw.order):
        acc = 0.0
        for i in range(p + 1):
            for j in range(q + 1):
                for k in range(r + 1):
                    acc += (
                        comb(p, i) * comb(q, j) * comb(r, k)
                        * (-c[0]) ** (p - i) * (-c[1]) ** (q - j) * (-c[2]) ** (r - k)
                        * raw.components[(i, j, k)]
                    )
        components[(p, q, r)] = acc
    return MomentVector(order=raw.order, components=components, frame="central")


def to_invariants(raw: MomentVector) -> MomentVector:
    """Translation- and scale-invariant moments:
    MI_{p,q,r} = mu_{p,q,r} / V^(1 + (p+q+r)/3)."""
    if raw.volume <= 0.0:
        raise MomentsError("invariants require positive volume")
    mu = central_moments(raw)
    v = raw.volume
    components = {
        (p, q, r): mu.components[(p, q, r)] / v ** (1.0 + (p + q + r) / 3.0)
        for (p, q, r) in moment_tuples(raw.order)
    }
    return MomentVector(order=raw.order, components=components, frame="invariant")


def third_order_invariants(mesh: TriMesh) -> np.ndarray:
    """The 10 third-order moment invariants, lexicographic in (p, q, r)."""
    return to_invariants(surface_moments(mesh, 3)).as_array(3)


# --- Monte-Carlo oracle ----------------------------------------------


@dataclass(frozen=True)
class MonteCarloMoments:
    moments: MomentVector
    stderr: dict[tuple[int, int, int], float]
    samples: int
    hit_fraction: float


class _ParityTester:
    """Point-in-solid tests by +z ray parity, accelerated with a uniform
    2D binning of the triangles' xy footprints."""

    def __init__(self, mesh: TriMesh, cells: int = 48):
        tris = mesh.triangle_points
        self.v0 = tris[:, 0, :2]
        e1 = tris[:, 1, :2] - self.v0
        e2 = tris[:, 2, :2] - self.v0
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        keep = np.abs(det) > 1e-300  # z-parallel facets never cross a +z ray
        self.tri_index = np.flatnonzero(keep)
        self.inv_det = 1.0 / det[keep]
        self.e1, self.e2, self.v0 = e1[keep], e2[keep], self.v0[keep]
        self.z0 = tris[keep, 0, 2]
        self.z1 = tris[keep, 1, 2] - self.z0
        self.z2 = tris[keep, 2, 2] - self.z0

        lo = tris[:, :, :2].min(axis=1)[keep]
        hi = tris[:, :, :2].max(axis=1)[keep]
        self.box_lo = lo.min(axis=0)
        span = hi.max(axis=0) - self.box_lo
        self.scale = cells / np.maximum(span, 1e-300)
        self.cells = cells
        grid: list[list[int]] = [[] for _ in range(cells * cells)]
        ilo = np.clip((lo - self.box_lo) * self.scale, 0, cells - 1).astype(int)
        ihi = np.clip((hi - self.box_lo) * self.scale, 0, cells - 1).astype(int)
        for t in range(len(self.v0)):
            for cx in range(ilo[t, 0], ihi[t, 0] + 1):
                for cy in range(ilo[t, 1], ihi[t, 1] + 1):
                    grid[cx * cells + cy].append(t)
        self.grid = [np.asarray(g, dtype=int) for g in grid]

    def contains(self, points: np.ndarray) -> np.ndarray:
        cell = np.clip((points[:, :2] - self.box_lo) * self.scale, 0, self.cells - 1).astype(int)
        cell_id = cell[:, 0] * self.cells + cell[:, 1]
        inside = np.zeros(len(points), dtype=bool)
        order = np.argsort(cell_id, kind="stable")
        sorted_ids = cell_id[order]
        boundaries = np.flatnonzero(np.diff(sorted_ids)) + 1
        for chunk in np.split(order, boundaries):
            tri_ids = self.grid[cell_id[chunk[0]]]
            if len(tri_ids) == 0:
                continue
            pts = points[chunk]
            rel = pts[:, None, :2] - self.v0[tri_ids][None]
            e1, e2 = self.e1[tri_ids], self.e2[tri_ids]
            inv = self.inv_det[tri_ids]
            u = (rel[..., 0] * e2[:, 1] - rel[..., 1] * e2[:, 0]) * inv
            v = (e1[:, 0] * rel[..., 1] - e1[:, 1] * rel[..., 0]) * inv
            hit = (u >= 0) & (v >= 0) & (u + v <= 1)
            z_hit = self.z0[tri_ids] + u * self.z1[tri_ids] + v * self.z2[tri_ids]
            above = hit & (z_hit > pts[:, 2][:, None])
            inside[chunk] = (above.sum(axis=1) % 2).astype(bool)
        return inside


def brute_force_moments(
    mesh: TriMesh, samples: int, seed: int, max_order: int = 3
) -> MonteCarloMoments:
    """Monte-Carlo moment estimate with per-component standard errors."""
    if samples < 1000:
        raise ValueError("need at least 1000 samples for a meaningful estimate")
    if not mesh.is_watertight():
        raise NonWatertightMeshError("mesh has boundary or inconsistently shared edges")

    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    box_volume = float(np.prod(hi - lo))
    tester = _ParityTester(mesh)
    rng = np.random.Generator(np.random.Philox(key=seed))

    sums: dict[tuple[int, int, int], float] = {k: 0.0 for k in moment_tuples(max_order)}
    sq_sums = {k: 0.0 for k in moment_tuples(max_order)}
    hits = 0
    chunk = 200_000
    done = 0
    while done < samples:
        n = min(chunk, samples - done)
        pts = lo + (hi - lo) * rng.random((n, 3))
        inside = tester.contains(pts)
        hits += int(inside.sum())
        sel = pts[inside]
        for p, q, r in sums:
            vals = sel[:, 0] ** p * sel[:, 1] ** q * sel[:, 2] ** r
            sums[(p, q, r)] += float(vals.sum())
            sq_sums[(p, q, r)] += float((vals * vals).sum())
        done += n

    components = {}
    stderr = {}
    for key in sums:
        mean = sums[key] / samples
        var = max(sq_sums[key] / samples - mean * mean, 0.0)
        components[key] = box_volume * mean
        stderr[key] = box_volume * np.sqrt(var / samples)
    mv = MomentVector(order=max_order, components=components, frame="raw")
    return MonteCarloMoments(moments=mv, stderr=stderr, samples=samples, hit_fraction=hits / samples)
