import json

import numpy as np
import pytest

from propspace import moments
from propspace.blade_moments import BladeMomentBatch
from propspace.meshes import TriMesh, close_blade_grid
from propspace.moments import (
    MomentsError,
    NonWatertightMeshError,
    OrientationError,
    brute_force_moments,
    central_moments,
    moment_tuples,
    order_tuples,
    surface_moments,
    to_invariants,
)

from .conftest import cube_mesh, icosphere, subdivide4


def second_order_tensor(mu):
    return np.array(
        [
            [mu[(2, 0, 0)], mu[(1, 1, 0)], mu[(1, 0, 1)]],
            [mu[(1, 1, 0)], mu[(0, 2, 0)], mu[(0, 1, 1)]],
            [mu[(1, 0, 1)], mu[(0, 1, 1)], mu[(0, 0, 2)]],
        ]
    )


def test_unit_cube_analytic():
    mv = surface_moments(cube_mesh(), 3)
    assert mv[(0, 0, 0)] == pytest.approx(1.0, abs=1e-12)
    assert mv[(1, 0, 0)] == pytest.approx(0.5, abs=1e-12)
    mu = central_moments(mv)
    assert mu[(2, 0, 0)] == pytest.approx(1.0 / 12.0, abs=1e-12)


def test_centered_cube_symmetry():
    mv = surface_moments(cube_mesh(-0.5, 0.5), 3)
    assert mv[(2, 0, 0)] == pytest.approx(1.0 / 12.0, abs=1e-12)
    for key in order_tuples(1) + order_tuples(3):
        assert mv[key] == pytest.approx(0.0, abs=1e-12)


def test_icosphere_volume_converges_quadratically():
    errors = []
    for sub in (2, 3, 4):
        vol = surface_moments(icosphere(sub), 0)[(0, 0, 0)]
        errors.append(abs(vol - 4.0 * np.pi / 3.0))
    assert errors[-1] < 0.005 * 4.0 * np.pi / 3.0
    # halving h divides the error by ~4
    for e1, e2 in zip(errors, errors[1:]):
        assert 3.0 < e1 / e2 < 5.5


def test_component_counts():
    assert len(order_tuples(3)) == 10
    assert len(moment_tuples(3)) == 20
    for s in range(6):
        assert len(order_tuples(s)) == (s + 1) * (s + 2) // 2


def test_translation_invariance():
    base = to_invariants(surface_moments(cube_mesh(), 3)).as_array()
    rng = np.random.default_rng(5)
    for _ in range(3):
        shifted = cube_mesh(offset=rng.uniform(-5, 5, 3))
        inv = to_invariants(surface_moments(shifted, 3)).as_array()
        assert np.allclose(inv, base, atol=1e-12)


def test_scale_invariance():
    base = to_invariants(surface_moments(cube_mesh(), 3)).as_array()
    doubled = cube_mesh(lo=0.0, hi=2.0)
    inv = to_invariants(surface_moments(doubled, 3)).as_array()
    assert np.allclose(inv, base, atol=1e-12)


def test_rotation_covariance_second_order():
    rng = np.random.default_rng(17)
    mesh = icosphere(1)
    mesh = TriMesh(vertices=mesh.vertices * np.array([1.0, 0.6, 0.3]), faces=mesh.faces)
    t0 = second_order_tensor(central_moments(surface_moments(mesh, 2)).components)
    for _ in range(4):
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        if np.linalg.det(q) < 0:
            q[:, 0] *= -1
        rotated = TriMesh(vertices=mesh.vertices @ q.T, faces=mesh.faces)
        t1 = second_order_tensor(central_moments(surface_moments(rotated, 2)).components)
        assert np.allclose(q @ t0 @ q.T, t1, atol=1e-10)


def test_refinement_invariance_on_blade(base_surface):
    mesh = close_blade_grid(base_surface.grid)
    fine = subdivide4(mesh)
    coarse = surface_moments(mesh, 3)
    refined = surface_moments(fine, 3)
    for key in moment_tuples(3):
        assert refined[key] == pytest.approx(coarse[key], rel=1e-12, abs=1e-18)


def test_additivity_disjoint_bodies():
    a = cube_mesh()
    b = cube_mesh(offset=(3.0, 0.0, 0.0))
    union = TriMesh(
        vertices=np.vstack([a.vertices, b.vertices]),
        faces=np.vstack([a.faces, b.faces + len(a.vertices)]),
    )
    ma = surface_moments(a, 3)
    mb = surface_moments(b, 3)
    mu = surface_moments(union, 3)
    for key in moment_tuples(3):
        assert mu[key] == pytest.approx(ma[key] + mb[key], rel=1e-12, abs=1e-15)


def test_non_watertight_rejected():
    m = cube_mesh()
    open_mesh = TriMesh(vertices=m.vertices, faces=m.faces[:-1])
    with pytest.raises(NonWatertightMeshError):
        surface_moments(open_mesh, 1)


def test_inward_orientation_diagnosed_not_flipped():
    m = cube_mesh()
    flipped = TriMesh(vertices=m.vertices, faces=m.faces[:, ::-1].copy())
    with pytest.raises(OrientationError):
        surface_moments(flipped, 1)


def test_invariants_need_positive_volume():
    mv = moments.MomentVector(order=1, components={k: 0.0 for k in moment_tuples(1)})
    with pytest.raises(MomentsError):
        to_invariants(mv)


def test_json_keys():
    payload = json.loads(surface_moments(cube_mesh(), 2).to_json())
    assert payload["frame"] == "raw"
    assert payload["moments"]["0.0.0"] == pytest.approx(1.0)
    assert "1.1.0" in payload["moments"]


def test_brute_force_cube_within_three_sigma():
    est = brute_force_moments(cube_mesh(), 100_000, seed=42)
    exact = surface_moments(cube_mesh(), 3)
    for key in moment_tuples(3):
        se = max(est.stderr[key], 1e-12)
        assert abs(est.moments[key] - exact[key]) <= 3.0 * se + 1e-12


def test_brute_force_rejects_tiny_sample():
    with pytest.raises(ValueError):
        brute_force_moments(cube_mesh(), 999, seed=1)


def test_brute_force_deterministic():
    a = brute_force_moments(cube_mesh(), 5000, seed=9)
    b = brute_force_moments(cube_mesh(), 5000, seed=9)
    assert a.moments.components == b.moments.components


def test_blade_invariants_sign_pattern(base_surface):
    inv = moments.third_order_invariants(close_blade_grid(base_surface.grid))
    keys = order_tuples(3)
    mi = dict(zip(keys, inv))
    assert mi[(0, 0, 3)] > 0
    assert mi[(2, 0, 1)] < 0


def test_batch_invariants_match_mesh_path(baseline, space):
    from propspace.sampling import monte_carlo_uniform
    from propspace.surface import build_grids

    samples = monte_carlo_uniform(space.lower, space.upper, 6, seed=2)
    grids = build_grids(baseline, space, samples.matrix)
    batch = BladeMomentBatch((51, 26))
    fast = batch.third_order_invariants(grids)
    for k in range(len(grids)):
        slow = moments.third_order_invariants(close_blade_grid(grids[k]))
        assert np.allclose(fast[k], slow, rtol=1e-10, atol=1e-13)


def test_quadrature_exactness_high_order():
    """The generic Duffy rule integrates arbitrary monomials exactly."""
    from math import factorial

    from propspace.moments import _triangle_quadrature

    for degree in (6, 8):
        pts, wts = _triangle_quadrature(degree)
        for a in range(degree + 1):
            for b in range(degree + 1 - a):
                got = float((wts * pts[:, 1] ** a * pts[:, 2] ** b).sum())
                exact = factorial(a) * factorial(b) / factorial(a + b + 2)
                assert got == pytest.approx(exact, abs=1e-14)
