import math

import numpy as np
import pytest

from propspace import subspace as sub
from propspace.blade_moments import BladeMomentBatch
from propspace.sampling import monte_carlo_uniform
from propspace.subspace import (
    ModalSubspace,
    SnapshotSet,
    assemble_snapshots,
    decode,
    eigen_residual,
    eigensolve,
    encode,
    geometry_block,
    grids_from_block,
    latent_bounds,
    load_subspace,
    save_subspace,
    truncate,
)
from propspace.surface import build_grids, mesh_node_weights


@pytest.fixture(scope="module")
def small_training(baseline, space):
    """A compact real-geometry training set on a 9 x 6 grid."""
    samples = monte_carlo_uniform(space.lower, space.upper, 80, seed=31)
    grids = build_grids(baseline, space, samples.matrix, n_chordwise=9, n_radial=6)
    weights = mesh_node_weights(grids[0] * 0 + build_grids(baseline, space, np.zeros(space.n), 9, 6))
    snap = assemble_snapshots(samples.matrix, lambda m: grids, weights, None, mode="kle")
    return samples, grids, weights, snap


def toy_snapshots():
    """Hand covariance C = [[1,0],[0,0]] with Q = diag(0.5, 0.5)."""
    d = np.array([[1.0, 0.0], [-1.0, 0.0]])
    return SnapshotSet(
        snapshots=d,
        mean=np.zeros(2),
        q_diag=np.array([0.5, 0.5]),
        grid_shape=(1, 1),
        n_moments=0,
        moment_std=None,
        beta=None,
    )


def test_identical_samples_give_zero_snapshots(baseline, space):
    t = np.tile(np.linspace(-0.001, 0.001, space.n), (5, 1))
    grids = build_grids(baseline, space, t, 9, 6)
    w = mesh_node_weights(grids[0])
    snap = assemble_snapshots(t, lambda m: grids, w, None, mode="kle")
    scale = np.abs(grids).max()
    assert np.allclose(snap.snapshots, 0.0, atol=1e-15 * scale)


def test_two_samples_symmetric_deviations(baseline, space):
    rng = np.random.default_rng(1)
    t = rng.uniform(space.lower, space.upper, size=(2, space.n))
    grids = build_grids(baseline, space, t, 9, 6)
    w = mesh_node_weights(grids[0])
    snap = assemble_snapshots(t, lambda m: grids, w, None, mode="kle")
    a, b = geometry_block(grids)
    assert np.allclose(snap.snapshots[0], (a - b) / 2.0, atol=1e-15)
    assert np.allclose(snap.snapshots[0], -snap.snapshots[1], atol=1e-15)


def test_toy_eigenproblem_closed_form():
    sp = eigensolve(toy_snapshots(), epsilon=1.0)
    # 2x2 closed form: B = sqrt(Q) C sqrt(Q) = diag(0.5, 0), eigenvalues {0.5, 0}
    assert sp.values[0] == pytest.approx(0.5, abs=1e-14)
    assert sp.numerical_rank() == 1
    mode = sp.modes[:, 0]
    expected = np.array([1.0, 0.0]) / math.sqrt(0.5)
    assert np.allclose(mode, expected, atol=1e-12)
    # A w = lambda w with A = C diag(Q)
    a = np.array([[1.0, 0.0], [0.0, 0.0]]) @ np.diag([0.5, 0.5])
    assert np.allclose(a @ mode, 0.5 * mode, atol=1e-12)


def test_rank_one_snapshot_set():
    rng = np.random.default_rng(3)
    direction = rng.normal(size=7)
    coeffs = rng.normal(size=12)
    coeffs -= coeffs.mean()
    d = np.outer(coeffs, direction)
    q = rng.uniform(0.5, 2.0, size=7)
    snap = SnapshotSet(d, np.zeros(7), q, (1, 1), 0, None, None)
    sp = eigensolve(snap, epsilon=0.95)
    assert sp.numerical_rank() == 1
    expected = float(np.mean(coeffs**2) * direction @ (q * direction))
    assert sp.values[0] == pytest.approx(expected, rel=1e-12)


def test_snapshot_and_direct_forms_agree(small_training):
    _, _, _, snap = small_training
    a = eigensolve(snap, method="direct", epsilon=0.95)
    b = eigensolve(snap, method="snapshot", epsilon=0.95)
    k = min(a.numerical_rank(), b.numerical_rank())
    assert np.allclose(a.values[:k], b.values[:k], rtol=1e-8, atol=1e-20)
    # individual modes agree where eigenvalues are well separated; inside
    # quasi-degenerate tail clusters only the spanned subspace is defined
    for i in range(k):
        if a.values[i] < 1e-6 * a.values[0]:
            break
        wa, wb = a.modes[:, i], b.modes[:, i]
        align = 1.0 if wa @ (snap.q_diag * wb) >= 0 else -1.0
        assert np.allclose(wa, align * wb, atol=1e-8 * max(1.0, np.abs(wa).max()))
    # the active subspaces agree as projectors
    assert a.m == b.m
    wa = a.modes[:, : a.m]
    wb = b.modes[:, : b.m]
    rng = np.random.default_rng(0)
    probes = rng.normal(size=(a.dim, 3))
    pa = wa @ (wa.T @ (snap.q_diag[:, None] * probes))
    pb = wb @ (wb.T @ (snap.q_diag[:, None] * probes))
    assert np.allclose(pa, pb, atol=1e-8 * np.abs(pa).max())


def test_spectrum_equals_weighted_variance(small_training):
    _, _, _, snap = small_training
    sp = eigensolve(snap, epsilon=1.0)
    d = snap.snapshots
    total = float(np.einsum("ij,j,ij->", d, snap.q_diag, d) / len(d))
    assert sp.values.sum() == pytest.approx(total, rel=1e-8)


def test_modes_q_orthonormal(small_training):
    _, _, _, snap = small_training
    sp = eigensolve(snap, epsilon=1.0)
    w = sp.modes
    gram = w.T @ (w * sp.q_diag[:, None])
    assert np.abs(gram - np.eye(w.shape[1])).max() < 1e-8


def test_eigen_residual_small(small_training):
    _, _, _, snap = small_training
    sp = eigensolve(snap, epsilon=0.95)
    assert eigen_residual(sp, snap) <= 1e-8


def test_truncation_rules():
    values = np.array([3.0, 1.0])
    base = ModalSubspace(
        mean=np.zeros(4), q_diag=np.ones(4), modes=np.eye(4)[:, :2], values=values,
        m=2, epsilon=1.0, kappa=3, grid_shape=(1, 1), n_moments=1,
        moment_std=np.ones(1), beta=1.0, provenance={},
    )
    assert truncate(base, 0.74).m == 1
    assert truncate(base, 0.76).m == 2
    assert truncate(base, 1.0).m == 2
    with pytest.raises(ValueError):
        truncate(base, 0.0)


def test_truncate_epsilon_one_keeps_numerical_rank():
    values = np.array([1.0, 0.5, 1e-15])
    base = ModalSubspace(
        mean=np.zeros(3), q_diag=np.ones(3), modes=np.eye(3), values=values,
        m=3, epsilon=1.0, kappa=3, grid_shape=(1, 1), n_moments=0,
        moment_std=None, beta=None, provenance={},
    )
    assert truncate(base, 1.0).m == 2


def test_latent_bounds_formula():
    base = ModalSubspace(
        mean=np.zeros(2), q_diag=np.ones(2), modes=np.eye(2), values=np.array([4.0, 1.0]),
        m=2, epsilon=1.0, kappa=1, grid_shape=(1, 1), n_moments=0,
        moment_std=None, beta=None, provenance={},
    )
    assert np.allclose(latent_bounds(base, 1), [2.0, 1.0])
    assert np.allclose(latent_bounds(base, 3), [2.0 * math.sqrt(3.0), math.sqrt(3.0)])
    with pytest.raises(ValueError):
        latent_bounds(base, 2.5)


def test_latent_bounds_monotone(small_training):
    _, _, _, snap = small_training
    sp = eigensolve(snap, epsilon=0.95)
    b = latent_bounds(sp)
    assert np.all(np.diff(b) <= 1e-15)


def test_encode_zero_and_modes(small_training):
    _, _, _, snap = small_training
    sp = eigensolve(snap, epsilon=0.95)
    assert np.allclose(encode(sp, np.zeros(sp.dim)), 0.0, atol=1e-15)
    for k in range(min(3, sp.m)):
        v = encode(sp, sp.modes[:, k])
        expected = np.zeros(sp.m)
        expected[k] = 1.0
        assert np.allclose(v, expected, atol=1e-8)


def test_encode_matches_dense_oracle(small_training):
    _, _, _, snap = small_training
    sp = eigensolve(snap, epsilon=0.95)
    d = snap.snapshots[7]
    v = encode(sp, d)
    oracle = np.array(
        [math.fsum(float(d[i] * sp.q_diag[i] * sp.modes[i, k]) for i in range(sp.dim))
         for k in range(sp.m)]
    )
    assert np.allclose(v, oracle, atol=1e-12 * max(1.0, np.abs(oracle).max()))


def test_decode_zero_gives_mean_grid(small_training):
    _, _, _, snap = small_training
    sp = eigensolve(snap, epsilon=0.95)
    grid, _ = decode(sp, np.zeros(sp.m))
    assert np.allclose(grid, sp.mean_grid(), atol=1e-15)


def test_encode_decode_identity_on_span(small_training):
    _, _, _, snap = small_training
    sp = eigensolve(snap, epsilon=1.0)  # full numerical rank
    d = snap.snapshots[3]
    v = encode(sp, d)
    grid, _ = decode(sp, v)
    original = grids_from_block(d[None, : sp.geometry_size] + sp.mean[None, : sp.geometry_size],
                                sp.grid_shape)[0]
    scale = np.abs(original).max()
    assert np.allclose(grid, original, atol=1e-9 * scale)


def test_decode_encode_is_projection(small_training):
    _, _, _, snap = small_training
    sp = truncate(eigensolve(snap, epsilon=1.0), 0.9)
    rng = np.random.default_rng(8)
    d = rng.normal(size=sp.dim) * 1e-3
    v1 = encode(sp, d)
    grid, _ = decode(sp, v1)
    d2 = sp.signature_from_grid(grid)
    v2 = encode(sp, d2)
    assert np.allclose(v1, v2, atol=1e-10 * max(1.0, np.abs(v1).max()))


def test_bounds_corner_energy_parseval(small_training):
    _, _, _, snap = small_training
    sp = eigensolve(snap, epsilon=0.95)
    v = latent_bounds(sp, 1)
    dev = v @ sp.modes[:, : sp.m].T
    energy = float(dev @ (sp.q_diag * dev))
    assert energy == pytest.approx(float(np.sum(sp.values[: sp.m])), rel=1e-10)
    assert np.all(np.isfinite(decode(sp, v)[0]))


def test_ssdr_snapshot_layout(baseline, space, base_surface):
    samples = monte_carlo_uniform(space.lower, space.upper, 40, seed=13)
    grids = build_grids(baseline, space, samples.matrix)
    batch = BladeMomentBatch((51, 26))
    snap = assemble_snapshots(
        samples.matrix, lambda m: grids, base_surface.node_weights,
        batch.third_order_invariants, mode="ssdr",
    )
    assert snap.dim == 3 * 51 * 26 + 10 == 3988
    assert snap.n_moments == 10
    # moment block standardized then scaled by beta
    block = snap.snapshots[:, -10:]
    sigma_geom = float(
        np.einsum("ij,j,ij->", snap.snapshots[:, :-10], snap.q_diag[:-10],
                  snap.snapshots[:, :-10]) / len(block)
    )
    assert snap.beta == pytest.approx(math.sqrt(sigma_geom / 10.0), rel=1e-12)
    assert np.allclose(block.std(axis=0), snap.beta, rtol=1e-10)
    # total variance splits evenly between geometry and moments
    total = float(np.einsum("ij,j,ij->", snap.snapshots, snap.q_diag, snap.snapshots) / len(block))
    assert total == pytest.approx(2.0 * sigma_geom, rel=1e-10)


def test_kle_equals_ssdr_with_zero_beta(baseline, space, base_surface):
    samples = monte_carlo_uniform(space.lower, space.upper, 40, seed=13)
    grids = build_grids(baseline, space, samples.matrix)
    batch = BladeMomentBatch((51, 26))
    ssdr = assemble_snapshots(
        samples.matrix, lambda m: grids, base_surface.node_weights,
        batch.third_order_invariants, mode="ssdr",
    )
    kle = assemble_snapshots(samples.matrix, lambda m: grids, base_surface.node_weights,
                             None, mode="kle")
    zeroed = SnapshotSet(
        snapshots=np.hstack([ssdr.snapshots[:, :-10], np.zeros((ssdr.count, 10))]),
        mean=ssdr.mean, q_diag=ssdr.q_diag, grid_shape=ssdr.grid_shape,
        n_moments=10, moment_std=ssdr.moment_std, beta=0.0,
    )
    sp_z = eigensolve(zeroed, epsilon=1.0)
    sp_k = eigensolve(kle, epsilon=1.0)
    k = min(sp_z.numerical_rank(), sp_k.numerical_rank())
    assert np.allclose(sp_z.values[:k], sp_k.values[:k], rtol=1e-10, atol=1e-22)
    ng = kle.dim
    for i in range(min(k, 6)):
        wa = sp_z.modes[:ng, i]
        wb = sp_k.modes[:, i]
        align = 1.0 if wa @ (kle.q_diag * wb) >= 0 else -1.0
        assert np.allclose(wa, align * wb, atol=1e-10 * max(1.0, np.abs(wb).max()))


def test_nonfinite_geometry_reports_sample_index(baseline, space, base_surface):
    samples = monte_carlo_uniform(space.lower, space.upper, 4, seed=2)

    def geometry_fn(matrix):
        grids = build_grids(baseline, space, matrix, 9, 6)
        grids[2, 0, 0, 0] = np.nan
        return grids

    w = mesh_node_weights(build_grids(baseline, space, np.zeros(space.n), 9, 6))
    with pytest.raises(ValueError, match="sample index 2"):
        assemble_snapshots(samples.matrix, geometry_fn, w, None, mode="kle")


def test_requires_two_snapshots():
    d = np.ones((1, 4))
    snap = SnapshotSet(d, np.zeros(4), np.ones(4), (1, 1), 0, None, None)
    with pytest.raises(ValueError):
        eigensolve(snap)


def test_mode_sign_convention_deterministic(small_training):
    _, _, _, snap = small_training
    sp = eigensolve(snap, epsilon=0.95)
    for i in range(sp.m):
        col = sp.modes[:, i]
        assert col[np.argmax(np.abs(col))] > 0


def test_save_load_roundtrip(tmp_path, small_training):
    _, _, _, snap = small_training
    sp = eigensolve(snap, epsilon=0.95, provenance={"note": "test"})
    path = tmp_path / "space.sub"
    save_subspace(sp, path)
    back = load_subspace(path)
    assert np.array_equal(back.mean, sp.mean)
    assert np.array_equal(back.modes, sp.modes)
    assert np.array_equal(back.values, sp.values)
    assert back.m == sp.m and back.epsilon == sp.epsilon and back.kappa == sp.kappa
    assert back.provenance["note"] == "test"
    assert path.read_bytes()[:5] == b"SSDR1"


def test_load_rejects_bad_magic(tmp_path):
    path = tmp_path / "junk.sub"
    path.write_bytes(b"NOPE!" + b"\0" * 64)
    with pytest.raises(ValueError, match="magic"):
        load_subspace(path)
