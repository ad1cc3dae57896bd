"""Karhunen-Loeve subspaces of the shape-signature vector.

A training set of design vectors is mapped to signature snapshots: the
grid-point deviations from the training mean, blocked by coordinate (all
x, then all y, then all z), optionally followed by the deviations of the
third-order moment invariants.  Snapshots are weighted by a diagonal
matrix Q (dual-cell areas of the baseline grid normalized to unit sum per
coordinate block) and the covariance eigenproblem

    A w = lambda w,   A = C Q,   C = <d d^T>

is solved through its symmetric similarity transform
B = Q^(1/2) C Q^(1/2), which guarantees a real non-negative spectrum and
Q-orthonormal modes.  When the training count is below the snapshot
dimension the equivalent Gram (snapshot) eigenproblem is solved instead
and mapped back.

The moment block is standardized to unit sample variance per invariant
and scaled by beta = sqrt(sigma2_geom / n_M), so geometry and moments
contribute exactly the same weighted variance to the spectrum; beta is
recorded with the subspace and the corresponding Q entries stay at one.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, replace

import numpy as np

MAGIC = b"SSDR1"

#: eigenvalues below this fraction of the leading one count as numerically zero
RANK_TOLERANCE = 1e-12


@dataclass(frozen=True)
class SnapshotSet:
    """Deviation snapshots plus everything needed to reproduce the mapping."""

    snapshots: np.ndarray  # (count, dim)
    mean: np.ndarray  # (dim,)
    q_diag: np.ndarray  # (dim,)
    grid_shape: tuple[int, int]
    n_moments: int
    moment_std: np.ndarray | None
    beta: float | None

    @property
    def dim(self) -> int:
        return self.snapshots.shape[1]

    @property
    def count(self) -> int:
        return self.snapshots.shape[0]


def geometry_block(grids: np.ndarray) -> np.ndarray:
    """Flatten grids (N, S, R, 3) to coordinate-blocked rows (N, 3*S*R)."""
    n = grids.shape[0]
    return np.moveaxis(grids, -1, 1).reshape(n, -1)


def grids_from_block(block: np.ndarray, grid_shape: tuple[int, int]) -> np.ndarray:
    s, r = grid_shape
    n = block.shape[0]
    return np.moveaxis(block.reshape(n, 3, s, r), 1, -1)


def geometry_weights(node_weights: np.ndarray) -> np.ndarray:
    """Per-coordinate-block area weights, each block normalized to sum 1."""
    w = np.asarray(node_weights, dtype=float)
    if np.any(w <= 0):
        raise ValueError("node weights must be positive")
    return np.tile(w / w.sum(), 3)


def assemble_snapshots(
    sample_matrix: np.ndarray,
    geometry_fn,
    node_weights: np.ndarray,
    invariants_fn=None,
    mode: str = "ssdr",
) -> SnapshotSet:
    """Build the snapshot matrix for a training set.

    geometry_fn maps the (count, n) sample matrix to grids (count, S, R, 3);
    invariants_fn maps those grids to (count, n_M) moment invariants and is
    only consulted in ssdr mode.  Any non-finite geometry aborts with the
    offending sample index.
    """
    if mode not in ("ssdr", "kle"):
        raise ValueError(f"mode must be 'ssdr' or 'kle', got {mode!r}")
    grids = np.asarray(geometry_fn(sample_matrix), dtype=float)
    bad = np.flatnonzero(~np.isfinite(grids).all(axis=(1, 2, 3)))
    if bad.size:
        raise ValueError(f"non-finite geometry for sample index {bad[0]}")
    grid_shape = grids.shape[1:3]

    geom = geometry_block(grids)
    mean_geom = geom.mean(axis=0)
    dev_geom = geom - mean_geom
    q_geom = geometry_weights(node_weights)
    sigma2_geom = float(np.einsum("ij,j,ij->", dev_geom, q_geom, dev_geom) / len(geom))

    if mode == "kle":
        return SnapshotSet(
            snapshots=dev_geom,
            mean=mean_geom,
            q_diag=q_geom,
            grid_shape=grid_shape,
            n_moments=0,
            moment_std=None,
            beta=None,
        )

    if invariants_fn is None:
        raise ValueError("ssdr mode needs an invariants function")
    invariants = np.asarray(invariants_fn(grids), dtype=float)
    if not np.all(np.isfinite(invariants)):
        raise ValueError("non-finite moment invariants in training set")
    n_m = invariants.shape[1]
    mean_inv = invariants.mean(axis=0)
    dev_inv = invariants - mean_inv
    std_inv = dev_inv.std(axis=0)
    std_safe = np.where(std_inv > 0, std_inv, 1.0)
    beta = float(np.sqrt(sigma2_geom / n_m))
    dev_m = beta * (dev_inv / std_safe)

    return SnapshotSet(
        snapshots=np.hstack([dev_geom, dev_m]),
        mean=np.concatenate([mean_geom, mean_inv]),
        q_diag=np.concatenate([q_geom, np.ones(n_m)]),
        grid_shape=grid_shape,
        n_moments=n_m,
        moment_std=std_inv,
        beta=beta,
    )


@dataclass(frozen=True)
class ModalSubspace:
    """Weighted KL decomposition of a snapshot set, possibly truncated."""

    mean: np.ndarray  # (dim,)
    q_diag: np.ndarray  # (dim,)
    modes: np.ndarray  # (dim, k) Q-orthonormal columns
    values: np.ndarray  # (k,) descending
    m: int  # active mode count
    epsilon: float
    kappa: float
    grid_shape: tuple[int, int]
    n_moments: int
    moment_std: np.ndarray | None
    beta: float | None
    provenance: dict

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def geometry_size(self) -> int:
        return self.dim - self.n_moments

    @property
    def total_variance(self) -> float:
        return float(self.values.sum())

    @property
    def is_ssdr(self) -> bool:
        return self.n_moments > 0

    def numerical_rank(self) -> int:
        if len(self.values) == 0 or self.values[0] <= 0:
            return 0
        return int(np.sum(self.values > RANK_TOLERANCE * self.values[0]))

    # --- signature transform -----------------------------------------

    def signature_from_grid(self, grids: np.ndarray, invariants: np.ndarray | None = None):
        """Deviation snapshot(s) for new grids, using the stored mean and
        moment standardization; grids (S, R, 3) or (N, S, R, 3)."""
        grids = np.asarray(grids, dtype=float)
        single = grids.ndim == 3
        g = grids[None] if single else grids
        dev = geometry_block(g) - self.mean[: self.geometry_size]
        if self.n_moments:
            if invariants is None:
                raise ValueError("this subspace needs moment invariants")
            inv = np.atleast_2d(np.asarray(invariants, dtype=float))
            std_safe = np.where(self.moment_std > 0, self.moment_std, 1.0)
            dev_m = self.beta * (inv - self.mean[self.geometry_size :]) / std_safe
            dev = np.hstack([dev, dev_m])
        return dev[0] if single else dev

    def mean_grid(self) -> np.ndarray:
        return grids_from_block(self.mean[None, : self.geometry_size], self.grid_shape)[0]


def eigensolve(
    snapshots: SnapshotSet,
    epsilon: float = 0.95,
    kappa: float = 3.0,
    method: str = "auto",
    provenance: dict | None = None,
) -> ModalSubspace:
    """Solve the weighted covariance eigenproblem; returns the untruncated
    subspace (m = numerical rank) sorted by descending eigenvalue."""
    d = snapshots.snapshots
    count, dim = d.shape
    if count < 2:
        raise ValueError("need at least two snapshots")
    if method not in ("auto", "direct", "snapshot"):
        raise ValueError(f"unknown eigensolve method {method!r}")
    if method == "auto":
        method = "snapshot" if count < dim else "direct"

    sq = np.sqrt(snapshots.q_diag)
    if method == "direct":
        cov = (d.T @ d) / count
        b = cov * sq[:, None] * sq[None, :]
        b = 0.5 * (b + b.T)
        values, u = np.linalg.eigh(b)
        order = np.argsort(values)[::-1]
        values = values[order]
        u = u[:, order]
    else:
        y = d * sq[None, :]
        gram = (y @ y.T) / count
        gram = 0.5 * (gram + gram.T)
        g_values, a = np.linalg.eigh(gram)
        order = np.argsort(g_values)[::-1]
        g_values = g_values[order]
        a = a[:, order]
        values = g_values
        norms = np.sqrt(np.maximum(values * count, 1e-300))
        u = (y.T @ a) / norms[None, :]
        # the map loses orthonormality on near-null modes; QR restores it
        # without reordering (u is already nearly orthonormal, R ~ I)
        keep = values > (RANK_TOLERANCE * values[0] if values.size and values[0] > 0 else 0.0)
        u = u[:, keep]
        values = values[keep]
        u, _ = np.linalg.qr(u)

    values = np.maximum(values, 0.0)
    rank = int(np.sum(values > RANK_TOLERANCE * values[0])) if values.size and values[0] > 0 else 0
    values = values[:rank]
    u = u[:, :rank]
    modes = u / sq[:, None]

    # deterministic sign: the largest-magnitude entry of each mode positive
    if rank:
        pivot = np.argmax(np.abs(modes), axis=0)
        signs = np.sign(modes[pivot, np.arange(rank)])
        signs[signs == 0] = 1.0
        modes = modes * signs[None, :]

    sub = ModalSubspace(
        mean=snapshots.mean,
        q_diag=snapshots.q_diag,
        modes=modes,
        values=values,
        m=rank,
        epsilon=1.0,
        kappa=kappa,
        grid_shape=snapshots.grid_shape,
        n_moments=snapshots.n_moments,
        moment_std=snapshots.moment_std,
        beta=snapshots.beta,
        provenance=dict(provenance or {}, solver=method, training_count=count),
    )
    return truncate(sub, epsilon)


def truncate(subspace: ModalSubspace, epsilon: float) -> ModalSubspace:
    """Smallest m whose leading eigenvalues retain epsilon of the variance."""
    if not 0.0 < epsilon <= 1.0:
        raise ValueError("epsilon must be in (0, 1]")
    total = subspace.values.sum()
    if total <= 0:
        return replace(subspace, m=0, epsilon=epsilon)
    if epsilon == 1.0:
        m = subspace.numerical_rank()
    else:
        cumulative = np.cumsum(subspace.values)
        m = int(np.searchsorted(cumulative, epsilon * total) + 1)
        m = min(m, len(subspace.values))
    return replace(subspace, m=m, epsilon=epsilon)


def latent_bounds(subspace: ModalSubspace, kappa: float | None = None) -> np.ndarray:
    """Per-mode half-widths sqrt(kappa * lambda_i) for the active modes."""
    k = subspace.kappa if kappa is None else kappa
    if k not in (1, 2, 3):
        raise ValueError("kappa must be 1, 2 or 3")
    return np.sqrt(k * subspace.values[: subspace.m])


def encode(subspace: ModalSubspace, d: np.ndarray) -> np.ndarray:
    """Latent coordinates v_i = d^T Q w_i of a deviation snapshot (or batch)."""
    d = np.asarray(d, dtype=float)
    if d.shape[-1] != subspace.dim:
        raise ValueError(f"snapshot length {d.shape[-1]} != subspace dim {subspace.dim}")
    return (d * subspace.q_diag) @ subspace.modes[:, : subspace.m]


def decode(subspace: ModalSubspace, v: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
    """Grid(s) reconstructed from latent coordinates, plus the moment-block
    prediction as a diagnostic (never used to rebuild geometry).

    v of shape (m,) gives a (S, R, 3) grid; (N, m) gives (N, S, R, 3).
    """
    v = np.asarray(v, dtype=float)
    single = v.ndim == 1
    vb = v[None, :] if single else v
    if vb.shape[1] != subspace.m:
        raise ValueError(f"latent vector length {vb.shape[1]} != m = {subspace.m}")
    dev = vb @ subspace.modes[:, : subspace.m].T
    geom = dev[:, : subspace.geometry_size] + subspace.mean[: subspace.geometry_size]
    grids = grids_from_block(geom, subspace.grid_shape)
    diag = None
    if subspace.n_moments:
        std_safe = np.where(subspace.moment_std > 0, subspace.moment_std, 1.0)
        raw = dev[:, subspace.geometry_size :] * std_safe / subspace.beta
        diag = raw + subspace.mean[subspace.geometry_size :]
        if single:
            diag = diag[0]
    return (grids[0] if single else grids), diag


def eigen_residual(subspace: ModalSubspace, snapshots: SnapshotSet) -> float:
    """max_i ||A w_i - lambda_i w_i|| / lambda_1 over the active modes."""
    d = snapshots.snapshots
    w = subspace.modes[:, : subspace.m]
    qw = w * subspace.q_diag[:, None]
    aw = d.T @ (d @ qw) / len(d)
    resid = aw - w * subspace.values[: subspace.m][None, :]
    if subspace.values[0] <= 0:
        return 0.0
    return float(np.linalg.norm(resid, axis=0).max() / subspace.values[0])


# --- persistence (magic "SSDR1": JSON header + raw float64 blocks) ----


def save_subspace(subspace: ModalSubspace, path) -> None:
    header = {
        "dim": subspace.dim,
        "grid_shape": list(subspace.grid_shape),
        "n_moments": subspace.n_moments,
        "mode_count": subspace.modes.shape[1],
        "m": subspace.m,
        "epsilon": subspace.epsilon,
        "kappa": subspace.kappa,
        "beta": subspace.beta,
        "values": subspace.values.tolist(),
        "provenance": subspace.provenance,
    }
    blob = json.dumps(header).encode()
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<Q", len(blob)))
    buf.write(blob)
    for arr in (subspace.mean, subspace.q_diag, subspace.modes):
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    if subspace.n_moments:
        buf.write(np.ascontiguousarray(subspace.moment_std, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_subspace(path) -> ModalSubspace:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path} is not a subspace file (bad magic)")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen))
        dim = header["dim"]
        k = header["mode_count"]

        def block(count):
            return np.frombuffer(fh.read(count * 8), dtype="<f8").copy()

        mean = block(dim)
        q_diag = block(dim)
        modes = block(dim * k).reshape(dim, k)
        moment_std = block(header["n_moments"]) if header["n_moments"] else None
    return ModalSubspace(
        mean=mean,
        q_diag=q_diag,
        modes=modes,
        values=np.asarray(header["values"], dtype=float),
        m=header["m"],
        epsilon=header["epsilon"],
        kappa=header["kappa"],
        grid_shape=tuple(header["grid_shape"]),
        n_moments=header["n_moments"],
        moment_std=moment_std,
        beta=header["beta"],
        provenance=header["provenance"],
    )
