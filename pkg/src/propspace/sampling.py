"""Deterministic design-space samplers.

Rows are generated from per-row counter-based (Philox) streams keyed by
the seed, so a sample matrix is reproducible bit-for-bit regardless of
chunking, thread count or platform.  Sample sets persist as little-endian
float64 row-major binary with a JSON sidecar.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SCHEMES = ("monte-carlo-uniform", "uniform-latin-hypercube")


@dataclass(frozen=True)
class SampleSet:
    matrix: np.ndarray  # (count, n)
    seed: int
    scheme: str
    lower: np.ndarray
    upper: np.ndarray

    @property
    def count(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def bounds_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.lower, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.upper, dtype="<f8").tobytes())
        return h.hexdigest()


def _row_uniforms(seed: int, row: int, n: int) -> np.ndarray:
    """n uniforms from the row's own Philox stream (counter = row << 64)."""
    gen = np.random.Generator(np.random.Philox(key=seed & (2**64 - 1), counter=row << 64))
    return gen.random(n)


def _row_block(seed: int, start: int, count: int, n: int) -> np.ndarray:
    return np.stack([_row_uniforms(seed, start + i, n) for i in range(count)])


def monte_carlo_uniform(lower, upper, count: int, seed: int) -> SampleSet:
    """i.i.d. uniform rows over the bound box."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if count < 1:
        raise ValueError("sample count must be >= 1")
    if lower.shape != upper.shape or np.any(lower > upper):
        raise ValueError("invalid bounds")
    u = _row_block(seed, 0, count, len(lower))
    return SampleSet(
        matrix=lower + (upper - lower) * u,
        seed=seed,
        scheme="monte-carlo-uniform",
        lower=lower,
        upper=upper,
    )


def latin_hypercube(lower, upper, count: int, seed: int) -> SampleSet:
    """Uniform Latin hypercube: per dimension, exactly one jittered sample
    in each of the count equal-width strata."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if count < 1:
        raise ValueError("sample count must be >= 1")
    if lower.shape != upper.shape or np.any(lower > upper):
        raise ValueError("invalid bounds")
    n = len(lower)
    jitter = _row_block(seed, 0, count, n)
    perm_gen = np.random.Generator(np.random.Philox(key=seed & (2**64 - 1), counter=1 << 128))
    strata = np.stack([perm_gen.permutation(count) for _ in range(n)], axis=1)
    u = (strata + jitter) / count
    return SampleSet(
        matrix=lower + (upper - lower) * u,
        seed=seed,
        scheme="uniform-latin-hypercube",
        lower=lower,
        upper=upper,
    )


def latent_uniform(bounds: np.ndarray, count: int, seed: int, row_offset: int = 0) -> np.ndarray:
    """Uniform draws inside a symmetric [-b, +b] latent box; row streams are
    offset so disjoint chunks of one logical sampling never collide."""
    bounds = np.asarray(bounds, dtype=float)
    u = _row_block(seed, row_offset, count, len(bounds))
    return (2.0 * u - 1.0) * bounds


# --- persistence ------------------------------------------------------


def save_samples(samples: SampleSet, path) -> None:
    path = Path(path)
    data = np.ascontiguousarray(samples.matrix, dtype="<f8")
    path.write_bytes(data.tobytes())
    sidecar = {
        "count": samples.count,
        "dim": samples.dim,
        "seed": samples.seed,
        "scheme": samples.scheme,
        "bounds_hash": samples.bounds_hash(),
        "lower": samples.lower.tolist(),
        "upper": samples.upper.tolist(),
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2))


def load_samples(path) -> SampleSet:
    path = Path(path)
    sidecar = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    matrix = np.frombuffer(path.read_bytes(), dtype="<f8").reshape(
        sidecar["count"], sidecar["dim"]
    )
    samples = SampleSet(
        matrix=matrix.copy(),
        seed=int(sidecar["seed"]),
        scheme=sidecar["scheme"],
        lower=np.asarray(sidecar["lower"], dtype=float),
        upper=np.asarray(sidecar["upper"], dtype=float),
    )
    if samples.bounds_hash() != sidecar["bounds_hash"]:
        raise ValueError(f"bounds hash mismatch in {path}")
    return samples
