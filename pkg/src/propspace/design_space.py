"""The bounded 40-parameter design space over the four radial distributions.

Each of pitch, chord, max-camber and sectional-camber carries an additive
B-spline perturbation curve along the radius; the design vector
concatenates the four control-point blocks.  Perturbations are expressed
in the same dimensionless units as the underlying distribution (P/D, c/D,
f/c), so a zero vector reproduces the baseline exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import bspline
from .baseline import DISTRIBUTIONS, BaselineBlade

#: default bound fractions applied to the baseline when building a space:
#: pitch and chord move within +/-10% of their local baseline value, both
#: camber blocks within +/-30% of the largest baseline max-camber ratio
DEFAULT_BOUND_FRACTIONS = {
    "pitch": 0.10,
    "chord": 0.10,
    "max_camber": 0.30,
    "section_camber": 0.30,
}

#: radial envelope shrinking the per-control-point bounds toward hub and
#: tip (root fairing and tip shape stay buildable); the fractions above are
#: the mid-span ceilings.  Flat bounds spread the training variance over so
#: many comparable modes that no low-dimensional subspace retains 95%.
DEFAULT_BOUND_ENVELOPE = {"center": 0.62, "width": 0.125, "floor": 0.08}

DEFAULT_CONTROL_COUNT = 10
DEFAULT_DEGREE = 3


@dataclass(frozen=True)
class DistributionBlock:
    name: str
    degree: int
    knots: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @property
    def n_ctrl(self) -> int:
        return len(self.knots) - self.degree - 1

    def greville(self) -> np.ndarray:
        return bspline.greville_abscissae(self.knots, self.degree)


class DesignSpace:
    """Bounded box of control-point perturbations bound to one baseline."""

    def __init__(self, baseline: BaselineBlade, blocks: list[DistributionBlock]):
        names = [b.name for b in blocks]
        if names != list(DISTRIBUTIONS):
            raise ValueError(f"blocks must cover {DISTRIBUTIONS} in order, got {names}")
        self.baseline = baseline
        self.blocks = tuple(blocks)
        self.n = sum(b.n_ctrl for b in blocks)
        self.lower = np.concatenate([b.lower for b in blocks])
        self.upper = np.concatenate([b.upper for b in blocks])
        if np.any(self.lower >= self.upper):
            raise ValueError("every lower bound must be strictly below its upper bound")
        offsets = np.cumsum([0] + [b.n_ctrl for b in blocks])
        self.layout = {b.name: slice(offsets[i], offsets[i + 1]) for i, b in enumerate(blocks)}

    @classmethod
    def default_for(
        cls,
        baseline: BaselineBlade,
        n_ctrl: int = DEFAULT_CONTROL_COUNT,
        degree: int = DEFAULT_DEGREE,
        bound_fractions: dict | None = None,
        envelope: dict | None = None,
    ) -> "DesignSpace":
        """Even split of the parameters over the four distributions, clamped
        uniform knots on [hub, 1], bounds as fractions of the baseline
        tapered by the radial envelope (pass envelope={} to disable)."""
        fractions = dict(DEFAULT_BOUND_FRACTIONS)
        if bound_fractions:
            fractions.update(bound_fractions)
        env = dict(DEFAULT_BOUND_ENVELOPE) if envelope is None else dict(envelope)
        camber_scale = float(np.max(baseline.stations["f_max_c"]))
        blocks = []
        for name in DISTRIBUTIONS:
            knots = bspline.clamped_uniform_knots(n_ctrl, degree, baseline.hub_ratio, 1.0)
            greville = bspline.greville_abscissae(knots, degree)
            if name in ("pitch", "chord"):
                half = fractions[name] * baseline.distribution_value(name, greville)
            else:
                half = np.full(n_ctrl, fractions[name] * camber_scale)
            if env:
                taper = env["floor"] + (1.0 - env["floor"]) * np.exp(
                    -(((greville - env["center"]) / env["width"]) ** 2)
                )
                half = half * taper
            blocks.append(
                DistributionBlock(name=name, degree=degree, knots=knots, lower=-half, upper=half)
            )
        return cls(baseline, blocks)

    def block_coefficients(self, which: str, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if t.shape[-1] != self.n:
            raise ValueError(f"design vector must have {self.n} entries, got {t.shape[-1]}")
        return t[..., self.layout[which]]

    def perturbation(self, which: str, t: np.ndarray, r_R) -> np.ndarray:
        """B-spline perturbation of one distribution at radius fraction(s).

        Vectorizes over both the radii and a leading batch axis of t:
        t of shape (..., n) and r_R of shape (k,) give (k, ...)."""
        block = self.blocks[list(DISTRIBUTIONS).index(which)]
        coeffs = self.block_coefficients(which, t)
        return bspline.evaluate(block.knots, block.degree, np.moveaxis(coeffs, -1, 0), r_R)

    def distribution_value(self, which: str, t: np.ndarray, r_R) -> np.ndarray:
        """Baseline distribution plus the design-vector perturbation."""
        r = np.asarray(r_R, dtype=float)
        if np.any(r < self.baseline.hub_ratio - 1e-12) or np.any(r > 1.0 + 1e-12):
            raise ValueError("radius fraction out of range")
        base = self.baseline.distribution_value(which, r)
        pert = self.perturbation(which, t, r)
        if pert.ndim > base.ndim:  # batched t: broadcast baseline over the batch axis
            base = base[..., None] if base.ndim else base
        return base + pert

    def clip(self, t: np.ndarray) -> np.ndarray:
        return np.clip(t, self.lower, self.upper)

    def contains(self, t: np.ndarray, atol: float = 0.0) -> bool:
        t = np.asarray(t, dtype=float)
        return bool(np.all(t >= self.lower - atol) and np.all(t <= self.upper + atol))

    # serialization ----------------------------------------------------

    def to_json(self) -> dict:
        return {
            "format": "design-space/1",
            "distributions": [
                {
                    "name": b.name,
                    "degree": b.degree,
                    "control_points": b.n_ctrl,
                    "knots": b.knots.tolist(),
                    "lower": b.lower.tolist(),
                    "upper": b.upper.tolist(),
                }
                for b in self.blocks
            ],
        }

    @classmethod
    def from_json(cls, data: dict, baseline: BaselineBlade) -> "DesignSpace":
        blocks = []
        for spec in data["distributions"]:
            knots = np.asarray(spec["knots"], dtype=float)
            if np.any(np.diff(knots) < 0):
                raise ValueError(f"knot vector for {spec['name']} must be non-decreasing")
            blocks.append(
                DistributionBlock(
                    name=spec["name"],
                    degree=int(spec["degree"]),
                    knots=knots,
                    lower=np.asarray(spec["lower"], dtype=float),
                    upper=np.asarray(spec["upper"], dtype=float),
                )
            )
        return cls(baseline, blocks)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def load(cls, path, baseline: BaselineBlade) -> "DesignSpace":
        return cls.from_json(json.loads(Path(path).read_text()), baseline)


def eval_distribution(space: DesignSpace, which: str, t: np.ndarray, r_R) -> np.ndarray:
    """Convenience wrapper: modified distribution value(s) at r_R."""
    if which not in DISTRIBUTIONS:
        raise ValueError(f"unknown distribution {which!r}")
    return space.distribution_value(which, t, r_R)
