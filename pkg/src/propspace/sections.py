"""Chordwise section profile family (thickness form + mean line)."""

from __future__ import annotations

import importlib.resources
import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import PchipInterpolator


@dataclass(frozen=True)
class SectionProfile:
    """Tabulated thickness/camber shapes, interpolated monotonically in x/c.

    half_thickness(x) is y_t/t_max with a maximum of 0.5, camber(x) is
    y_c/f_max with a maximum of 1.0.  Both vanish at the leading edge and
    at the (sharp) trailing edge.
    """

    profile_id: str
    _half_thickness: PchipInterpolator
    _camber: PchipInterpolator

    def half_thickness(self, x_c) -> np.ndarray:
        return self._half_thickness(np.clip(x_c, 0.0, 1.0))

    def camber(self, x_c) -> np.ndarray:
        return self._camber(np.clip(x_c, 0.0, 1.0))

    @staticmethod
    def camber_shape_mode(x_c) -> np.ndarray:
        """Antisymmetric chordwise camber mode used by the sectional-camber
        distribution: shifts mean-line loading fore/aft while keeping the
        leading and trailing edges fixed.  Normalized to unit peak value."""
        x = np.asarray(x_c, dtype=float)
        mode = x * (1.0 - x) * (1.0 - 2.0 * x)
        return mode / 0.09622504486493764  # peak of x(1-x)(1-2x) on [0, 1]


@lru_cache(maxsize=4)
def load_profile(profile_id: str = "naca66mod-a08") -> SectionProfile:
    data = json.loads(
        importlib.resources.files("propspace.data").joinpath("section_profile.json").read_text()
    )
    if data["id"] != profile_id:
        raise ValueError(f"unknown section profile {profile_id!r}")
    x = np.asarray(data["x_c"], dtype=float)
    return SectionProfile(
        profile_id=profile_id,
        _half_thickness=PchipInterpolator(x, np.asarray(data["half_thickness"], dtype=float)),
        _camber=PchipInterpolator(x, np.asarray(data["camber"], dtype=float)),
    )
