"""Blade surface generation: sections lofted onto pitch helices.

The structured grid wraps chordwise from the pressure-side trailing edge
around the leading edge to the suction-side trailing edge (leading edge at
chordwise index 25 of 0..50), with radial stations cosine-clustered from
hub to tip.  Cartesian frame: x along the propeller axis (positive
downstream of the rake offset), the blade spanning along +z, y completing
the right-handed set; all coordinates in meters.

Sections are built in local helix coordinates (arc length along the pitch
helix, offset normal to it), so for matched x/c fractions the suction and
pressure nodes of one station form thickness pairs; every builder here is
vectorized over a trailing batch axis so thousands of design vectors can
be lofted in one call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .baseline import BaselineBlade
from .design_space import DesignSpace
from .sections import SectionProfile, load_profile

CHORDWISE_NODES = 51
RADIAL_NODES = 26

#: quads with area below this are flagged degenerate; their dual-cell
#: contribution is clamped to the floor instead of vanishing
DEGENERATE_AREA_FLOOR = 1e-14


def radial_stations(hub_ratio: float, n: int = RADIAL_NODES) -> np.ndarray:
    """Cosine-clustered radius fractions from the hub to exactly 1.0."""
    u = 0.5 * (1.0 - np.cos(np.pi * np.arange(n) / (n - 1)))
    return hub_ratio + (1.0 - hub_ratio) * u


def chordwise_fractions(n: int = CHORDWISE_NODES) -> tuple[np.ndarray, np.ndarray]:
    """x/c fraction and side sign (-1 pressure, +1 suction) per grid column.

    Columns 0..(n-1)//2 run from the trailing edge to the leading edge on
    the pressure side, the rest back to the trailing edge on the suction
    side; matched fractions pair node i with node n-1-i.
    """
    if n % 2 == 0:
        raise ValueError("chordwise node count must be odd (shared leading-edge node)")
    half = n // 2
    x_half = 0.5 * (1.0 + np.cos(np.pi * np.arange(half + 1) / half))  # 1 -> 0, TE -> LE
    x = np.concatenate([x_half, x_half[-2::-1]])
    side = np.concatenate([-np.ones(half), [0.0], np.ones(half)])
    return x, side


@dataclass(frozen=True)
class BladeSurface:
    """Structured single-blade surface grid plus its dual-cell node areas."""

    grid: np.ndarray  # (chordwise, radial, 3) meters
    node_weights: np.ndarray  # (chordwise * radial,) m^2, row-major over (chordwise, radial)
    orientation: str = "suction-outward"

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape[0], self.grid.shape[1]

    @property
    def area(self) -> float:
        return float(self.node_weights.sum())


def _quad_areas(grid: np.ndarray) -> np.ndarray:
    """Cross-product area of every grid quad; grid may carry a batch axis."""
    d1 = grid[1:, 1:] - grid[:-1, :-1]
    d2 = grid[:-1, 1:] - grid[1:, :-1]
    cross = np.cross(d1, d2, axis=-1)
    return 0.5 * np.linalg.norm(cross, axis=-1)


def mesh_node_weights(grid: np.ndarray) -> np.ndarray:
    """Dual-cell node areas: one quarter of each incident quad's area.

    Summing the weights reproduces the total quad area exactly.  Degenerate
    quads (area < 1e-14 m^2) still contribute the floor value so weights
    stay positive.
    """
    if grid.ndim != 3 or grid.shape[-1] != 3 or grid.shape[0] < 2 or grid.shape[1] < 2:
        raise ValueError("grid must be (chordwise>=2, radial>=2, 3)")
    areas = np.maximum(_quad_areas(grid), DEGENERATE_AREA_FLOOR)
    quarter = 0.25 * areas
    weights = np.zeros(grid.shape[:2])
    for di, dj in ((0, 0), (0, 1), (1, 0), (1, 1)):
        weights[di : di + areas.shape[0], dj : dj + areas.shape[1]] += quarter
    return weights.ravel()


def build_grids(base: BaselineBlade, space: DesignSpace, t: np.ndarray,
                n_chordwise: int = CHORDWISE_NODES, n_radial: int = RADIAL_NODES) -> np.ndarray:
    """Loft the blade surface(s) for one design vector or a batch.

    t of shape (n,) returns (chordwise, radial, 3); shape (N, n) returns
    (N, chordwise, radial, 3).  Finite inputs always produce a grid;
    geometric validity is judged downstream.
    """
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise ValueError("design vector must be finite")
    single = t.ndim == 1
    tb = t[None, :] if single else t

    profile = load_profile(base.section_profile_id)
    r_frac = radial_stations(base.hub_ratio, n_radial)  # (R,)
    x_frac, side = chordwise_fractions(n_chordwise)  # (S,)

    # radial distributions, shape (R, N)
    pitch = space.distribution_value("pitch", tb, r_frac)
    chord_ratio = space.distribution_value("chord", tb, r_frac)
    f_max = space.distribution_value("max_camber", tb, r_frac)
    s_cam = space.distribution_value("section_camber", tb, r_frac)
    t_max = base.station_value("t_max_c", r_frac)[:, None]  # thickness is not designed
    skew = np.deg2rad(base.station_value("skew_deg", r_frac))[:, None]
    rake = base.station_value("rake", r_frac)[:, None]

    d = base.diameter
    r_m = (r_frac * base.radius)[:, None]  # (R, 1)
    chord = chord_ratio * d
    phi = np.arctan2(pitch * d, 2.0 * np.pi * r_m)  # helix pitch angle, (R, N)

    # section offsets in (along-helix, normal) coordinates, shape (S, R, N)
    ht = profile.half_thickness(x_frac)[:, None, None]
    cam = profile.camber(x_frac)[:, None, None]
    mode2 = SectionProfile.camber_shape_mode(x_frac)[:, None, None]
    y_c = (f_max[None] * cam + s_cam[None] * mode2) * chord[None]
    y_t = t_max[None] * ht * chord[None]
    along = (0.5 - x_frac)[:, None, None] * chord[None]  # midchord at the reference line
    normal = y_c + side[:, None, None] * y_t

    sin_phi, cos_phi = np.sin(phi)[None], np.cos(phi)[None]
    x_axial = rake[None] * d + along * sin_phi + normal * cos_phi
    psi = skew[None] + (along * cos_phi - normal * sin_phi) / r_m[None]

    grids = np.empty((n_chordwise, n_radial, tb.shape[0], 3))
    grids[..., 0] = x_axial
    grids[..., 1] = r_m[None] * np.sin(psi)
    grids[..., 2] = r_m[None] * np.cos(psi)
    grids = np.moveaxis(grids, 2, 0)  # (N, S, R, 3)
    return grids[0] if single else grids


def apply_design_vector(base: BaselineBlade, space: DesignSpace, t: np.ndarray,
                        n_chordwise: int = CHORDWISE_NODES,
                        n_radial: int = RADIAL_NODES) -> BladeSurface:
    """Deterministic surface for one design vector, with node weights."""
    grid = build_grids(base, space, np.asarray(t, dtype=float), n_chordwise, n_radial)
    return BladeSurface(grid=grid, node_weights=mesh_node_weights(grid))


def baseline_surface(base: BaselineBlade, space: DesignSpace,
                     n_chordwise: int = CHORDWISE_NODES,
                     n_radial: int = RADIAL_NODES) -> BladeSurface:
    return apply_design_vector(base, space, np.zeros(space.n), n_chordwise, n_radial)
