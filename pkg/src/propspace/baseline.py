"""Baseline blade definition and the station-table file format.

A baseline blade is described by a plain-text station table, one radial
station per line with whitespace-separated columns

    r/R  c/D  P/D  skew_deg  rake  f_max/c  t_max/c

``#`` starts a comment.  Comment lines of the form ``# key = value`` carry
the scalar metadata (``diameter_m``, ``blade_count``, ``section_profile``).
Between stations every distribution is interpolated with a monotone
(PCHIP) cubic, so the table is the exact geometry at the listed radii and
a smooth, overshoot-free curve elsewhere.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator

STATION_COLUMNS = ("r_R", "c_D", "P_D", "skew_deg", "rake", "f_max_c", "t_max_c")

#: distributions a design vector may perturb, in block order
DISTRIBUTIONS = ("pitch", "chord", "max_camber", "section_camber")

_COLUMN_FOR_DISTRIBUTION = {
    "pitch": "P_D",
    "chord": "c_D",
    "max_camber": "f_max_c",
    # the sectional-camber shape parameter is zero on the baseline: the
    # unperturbed section uses the pure profile-family mean line
    "section_camber": None,
}


class StationTableError(ValueError):
    """Malformed station-table file."""


@dataclass(frozen=True)
class BaselineBlade:
    """Radial station table plus principal characteristics of one propeller."""

    stations: dict[str, np.ndarray]
    diameter: float
    blade_count: int
    section_profile_id: str = "naca66mod-a08"
    _interps: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        r = self.stations["r_R"]
        if len(r) < 4:
            raise StationTableError(f"need at least 4 stations, got {len(r)}")
        if np.any(np.diff(r) <= 0):
            raise StationTableError("radial stations must be strictly increasing")
        if not 0.0 < r[0] < 1.0 or abs(r[-1] - 1.0) > 1e-12:
            raise StationTableError("stations must span (hub, 1.0] with the tip at r/R = 1")
        if np.any(self.stations["c_D"] <= 0):
            raise StationTableError("chord ratio must be positive at every station")
        if self.diameter <= 0:
            raise StationTableError("diameter must be positive")
        for name in STATION_COLUMNS[1:]:
            self._interps[name] = PchipInterpolator(r, self.stations[name], extrapolate=False)

    @property
    def hub_ratio(self) -> float:
        return float(self.stations["r_R"][0])

    @property
    def radius(self) -> float:
        return 0.5 * self.diameter

    def station_value(self, column: str, r_R) -> np.ndarray:
        """Interpolated station-table column at radius fraction(s) r_R."""
        r = np.asarray(r_R, dtype=float)
        if np.any(r < self.hub_ratio - 1e-12) or np.any(r > 1.0 + 1e-12):
            raise ValueError(f"radius fraction outside [{self.hub_ratio}, 1]")
        return self._interps[column](np.clip(r, self.hub_ratio, 1.0))

    def distribution_value(self, which: str, r_R) -> np.ndarray:
        """Baseline value of one designable distribution at r_R."""
        column = _COLUMN_FOR_DISTRIBUTION[which]
        if column is None:
            return np.zeros_like(np.asarray(r_R, dtype=float))
        return self.station_value(column, r_R)


def parse_station_table(text: str, source: str = "<string>") -> BaselineBlade:
    meta: dict[str, str] = {}
    rows: list[tuple[int, list[float]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            if "=" in body:
                key, _, value = body.partition("=")
                if " " not in key.strip():
                    meta[key.strip()] = value.strip()
            continue
        if not line:
            continue
        parts = line.split()
        if len(parts) != len(STATION_COLUMNS):
            raise StationTableError(
                f"{source}:{lineno}: expected {len(STATION_COLUMNS)} columns, got {len(parts)}"
            )
        try:
            rows.append((lineno, [float(p) for p in parts]))
        except ValueError as exc:
            raise StationTableError(f"{source}:{lineno}: {exc}") from None

    if len(rows) < 4:
        raise StationTableError(f"{source}: need at least 4 stations, got {len(rows)}")

    values = np.array([r[1] for r in rows])
    radii = values[:, 0]
    for k in range(1, len(radii)):
        if radii[k] <= radii[k - 1]:
            raise StationTableError(f"{source}: non-monotone radii at line {rows[k][0]}")

    try:
        diameter = float(meta["diameter_m"])
        blade_count = int(meta["blade_count"])
    except KeyError as exc:
        raise StationTableError(f"{source}: missing metadata directive {exc}") from None

    stations = {name: values[:, i].copy() for i, name in enumerate(STATION_COLUMNS)}
    return BaselineBlade(
        stations=stations,
        diameter=diameter,
        blade_count=blade_count,
        section_profile_id=meta.get("section_profile", "naca66mod-a08"),
    )


def load_baseline(path) -> BaselineBlade:
    """Read a station-table file; errors carry the offending line number."""
    path = Path(path)
    return parse_station_table(path.read_text(), source=str(path))


def builtin_baseline() -> BaselineBlade:
    """The E779A fixture shipped with the package."""
    text = importlib.resources.files("propspace.data").joinpath("e779a_stations.dat").read_text()
    return parse_station_table(text, source="builtin:e779a")
