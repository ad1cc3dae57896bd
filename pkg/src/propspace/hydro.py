"""Hydrodynamic evaluator interface and the built-in blade-element surrogate.

The surrogate is a deliberately simple stand-in for a validated panel-type
solver: per radial strip it iterates axial/tangential induction factors
with a Prandtl tip-loss factor, takes section lift from thin-airfoil
theory (camber included), drag from a quadratic polar, and integrates
thrust/torque coefficients.  Cavitation is proxied by a minimum-pressure
estimate -Cp_min = a1*|Cl| + a2*(t/c) compared against the local
cavitation number.  Every constant is configurable so a genuine solver
can replace the surrogate behind the same interface without touching the
optimizer; absolute published performance numbers are not reproduced
here, only physically sensible trends.

All section properties are measured from the surface grid itself, so
evaluated designs may come from the parametric space or from a decoded
latent vector alike.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .baseline import BaselineBlade
from .surface import BladeSurface


@dataclass(frozen=True)
class OperatingPoint:
    advance_ratio: float = 0.833  # J
    rps: float = 36.0  # revolutions per second, model scale
    cavitation_index: float = 1.38  # sigma_N, referred to n*D
    density: float = 998.0  # kg/m^3

    def __post_init__(self):
        if self.advance_ratio <= 0 or self.rps <= 0 or self.cavitation_index <= 0:
            raise ValueError("operating point values must be positive")


@dataclass(frozen=True)
class SurrogateConfig:
    lift_slope: float = 2.0 * np.pi
    camber_lift_factor: float = 1.0  # zero-lift angle ~ -factor * f/c
    incidence_offset: float = np.deg2rad(1.0)  # viscous decambering correction
    cd0: float = 0.008
    cd_induced: float = 0.012  # quadratic polar coefficient on Cl^2
    cp_lift: float = 0.85  # a1 in -Cp_min = a1|Cl| + a2 t/c
    cp_thickness: float = 2.3  # a2
    face_cl_threshold: float = -0.05  # Cl below this counts as face cavitation
    tolerance: float = 1e-8
    max_iterations: int = 200
    tip_loss_floor: float = 1e-2


@dataclass(frozen=True)
class HydroResult:
    kt: float
    kq: float
    eta: float
    a_cav_back: float  # fraction of one blade's suction-side area
    a_cav_face: float  # fraction of one blade's pressure-side area
    converged: bool
    iterations: int = 0
    strip_data: dict = field(default_factory=dict, repr=False)


def openwater_efficiency(kt: float, kq: float, j: float) -> float:
    """eta_0 = (J / 2 pi) * (K_T / K_Q)."""
    if kq <= 0:
        raise ValueError("torque coefficient must be positive")
    return (j / (2.0 * np.pi)) * (kt / kq)


@dataclass(frozen=True)
class StripGeometry:
    radius: np.ndarray  # strip mid radius (m)
    width: np.ndarray  # radial width (m)
    chord: np.ndarray  # nose-tail chord (m)
    pitch_angle: np.ndarray  # rad
    camber_ratio: np.ndarray  # max midline offset / chord
    thickness_ratio: np.ndarray  # max thickness / chord
    back_area: np.ndarray  # suction-side strip areas (m^2)
    face_area: np.ndarray  # pressure-side strip areas (m^2)


def extract_strips(surface: BladeSurface) -> StripGeometry:
    """Per-strip section properties measured directly from the grid.

    Sections live on constant-radius cylinders, so chord, pitch angle and
    camber are measured in the developed (unwrapped) plane u = r*psi,
    v = x_axial, where the helical wrap contributes no spurious curvature.
    """
    grid = surface.grid
    s, r = grid.shape[:2]
    half = s // 2
    pressure = grid[: half + 1]  # TE -> LE
    suction = grid[: half - 1 : -1]
    mid = 0.5 * (pressure + suction)  # (half+1, r, 3)

    radius = np.hypot(mid[..., 1], mid[..., 2]).mean(axis=0)  # (r,)
    psi = np.arctan2(mid[..., 1], mid[..., 2])
    u = radius[None, :] * psi  # developed tangential coordinate
    v = mid[..., 0]  # axial coordinate

    du, dv = u[-1] - u[0], v[-1] - v[0]  # TE -> LE in the developed plane
    chord = np.hypot(du, dv)
    pitch_angle = np.arctan2(dv, np.abs(du))

    # camber: largest perpendicular midline offset from the nose-tail line
    rel_u, rel_v = u - u[0], v - v[0]
    cross = np.abs(rel_u * dv[None] - rel_v * du[None]) / np.maximum(chord, 1e-300)
    camber = cross.max(axis=0) / np.maximum(chord, 1e-300)

    thickness = np.linalg.norm(suction - pressure, axis=-1).max(axis=0) / np.maximum(chord, 1e-300)

    def quad_areas(g):
        d1 = g[1:, 1:] - g[:-1, :-1]
        d2 = g[:-1, 1:] - g[1:, :-1]
        return 0.5 * np.linalg.norm(np.cross(d1, d2, axis=-1), axis=-1)

    back = quad_areas(grid[half:]).sum(axis=0)  # per radial interval (r-1,)
    face = quad_areas(grid[: half + 1]).sum(axis=0)

    mid_of = lambda a: 0.5 * (a[1:] + a[:-1])
    return StripGeometry(
        radius=mid_of(radius),
        width=np.diff(radius),
        chord=mid_of(chord),
        pitch_angle=mid_of(pitch_angle),
        camber_ratio=mid_of(camber),
        thickness_ratio=mid_of(thickness),
        back_area=back,
        face_area=face,
    )


class BladeElementEvaluator:
    """Deterministic blade-element/momentum estimate of K_T, K_Q, eta and
    cavitating area fractions."""

    def __init__(self, config: SurrogateConfig | None = None):
        self.config = config or SurrogateConfig()

    def evaluate(
        self, surface: BladeSurface, base: BaselineBlade, op: OperatingPoint
    ) -> HydroResult:
        if not np.all(np.isfinite(surface.grid)):
            raise ValueError("surface grid contains non-finite coordinates")
        cfg = self.config
        strips = extract_strips(surface)
        z = base.blade_count
        d = base.diameter
        radius_max = 0.5 * d
        n = op.rps
        v_a = op.advance_ratio * n * d
        omega = 2.0 * np.pi * n

        r = strips.radius
        sigma_s = z * strips.chord / (2.0 * np.pi * r)
        theta = strips.pitch_angle

        def induction(phi):
            """Induction factors and section coefficients at inflow angle phi."""
            alpha = theta - phi - cfg.incidence_offset
            cl = cfg.lift_slope * (alpha + cfg.camber_lift_factor * strips.camber_ratio)
            cd = cfg.cd0 + cfg.cd_induced * cl * cl
            x = np.clip(r / radius_max, 1e-6, 1.0 - 1e-9)
            f_arg = 0.5 * z * (1.0 - x) / np.maximum(x * np.abs(np.sin(phi)), 1e-9)
            tip_loss = np.maximum(
                (2.0 / np.pi) * np.arccos(np.clip(np.exp(-f_arg), 0.0, 1.0)),
                cfg.tip_loss_floor,
            )
            cn = cl * np.cos(phi) - cd * np.sin(phi)
            ct = cl * np.sin(phi) + cd * np.cos(phi)
            k1 = sigma_s * cn / np.maximum(4.0 * tip_loss * np.sin(phi) ** 2, 1e-9)
            k2 = sigma_s * ct / np.maximum(4.0 * tip_loss * np.sin(phi) * np.cos(phi), 1e-9)
            a = k1 / np.maximum(1.0 - k1, 1e-3)  # momentum balance a/(1+a) = k1
            ap = k2 / np.maximum(1.0 + k2, 1e-3)  # and a'/(1-a') = k2
            return a, ap, cl, cd

        # flow consistency tan(phi) = Va(1+a) / (Omega r (1-a')) solved by
        # bisection on (0, pi/2): robust where fixed-point iteration on the
        # induction factors oscillates (high root solidity, tip-loss tips)
        def residual(phi):
            a, ap, _, _ = induction(phi)
            return np.tan(phi) - v_a * (1.0 + a) / (omega * r * np.maximum(1.0 - ap, 1e-3))

        lo = np.full_like(r, 1e-4)
        hi = np.full_like(r, 0.5 * np.pi - 1e-4)
        bracketed = residual(lo) < 0  # residual(hi) > 0: tan(phi) dominates
        it = 0
        for it in range(1, cfg.max_iterations + 1):
            mid = 0.5 * (lo + hi)
            take_lo = residual(mid) < 0
            lo = np.where(take_lo, mid, lo)
            hi = np.where(take_lo, hi, mid)
            if float((hi - lo).max()) < cfg.tolerance:
                break
        phi = 0.5 * (lo + hi)
        converged = bool(bracketed.all() and float((hi - lo).max()) < cfg.tolerance)

        a, ap, cl, cd = induction(phi)
        rho = op.density
        vx = v_a * (1.0 + a)
        vt = omega * r * (1.0 - ap)
        w2 = vx * vx + vt * vt
        dt = 0.5 * rho * w2 * z * strips.chord * (cl * np.cos(phi) - cd * np.sin(phi))
        dq = 0.5 * rho * w2 * z * strips.chord * (cl * np.sin(phi) + cd * np.cos(phi)) * r
        thrust = float(np.sum(dt * strips.width))
        torque = float(np.sum(dq * strips.width))
        kt = thrust / (rho * n**2 * d**4)
        kq = torque / (rho * n**2 * d**5)
        eta = openwater_efficiency(kt, kq, op.advance_ratio) if kq > 0 else 0.0

        # cavitation proxy: strip counts as cavitating when the minimum
        # pressure estimate beats the local (velocity-referred) sigma
        sigma_local = op.cavitation_index * (n * d) ** 2 / np.maximum(w2, 1e-12)
        cp_min = cfg.cp_lift * np.abs(cl) + cfg.cp_thickness * strips.thickness_ratio
        back_cav = (cp_min > sigma_local) & (cl >= 0.0)
        face_cav = cl < cfg.face_cl_threshold
        back_total = strips.back_area.sum()
        face_total = strips.face_area.sum()
        a_back = float(strips.back_area[back_cav].sum() / max(back_total, 1e-300))
        a_face = float(strips.face_area[face_cav].sum() / max(face_total, 1e-300))

        return HydroResult(
            kt=kt,
            kq=kq,
            eta=eta,
            a_cav_back=a_back,
            a_cav_face=a_face,
            converged=converged,
            iterations=it,
            strip_data={
                "radius": r,
                "cl": cl,
                "phi": phi,
                "sigma_local": sigma_local,
                "cp_min": cp_min,
            },
        )


EVALUATORS = {"blade-element-surrogate": BladeElementEvaluator}


def make_evaluator(name: str, config: SurrogateConfig | None = None):
    try:
        cls = EVALUATORS[name]
    except KeyError:
        raise ValueError(f"unknown evaluator {name!r}; available: {sorted(EVALUATORS)}") from None
    return cls(config)
