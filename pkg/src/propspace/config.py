"""Resolved run configuration: defaults, profiles, file overrides.

The shipped defaults follow the published study protocol (training count
10000, eps=0.95, validity scans of 5M x 5, full-space GA 800 x 40,
reduced-space GA sized 10 x m x 3 for 30 generations).  The desk profile
shrinks the expensive stages so a full pipeline finishes in minutes.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

DEFAULT_CONFIG = {
    "baseline": "builtin:e779a",
    "design_space": "default",
    "grid": {"chordwise": 51, "radial": 26},
    "sampling": {"count": 10000, "seed": 2024, "scheme": "monte-carlo-uniform"},
    "subspace": {"epsilon": 0.95, "kappa": 3},
    "validity": {"samples": 5_000_000, "runs": 5, "seed": 77},
    "hydro": {
        "evaluator": "blade-element-surrogate",
        "advance_ratio": 0.833,
        "rps": 36.0,
        "cavitation_index": 1.38,
        "density": 998.0,
        "surrogate": {},
    },
    "optimize": {
        "kt_band": 0.015,
        "seed": 99,
        "crossover_rate": 0.9,
        "crossover_eta": 15.0,
        "mutation_eta": 20.0,
        "full": {"population": 800, "generations": 40},
        "reduced": {"population": None, "generations": 30},
    },
}

PROFILES = {
    "paper": {},
    "desk": {
        "sampling": {"count": 1000},
        "validity": {"samples": 100_000, "runs": 3},
        "optimize": {"full": {"generations": 20}, "reduced": {"generations": 20}},
    },
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def resolve_config(
    config_path: str | Path | None = None,
    profile: str = "paper",
    seed: int | None = None,
) -> dict:
    """Defaults <- profile overlay <- config file <- CLI seed override."""
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; available: {sorted(PROFILES)}")
    cfg = _deep_merge(DEFAULT_CONFIG, PROFILES[profile])
    if config_path is not None:
        user = json.loads(Path(config_path).read_text())
        cfg = _deep_merge(cfg, user)
    if seed is not None:
        cfg["sampling"]["seed"] = seed
        cfg["validity"]["seed"] = seed
        cfg["optimize"]["seed"] = seed
    cfg["profile"] = profile
    return cfg
