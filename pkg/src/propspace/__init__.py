"""Reduced design subspaces and constrained multi-objective shape
optimization for parametric propeller blades."""

__version__ = "0.1.0"

from .baseline import BaselineBlade, builtin_baseline, load_baseline  # noqa: F401
from .design_space import DesignSpace, eval_distribution  # noqa: F401
from .surface import BladeSurface, apply_design_vector, mesh_node_weights  # noqa: F401
