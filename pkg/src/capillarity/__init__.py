"""Parametric capillarity surfaces with prescribed anisotropy: discrete
functionals, a volume-constrained minimiser and an experiment harness."""

from .anisotropy import (
    AnisotropyField,
    check_conditions,
    cone_sign,
    make_field,
    radial_well,
    shifted_well,
    zero_field,
)
from .functionals import ISO_CONSTANT, EnergyBreakdown, breakdown, energy
from .solver import SolveResult, SolverConfig, minimize_isovolumetric, multiplier_bounds
from .spheremesh import SphereMesh, SurfaceMap, build_icosphere, init_sphere

__all__ = [
    "AnisotropyField",
    "EnergyBreakdown",
    "ISO_CONSTANT",
    "SolveResult",
    "SolverConfig",
    "SphereMesh",
    "SurfaceMap",
    "breakdown",
    "build_icosphere",
    "check_conditions",
    "cone_sign",
    "energy",
    "init_sphere",
    "make_field",
    "minimize_isovolumetric",
    "multiplier_bounds",
    "radial_well",
    "shifted_well",
    "zero_field",
]
