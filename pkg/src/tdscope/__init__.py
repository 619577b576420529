"""Topological-derivative location of a small dielectric inclusion from far-field data."""

from .em_kernels import FarFieldData, Incidence, InclusionSpec, Medium, TrialSpec
from .imaging import ImageMap, SearchGrid
from .noise import NoiseModel
from .sphere_math import SphereQuadrature, Triad, build_quadrature

__all__ = [
    "FarFieldData",
    "ImageMap",
    "Incidence",
    "InclusionSpec",
    "Medium",
    "NoiseModel",
    "SearchGrid",
    "SphereQuadrature",
    "Triad",
    "TrialSpec",
    "build_quadrature",
]

__version__ = "0.1.0"
