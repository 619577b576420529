"""Electromagnetic kernels for a small dielectric inclusion in free space.

Conventions
-----------
* Fields and dyads are complex ``numpy`` arrays; points broadcast over
  leading axes (``(..., 3)``).
* The vector "dot" ``u . v`` is the bilinear ``sum(u * v)`` (no implicit
  conjugation), as in the imaging formulas.
* Only the wavenumber ``kappa`` and background permittivity ``eps0`` enter;
  frequency and permeability are folded into ``kappa``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .sphere_math import SphereQuadrature, Triad, spherical_bessel_j

__all__ = [
    "FarFieldData",
    "Incidence",
    "InclusionSpec",
    "Medium",
    "TrialSpec",
    "far_field_amplitude",
    "green_dyad",
    "imag_green_dyad",
    "incident_plane_wave",
    "polarization_tensor_sphere",
    "sphere_factor",
    "synthesize_far_field",
]

COINCIDENCE_TOL = 1e-12


@dataclass(frozen=True)
class Medium:
    kappa: float
    eps0: float = 1.0

    def __post_init__(self):
        for name in ("kappa", "eps0"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and positive, got {value!r}")

    @property
    def wavelength(self) -> float:
        return 2.0 * math.pi / self.kappa

    @classmethod
    def from_wavelength(cls, wavelength: float, eps0: float = 1.0) -> "Medium":
        return cls(2.0 * math.pi / wavelength, eps0)


def sphere_factor(eps_r: float, volume_O: float) -> float:
    """Scalar ``m`` with ``M = m I`` for a sphere: ``3 eps_r/(eps_r+2) |O|``."""
    if eps_r <= 0:
        raise ValueError("relative permittivity must be positive")
    return 3.0 * eps_r / (eps_r + 2.0) * volume_O


def polarization_tensor_sphere(eps_r: float, volume_O: float) -> np.ndarray:
    """Polarization tensor of a spherical inclusion, ``3 eps_r/(eps_r+2) |O| I``."""
    return sphere_factor(eps_r, volume_O) * np.eye(3)


def _check_tensor(m: np.ndarray) -> np.ndarray:
    m = np.array(m, dtype=float)
    if m.shape != (3, 3):
        raise ValueError("polarization tensor must be 3x3")
    if not np.allclose(m, m.T, rtol=0, atol=1e-12 * max(1.0, np.abs(m).max())):
        raise ValueError("polarization tensor must be symmetric")
    if np.any(np.linalg.eigvalsh(m) <= 0):
        raise ValueError("polarization tensor must be positive definite")
    m.setflags(write=False)
    return m


@dataclass(frozen=True, eq=False)
class InclusionSpec:
    """The true inclusion ``z_D + rho O_D``.

    ``polarization`` defaults to the sphere tensor; any symmetric
    positive-definite matrix may be supplied for other shapes.
    """

    center: np.ndarray
    rho: float
    eps_r: float
    volume_O: float = 4.0 * math.pi / 3.0
    polarization: np.ndarray | None = None
    is_sphere: bool = field(init=False, default=True)

    def __post_init__(self):
        if self.rho <= 0 or self.eps_r <= 0 or self.volume_O <= 0:
            raise ValueError("rho, eps_r and volume_O must be positive")
        center = np.array(self.center, dtype=float).reshape(3)
        center.setflags(write=False)
        object.__setattr__(self, "center", center)
        if self.polarization is None:
            tensor = polarization_tensor_sphere(self.eps_r, self.volume_O)
        else:
            object.__setattr__(self, "is_sphere", False)
            tensor = self.polarization
        object.__setattr__(self, "polarization", _check_tensor(tensor))

    @property
    def contrast(self) -> float:
        """``1/eps_r - 1``."""
        return 1.0 / self.eps_r - 1.0


@dataclass(frozen=True, eq=False)
class TrialSpec:
    """The trial inclusion nucleated at each search point (its scale drops out)."""

    eps_r: float
    volume_O: float = 4.0 * math.pi / 3.0
    polarization: np.ndarray | None = None
    is_sphere: bool = field(init=False, default=True)

    def __post_init__(self):
        if self.eps_r <= 0 or self.volume_O <= 0:
            raise ValueError("eps_r and volume_O must be positive")
        if self.polarization is None:
            tensor = polarization_tensor_sphere(self.eps_r, self.volume_O)
        else:
            object.__setattr__(self, "is_sphere", False)
            tensor = self.polarization
        object.__setattr__(self, "polarization", _check_tensor(tensor))

    @property
    def contrast(self) -> float:
        return 1.0 / self.eps_r - 1.0


@dataclass(frozen=True, eq=False)
class Incidence:
    """Plane-wave illumination along ``triad.theta`` polarized by ``perp_{pol_index}``."""

    triad: Triad
    pol_index: int = 1

    def __post_init__(self):
        if self.pol_index not in (1, 2):
            raise ValueError("pol_index must be 1 or 2")

    @property
    def theta(self) -> np.ndarray:
        return self.triad.theta

    @property
    def polarization(self) -> np.ndarray:
        """Real direction ``theta x theta_perp`` of the incident electric field."""
        return np.cross(self.triad.theta, self.triad.perp(self.pol_index))


def incident_plane_wave(medium: Medium, inc: Incidence, x) -> np.ndarray:
    """``E0(x) = i kappa (theta x theta_perp) exp(i kappa theta.x)``; ``x`` is ``(..., 3)``."""
    x = np.asarray(x, dtype=float)
    phase = np.exp(1j * medium.kappa * (x @ inc.theta))
    return 1j * medium.kappa * phase[..., None] * inc.polarization


def green_dyad(medium: Medium, x, y) -> np.ndarray:
    """Outgoing dyadic Green's function ``-eps0 (I + grad grad^T / kappa^2) G``.

    ``G = exp(i kappa r)/(4 pi r)``. Expanded in closed form::

        Gamma = -eps0 G [(1 + i/kr - 1/kr^2) I + (-1 - 3i/kr + 3/kr^2) rhat rhat^T]

    Raises ``ValueError`` when ``kappa |x - y|`` falls below 1e-12.
    """
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r = np.linalg.norm(d, axis=-1)
    kr = medium.kappa * r
    if np.any(kr < COINCIDENCE_TOL):
        raise ValueError("green_dyad is singular at coincident points")
    rhat = d / r[..., None]
    g = np.asarray(np.exp(1j * kr) / (4.0 * math.pi * r))
    a = np.asarray(1.0 + 1j / kr - 1.0 / kr**2)
    b = np.asarray(-1.0 - 3j / kr + 3.0 / kr**2)
    outer = rhat[..., :, None] * rhat[..., None, :]
    dyad = a[..., None, None] * np.eye(3) + b[..., None, None] * outer
    return -medium.eps0 * g[..., None, None] * dyad


def imag_green_dyad(medium: Medium, x, y) -> np.ndarray:
    """Imaginary part of the dyadic Green's function via spherical Bessel functions.

    ``-(eps0 kappa/4pi) [2/3 j0(kr) I + j2(kr) (rhat rhat^T - I/3)]``; smooth
    everywhere, equal to ``-(eps0 kappa/6pi) I`` at ``x = y``.
    """
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r = np.linalg.norm(d, axis=-1)
    kr = medium.kappa * r
    j0 = spherical_bessel_j(0, kr)
    j2 = spherical_bessel_j(2, kr)
    safe = np.where(r > 0, r, 1.0)
    rhat = np.where((r > 0)[..., None], d / safe[..., None], 0.0)
    outer = rhat[..., :, None] * rhat[..., None, :]
    # At r = 0 j2 vanishes, so the undefined direction never contributes.
    body = (2.0 / 3.0) * np.asarray(j0)[..., None, None] * np.eye(3) + np.asarray(j2)[
        ..., None, None
    ] * (outer - np.eye(3) / 3.0)
    return -medium.eps0 * medium.kappa / (4.0 * math.pi) * body


def far_field_amplitude(medium: Medium, inclusion: InclusionSpec, inc: Incidence, xhat) -> np.ndarray:
    """Leading-order far-field amplitude of the inclusion at directions ``xhat``.

    ``-(kappa^2 rho^3/4pi)(1/eps_r - 1)(I - xhat xhat^T) M E0(z_D) exp(-i kappa xhat.z_D)``.
    Higher-order terms in ``rho`` are not modeled. ``xhat`` is ``(..., 3)``.
    """
    xhat = np.asarray(xhat, dtype=float)
    k = medium.kappa
    source = inclusion.polarization @ incident_plane_wave(medium, inc, inclusion.center)
    scale = -(k**2) * inclusion.rho**3 / (4.0 * math.pi) * inclusion.contrast
    tangential = source - (xhat @ source)[..., None] * xhat
    phase = np.exp(-1j * k * (xhat @ inclusion.center))
    return scale * phase[..., None] * tangential


@dataclass(frozen=True, eq=False)
class FarFieldData:
    """Far-field samples of one incidence on the nodes of ``quad``.

    ``samples`` has shape ``(quad.count, 3)``; ``corrupted`` marks data that
    carries measurement noise.
    """

    incidence: Incidence
    quad: SphereQuadrature
    samples: np.ndarray
    corrupted: bool = False

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=complex)
        if samples.shape != (self.quad.count, 3):
            raise ValueError(
                f"expected samples of shape ({self.quad.count}, 3), got {samples.shape}"
            )
        object.__setattr__(self, "samples", samples)


def synthesize_far_field(medium: Medium, inclusion: InclusionSpec, incidences, quad: SphereQuadrature):
    """Sample the far field of each incidence on the quadrature nodes."""
    incidences = list(incidences)
    if not incidences:
        raise ValueError("need at least one incidence")
    return [
        FarFieldData(inc, quad, far_field_amplitude(medium, inclusion, inc, quad.nodes))
        for inc in incidences
    ]
