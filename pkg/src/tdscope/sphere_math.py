"""Unit-sphere geometry, spherical Bessel functions and sphere quadrature.

Directions are plain ``numpy`` arrays of shape ``(3,)`` (or ``(n, 3)`` for
collections). Every integral over the unit sphere elsewhere in the package
goes through a :class:`SphereQuadrature`.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import assoc_legendre_p_all

__all__ = [
    "SERIES_SWITCH",
    "SphereQuadrature",
    "Triad",
    "build_quadrature",
    "fibonacci_directions",
    "orthonormal_triad",
    "spherical_bessel_j",
    "unit",
]

# The closed form of j_n cancels to a relative error of ~eps / x**(n + 3)
# near 0 (about 1e-7 for j2 at x = 0.01), so the series covers x < 1;
# 12 terms leave a truncation error below 1e-20 there.
SERIES_SWITCH = 1.0
_SERIES_TERMS = 12
_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


def unit(v) -> np.ndarray:
    """Return ``v`` normalized along its last axis."""
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norm == 0.0):
        raise ValueError("cannot normalize the zero vector")
    return v / norm


def _double_factorial(k: int) -> int:
    return math.prod(range(k, 0, -2)) if k > 0 else 1


def _series_coefficients(order: int) -> np.ndarray:
    # j_n(x) = x**n * sum_k (-x**2/2)**k / (k! (2n+2k+1)!!)
    return np.array(
        [
            (-0.5) ** k / (math.factorial(k) * _double_factorial(2 * order + 2 * k + 1))
            for k in range(_SERIES_TERMS)
        ]
    )


_SERIES = {n: _series_coefficients(n) for n in (0, 1, 2)}


def spherical_bessel_j(order: int, x):
    """Spherical Bessel function of the first kind, orders 0, 1 and 2.

    Parameters
    ----------
    order : int
        0, 1 or 2.
    x : float or array_like
        Non-negative argument(s).

    Returns
    -------
    float or ndarray
        ``j_order(x)``, same shape as ``x``. Arguments below
        :data:`SERIES_SWITCH` use a truncated Taylor series.
    """
    if order not in _SERIES:
        raise ValueError(f"unsupported order {order!r}; expected 0, 1 or 2")
    scalar = np.ndim(x) == 0
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x < 0):
        raise ValueError("spherical_bessel_j requires finite, non-negative arguments")

    small = x < SERIES_SWITCH
    out = np.empty_like(x)

    xs = x[small]
    x2 = xs * xs
    poly = np.polynomial.polynomial.polyval(x2, _SERIES[order])
    out[small] = xs**order * poly

    xl = x[~small]
    s, c = np.sin(xl), np.cos(xl)
    if order == 0:
        out[~small] = s / xl
    elif order == 1:
        out[~small] = s / xl**2 - c / xl
    else:
        out[~small] = (3.0 / xl**3 - 1.0 / xl) * s - 3.0 * c / xl**2
    return float(out) if scalar else out


def fibonacci_directions(n: int) -> np.ndarray:
    """Spherical Fibonacci lattice: ``n`` near-equidistributed unit vectors.

    Node ``k`` sits at height ``z = 1 - (2k + 1)/n`` and azimuth
    ``k`` times the golden angle. The result is deterministic in ``n``.
    """
    if n < 1:
        raise ValueError("need at least one direction")
    k = np.arange(n) + 0.5
    z = 1.0 - 2.0 * k / n
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = _GOLDEN_ANGLE * k
    return np.column_stack((r * np.cos(phi), r * np.sin(phi), z))


@dataclass(frozen=True, eq=False)
class SphereQuadrature:
    """Nodes and weights approximating ``integral over S^2 of f ds``.

    ``weights`` sum to ``4*pi`` (steradian). ``scheme_id`` records how the
    weights were obtained and ``degree`` the spherical-polynomial degree
    integrated exactly (``-1`` when no exactness is claimed).
    """

    nodes: np.ndarray
    weights: np.ndarray
    scheme_id: str
    degree: int = -1

    @property
    def count(self) -> int:
        return len(self.weights)

    @property
    def mean_weights(self) -> np.ndarray:
        """Weights of the normalized measure ``ds / 4pi`` (sum to one)."""
        return self.weights / (4.0 * math.pi)

    def integrate(self, values) -> np.ndarray:
        """Apply the rule to samples whose leading axis runs over nodes."""
        return np.tensordot(self.weights, np.asarray(values), axes=(0, 0))


def _zonal_moment_matrix(nodes: np.ndarray, degree: int) -> np.ndarray:
    # Rows: real spherical harmonics up to `degree` (unnormalized in phi),
    # built from orthonormal associated Legendre functions of z.
    z = np.clip(nodes[:, 2], -1.0, 1.0)
    phi = np.arctan2(nodes[:, 1], nodes[:, 0])
    legendre = assoc_legendre_p_all(degree, degree, z, norm=True)[0]
    rows = []
    for m in range(degree + 1):
        cos_m, sin_m = np.cos(m * phi), np.sin(m * phi)
        for ell in range(m, degree + 1):
            p = legendre[ell, m]
            rows.append(p * cos_m)
            if m > 0:
                rows.append(p * sin_m)
    return np.array(rows)


def _fitted_weights(nodes: np.ndarray, degree: int) -> np.ndarray:
    """Minimum-norm correction of equal weights making the rule exact to `degree`."""
    count = len(nodes)
    base = np.full(count, 4.0 * math.pi / count)
    moments = _zonal_moment_matrix(nodes, degree)
    # Only the constant row has a nonzero integral: 4*pi * P_0^0.
    target = np.zeros(len(moments))
    target[0] = 4.0 * math.pi * moments[0, 0]
    gram = moments @ moments.T
    correction = moments.T @ np.linalg.solve(gram, target - moments @ base)
    return base + correction


@functools.lru_cache(maxsize=16)
def _cached_quadrature(count: int, scheme: str) -> SphereQuadrature:
    nodes = fibonacci_directions(count)
    nodes.setflags(write=False)
    if scheme == "fibonacci":
        weights = np.full(count, 4.0 * math.pi / count)
        weights.setflags(write=False)
        return SphereQuadrature(nodes, weights, scheme, -1)

    # Largest degree whose harmonic space uses at most ~85% of the nodes,
    # lowered until every weight is positive.
    degree = max(int(math.isqrt(int(0.85 * count))) - 1, 0)
    while degree >= 0:
        weights = _fitted_weights(nodes, degree)
        if np.all(weights > 0):
            break
        degree -= 1
    weights.setflags(write=False)
    return SphereQuadrature(nodes, weights, scheme, degree)


def build_quadrature(count: int = 2000, scheme: str = "fibonacci-fitted") -> SphereQuadrature:
    """Build a sphere quadrature on ``count`` Fibonacci nodes.

    Parameters
    ----------
    count : int
        Number of nodes, at least 6.
    scheme : {"fibonacci-fitted", "fibonacci"}
        ``"fibonacci"`` uses equal weights ``4*pi/count``.
        ``"fibonacci-fitted"`` (default) perturbs the equal weights by the
        smallest amount that integrates every spherical polynomial up to a
        count-dependent degree exactly (degree 40 at 2000 nodes), keeping
        all weights positive. Plane waves ``exp(i k x.d)`` with
        ``k|d| <= 20`` are then integrated to ~1e-12.

    Results are cached per ``(count, scheme)``; arrays are read-only.
    """
    if count < 6:
        raise ValueError(f"quadrature needs at least 6 nodes, got {count}")
    if scheme not in ("fibonacci", "fibonacci-fitted"):
        raise ValueError(f"unknown quadrature scheme {scheme!r}")
    return _cached_quadrature(int(count), scheme)


@dataclass(frozen=True, eq=False)
class Triad:
    """Right-handed orthonormal frame ``(theta, perp1, perp2 = theta x perp1)``."""

    theta: np.ndarray
    perp1: np.ndarray
    perp2: np.ndarray

    def perp(self, index: int) -> np.ndarray:
        if index == 1:
            return self.perp1
        if index == 2:
            return self.perp2
        raise ValueError(f"polarization index must be 1 or 2, got {index!r}")


def orthonormal_triad(theta) -> Triad:
    """Complete the unit vector ``theta`` to a right-handed orthonormal frame.

    ``perp1`` is ``theta`` crossed with the coordinate axis along which
    ``theta`` has its smallest absolute component (ties: lowest index).
    """
    theta = unit(theta)
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(theta)))] = 1.0
    perp1 = unit(np.cross(theta, axis))
    perp2 = np.cross(theta, perp1)
    return Triad(theta, perp1, perp2)
