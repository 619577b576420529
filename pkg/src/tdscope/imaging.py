"""Topological-derivative imaging from far-field data.

Sphere integrals here use the normalized surface measure ``ds/4pi`` (the
mean over directions), so that the plane-wave average equals ``j0`` exactly:
``mean_{xhat} exp(i kappa xhat.d) = j0(kappa |d|)``. All closed forms below
are written for that measure.

Search points are ``(3,)`` or ``(m, 3)`` arrays; functionals return a float
or an ``(m,)`` array accordingly.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .em_kernels import (
    FarFieldData,
    Incidence,
    InclusionSpec,
    Medium,
    TrialSpec,
    imag_green_dyad,
    incident_plane_wave,
)
from .sphere_math import SphereQuadrature

__all__ = [
    "FarFieldData",
    "ImageMap",
    "Peak",
    "SearchGrid",
    "group_by_direction",
    "herglotz",
    "herglotz_closed_form",
    "locate_peak",
    "sweep_grid",
    "td_multi",
    "td_multi_closed_form",
    "td_single",
    "td_single_closed_form",
]

# Rows of search points per block; bounds the (rows x nodes) phase matrix.
CHUNK_ROWS = 2048


def _as_points(z):
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != 3:
        raise ValueError("points must have a trailing axis of length 3")
    return z.reshape(-1, 3), z.ndim == 1


def _herglotz_stacked(samples: np.ndarray, quad: SphereQuadrature, kappa: float, points: np.ndarray):
    """Herglotz transform of several densities at once.

    ``samples`` is ``(nodes, k)`` (k stacked scalar densities); returns
    ``(len(points), k)``.
    """
    weighted = quad.mean_weights[:, None] * samples
    out = np.empty((len(points), samples.shape[1]), dtype=complex)
    for start in range(0, len(points), CHUNK_ROWS):
        block = points[start : start + CHUNK_ROWS]
        phase = np.exp(1j * kappa * (block @ quad.nodes.T))
        out[start : start + CHUNK_ROWS] = phase @ weighted
    return out


def herglotz(data_samples, quad: SphereQuadrature, medium: Medium, z) -> np.ndarray:
    """Electric Herglotz wave ``mean over xhat of Phi(xhat) exp(i kappa xhat.z)``.

    Parameters
    ----------
    data_samples : array_like, shape (quad.count, 3)
        Tangential density on the quadrature nodes.
    quad : SphereQuadrature
    medium : Medium
    z : array_like, shape (3,) or (m, 3)

    Returns
    -------
    ndarray, shape (3,) or (m, 3)
    """
    samples = np.asarray(data_samples, dtype=complex)
    if samples.shape != (quad.count, 3):
        raise ValueError(
            f"density has shape {samples.shape}, quadrature expects ({quad.count}, 3)"
        )
    points, single = _as_points(z)
    out = _herglotz_stacked(samples, quad, medium.kappa, points)
    return out[0] if single else out


def herglotz_closed_form(medium: Medium, inclusion: InclusionSpec, inc: Incidence, z) -> np.ndarray:
    """Herglotz wave of the leading-order far field, in closed form.

    ``kappa rho^3/eps0 (1/eps_r - 1) Im Gamma(z, z_D) M E0(z_D)``.
    """
    points, single = _as_points(z)
    source = inclusion.polarization @ incident_plane_wave(medium, inc, inclusion.center)
    im_gamma = imag_green_dyad(medium, points, inclusion.center)
    scale = medium.kappa * inclusion.rho**3 / medium.eps0 * inclusion.contrast
    out = scale * (im_gamma @ source)
    return out[0] if single else out


def _trial_factor(medium: Medium, trial: TrialSpec) -> float:
    # -(kappa^2 / 4pi)(1/eps2 - 1)
    return -(medium.kappa**2) / (4.0 * math.pi) * trial.contrast


def _td_sum(datasets: Sequence[FarFieldData], medium: Medium, trial: TrialSpec, points: np.ndarray):
    """Sum over datasets of the single-measurement functional at ``points``."""
    quad = datasets[0].quad
    if any(d.quad is not quad for d in datasets):
        raise ValueError("all datasets must share one quadrature")
    stacked = np.concatenate([d.samples for d in datasets], axis=1)
    h = _herglotz_stacked(stacked, quad, medium.kappa, points)
    h = h.reshape(len(points), len(datasets), 3)

    thetas = np.array([d.incidence.theta for d in datasets])
    pols = np.array([d.incidence.polarization for d in datasets])
    # M_delta E0(z) = i kappa exp(i kappa theta.z) M_delta b
    trial_pols = pols @ trial.polarization.T
    phase = np.exp(1j * medium.kappa * (points @ thetas.T))
    projected = np.einsum("mdc,dc->md", h.conj(), trial_pols)
    total = (1j * medium.kappa * phase * projected).real.sum(axis=1)
    return _trial_factor(medium, trial) * total


def td_single(data: FarFieldData, medium: Medium, trial: TrialSpec, z_S):
    """Topological derivative of the far-field misfit for one incidence.

    ``-(kappa^2/4pi)(1/eps2 - 1) Re{ conj(H[data](z_S)) . M_delta E0(z_S) }``
    with ``H`` the quadrature Herglotz wave and ``E0`` the data's own
    incident field.
    """
    points, single = _as_points(z_S)
    out = _td_sum([data], medium, trial, points)
    return float(out[0]) if single else out


def td_single_closed_form(medium: Medium, inclusion: InclusionSpec, trial: TrialSpec, inc: Incidence, z_S):
    """Leading-order single-measurement functional in terms of ``Im Gamma``.

    ``-(rho^3 kappa^3 C/(4 pi eps0)) Re{ Im Gamma(z_S, z_D) M_rho conj(E0(z_D)) . M_delta E0(z_S) }``
    with ``C = (1/eps1 - 1)(1/eps2 - 1)``.
    """
    points, single = _as_points(z_S)
    k = medium.kappa
    c_eps = inclusion.contrast * trial.contrast
    im_gamma = imag_green_dyad(medium, points, inclusion.center)
    left = im_gamma @ (inclusion.polarization @ incident_plane_wave(medium, inc, inclusion.center).conj())
    right = incident_plane_wave(medium, inc, points) @ trial.polarization.T
    value = np.sum(left * right, axis=-1).real
    out = -(inclusion.rho**3) * k**3 * c_eps / (4.0 * math.pi * medium.eps0) * value
    return float(out[0]) if single else out


def group_by_direction(datasets: Sequence[FarFieldData]) -> list[tuple[FarFieldData, FarFieldData]]:
    """Pair datasets into ``(pol 1, pol 2)`` per incidence direction.

    Raises ``ValueError`` unless every direction carries exactly one dataset
    of each polarization.
    """
    groups: dict[tuple, dict[int, FarFieldData]] = {}
    for d in datasets:
        key = tuple(np.round(d.incidence.theta, 12))
        slot = groups.setdefault(key, {})
        if d.incidence.pol_index in slot:
            raise ValueError(f"duplicate polarization {d.incidence.pol_index} for direction {key}")
        slot[d.incidence.pol_index] = d
    pairs = []
    for key, slot in groups.items():
        if set(slot) != {1, 2}:
            raise ValueError(f"direction {key} lacks a complete polarization pair")
        pairs.append((slot[1], slot[2]))
    return pairs


def td_multi(datasets: Sequence[FarFieldData], medium: Medium, trial: TrialSpec, z_S):
    """Multi-measurement functional: ``(1/n) sum_{j, l} td_single``.

    ``n`` is the number of incidence directions; each must come with both
    polarizations. The weight is ``1/n``, not ``1/(2n)``.
    """
    datasets = list(datasets)
    if not datasets:
        raise ValueError("need at least one dataset")
    n = len(group_by_direction(datasets))
    points, single = _as_points(z_S)
    out = _td_sum(datasets, medium, trial, points) / n
    return float(out[0]) if single else out


def td_multi_closed_form(medium: Medium, inclusion: InclusionSpec, trial: TrialSpec, z_S):
    """Large-``n`` limit of :func:`td_multi`.

    ``(rho^3 kappa^4/eps0^2) C Re{ Im Gamma M_rho : M_delta Im Gamma }`` with
    ``A : B = sum_ij A_ij B_ij``.
    """
    points, single = _as_points(z_S)
    im_gamma = imag_green_dyad(medium, points, inclusion.center)
    left = im_gamma @ inclusion.polarization
    right = trial.polarization @ im_gamma
    contraction = np.sum(left * right, axis=(-2, -1))
    c_eps = inclusion.contrast * trial.contrast
    out = inclusion.rho**3 * medium.kappa**4 / medium.eps0**2 * c_eps * contraction
    return float(out[0]) if single else out


@dataclass(frozen=True, eq=False)
class SearchGrid:
    """Rectilinear grid ``origin + spacing * (ix, iy, iz)``."""

    origin: np.ndarray
    spacing: float
    dims: tuple[int, int, int]

    def __post_init__(self):
        origin = np.array(self.origin, dtype=float).reshape(3)
        origin.setflags(write=False)
        object.__setattr__(self, "origin", origin)
        dims = tuple(int(n) for n in self.dims)
        if len(dims) != 3 or min(dims) < 1:
            raise ValueError("dims must be three positive integers")
        object.__setattr__(self, "dims", dims)
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")

    @classmethod
    def centered(cls, center, span: float, points_per_axis: int) -> "SearchGrid":
        """Cube of side ``span`` with ``points_per_axis`` nodes per edge."""
        spacing = span / (points_per_axis - 1) if points_per_axis > 1 else span
        origin = np.asarray(center, dtype=float) - 0.5 * span
        if points_per_axis == 1:
            origin = np.asarray(center, dtype=float)
        return cls(origin, spacing, (points_per_axis,) * 3)

    @property
    def size(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    def axis(self, i: int) -> np.ndarray:
        return self.origin[i] + self.spacing * np.arange(self.dims[i])

    def points(self) -> np.ndarray:
        """All grid points, ``(size, 3)``, x fastest then y then z."""
        z, y, x = np.meshgrid(self.axis(2), self.axis(1), self.axis(0), indexing="ij")
        return np.column_stack((x.ravel(), y.ravel(), z.ravel()))

    def point(self, flat_index: int) -> np.ndarray:
        return self.origin + self.spacing * np.array(self.unravel(flat_index), dtype=float)

    def unravel(self, flat_index: int) -> tuple[int, int, int]:
        iz, iy, ix = np.unravel_index(flat_index, self.dims[::-1])
        return int(ix), int(iy), int(iz)


class Peak(NamedTuple):
    point: np.ndarray
    value: float
    fwhm: float
    index: tuple[int, int, int]


@dataclass(frozen=True, eq=False)
class ImageMap:
    grid: SearchGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if values.size != self.grid.size:
            raise ValueError("one value per grid point required")
        object.__setattr__(self, "values", values)

    def volume(self) -> np.ndarray:
        """Values as an ``(nz, ny, nx)`` array."""
        return self.values.reshape(self.grid.dims[::-1])

    @cached_property
    def peak(self) -> Peak:
        return locate_peak(self)


def sweep_grid(
    grid: SearchGrid,
    functional: Callable[[np.ndarray], np.ndarray],
    threads: int = 1,
    chunk_rows: int = CHUNK_ROWS,
) -> ImageMap:
    """Evaluate ``functional`` on every grid point.

    ``functional`` takes an ``(m, 3)`` array of search points and returns
    ``m`` values; it must be pure. Blocks of ``chunk_rows`` points are
    evaluated (optionally on ``threads`` workers) and reassembled in scan
    order, so the result does not depend on ``threads``.
    """
    points = grid.points()
    blocks = [points[i : i + chunk_rows] for i in range(0, len(points), chunk_rows)]

    def run(block):
        return np.asarray(functional(block), dtype=float).reshape(len(block))

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    return ImageMap(grid, np.concatenate(parts))


def _half_width(line: np.ndarray, p: int, half: float, step: int) -> float | None:
    k = p
    while 0 <= k + step < len(line):
        nxt = k + step
        if line[nxt] < half:
            # linear interpolation between line[k] >= half > line[nxt]
            return abs(k - p) + (line[k] - half) / (line[k] - line[nxt])
        k = nxt
    return None


def locate_peak(image: ImageMap) -> Peak:
    """Argmax of the map and its full width at half maximum.

    The argmax is the first maximal point in scan order. Along each axis
    with more than one node, the half-maximum crossings on either side of
    the peak are located by linear interpolation; if one side never drops
    below half maximum the other side's half-width is mirrored. The FWHM
    reported is the mean over those axes, in length units.
    """
    values = image.values
    if np.ptp(values) == 0:
        raise ValueError("cannot locate the peak of a constant map")
    flat = int(np.argmax(values))
    peak_value = float(values[flat])
    if peak_value <= 0:
        raise ValueError("half-maximum undefined for a non-positive peak")
    grid = image.grid
    idx = grid.unravel(flat)
    vol = image.volume()
    half = 0.5 * peak_value

    widths = []
    for axis in range(3):
        if grid.dims[axis] < 2:
            continue
        sl = [idx[2], idx[1], idx[0]]
        sl[2 - axis] = slice(None)
        line = vol[tuple(sl)]
        left = _half_width(line, idx[axis], half, -1)
        right = _half_width(line, idx[axis], half, +1)
        if left is None and right is None:
            width = float(len(line))
        else:
            width = (left if left is not None else right) + (right if right is not None else left)
        widths.append(width * grid.spacing)
    fwhm = float(np.mean(widths)) if widths else grid.spacing
    return Peak(grid.point(flat), peak_value, fwhm, idx)
