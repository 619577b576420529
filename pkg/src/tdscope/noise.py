"""Measurement noise: sampling, corruption, closed-form statistics, Monte Carlo.

The noise is a tangential circular complex Gaussian white noise on the unit
sphere, delta-correlated with respect to the normalized measure ``ds/4pi``
used by :mod:`tdscope.imaging`. On a quadrature with weights ``w_i`` (summing
to ``4pi``) node ``i`` therefore carries covariance ``(4pi sigma^2 / w_i)``
times the tangential projector, which makes the Herglotz transform of the
discrete noise reproduce the continuum covariance
``-(4 pi sigma^2/(kappa eps0)) Im Gamma(z, z')`` in expectation.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .em_kernels import (
    FarFieldData,
    Incidence,
    InclusionSpec,
    Medium,
    TrialSpec,
    imag_green_dyad,
    synthesize_far_field,
)
from .imaging import td_multi
from .sphere_math import SphereQuadrature, fibonacci_directions, orthonormal_triad

__all__ = [
    "CovarianceSample",
    "NoiseModel",
    "NoiseStudyReport",
    "corrupt",
    "herglotz_noise_covariance",
    "monte_carlo_image_stats",
    "multi_incidences",
    "sample_tangential_noise",
    "theoretical_covariance",
    "theoretical_snr",
    "theoretical_variance",
]


@dataclass(frozen=True)
class NoiseModel:
    sigma: float
    seed: int = 0

    def __post_init__(self):
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise ValueError("sigma must be finite and non-negative")


def sample_tangential_noise(model: NoiseModel, quad: SphereQuadrature, rng: np.random.Generator) -> np.ndarray:
    """Draw one realization of the noise on the nodes of ``quad``.

    Each node gets a C^3 vector whose real and imaginary parts are i.i.d.
    ``N(0, 2 pi sigma^2 / w_i)``, projected onto the plane tangent to the
    node. Returns ``(quad.count, 3)`` complex.
    """
    raw = rng.standard_normal((quad.count, 3, 2))
    if model.sigma == 0:
        return np.zeros((quad.count, 3), dtype=complex)
    scale = model.sigma * np.sqrt(2.0 * math.pi / quad.weights)
    xi = (raw[..., 0] + 1j * raw[..., 1]) * scale[:, None]
    nodes = quad.nodes
    return xi - np.sum(xi * nodes, axis=1)[:, None] * nodes


def corrupt(data, model: NoiseModel, rng: np.random.Generator):
    """Add fresh independent noise to one dataset or to each of a sequence.

    Datasets in a sequence are corrupted in order from the same generator,
    so their noises are independent.
    """
    if isinstance(data, FarFieldData):
        noise = sample_tangential_noise(model, data.quad, rng)
        return replace(data, samples=data.samples + noise, corrupted=True)
    return [corrupt(d, model, rng) for d in data]


def herglotz_noise_covariance(medium: Medium, model: NoiseModel, z, z2) -> np.ndarray:
    """``E[H[xi](z) conj(H[xi](z2))^T] = -(4 pi sigma^2/(kappa eps0)) Im Gamma(z, z2)``."""
    im_gamma = imag_green_dyad(medium, z, z2)
    return -4.0 * math.pi * model.sigma**2 / (medium.kappa * medium.eps0) * im_gamma


def _sphere_only(spec, what: str):
    if not spec.is_sphere:
        raise ValueError(f"closed-form noise statistics need a spherical {what}")


def theoretical_covariance(medium: Medium, trial: TrialSpec, model: NoiseModel, n: int, z, z2):
    """Large-``n`` covariance of the noisy multi-measurement image.

    ``b^2 sigma^2 kappa^4/(2n) ||Im Gamma(z, z2)||_F^2`` with
    ``b = 3|O_S|(1/eps2 - 1)/(eps0 (2/eps2 + 1))``. It comes from
    ``a = (kappa^2/4pi)(1/eps2 - 1)`` and the sphere tensor
    ``M_delta = 3|O_S|/(2/eps2 + 1) I`` after the direction sum is replaced
    by its ``Im Gamma`` limit.
    """
    _sphere_only(trial, "trial inclusion")
    if n < 1:
        raise ValueError("n must be at least 1")
    inv = 1.0 / trial.eps_r
    b = 3.0 * trial.volume_O * (inv - 1.0) / (medium.eps0 * (2.0 * inv + 1.0))
    im_gamma = imag_green_dyad(medium, z, z2)
    frob2 = np.sum(im_gamma**2, axis=(-2, -1))
    out = b**2 * model.sigma**2 * medium.kappa**4 / (2.0 * n) * frob2
    return float(out) if np.ndim(out) == 0 else out


def theoretical_variance(medium: Medium, trial: TrialSpec, model: NoiseModel, n: int, z=(0.0, 0.0, 0.0)) -> float:
    """Image variance at any point; ``||Im Gamma(z, z)|| = sqrt(3) eps0 kappa / 6pi``."""
    return theoretical_covariance(medium, trial, model, n, z, z)


def theoretical_snr(medium: Medium, inclusion: InclusionSpec, model: NoiseModel, n: int) -> float:
    """Peak signal-to-noise ratio of the multi-measurement image.

    ``3 sqrt(2n)/(sigma eps0) |1/eps1 - 1| / |2/eps1 + 1| rho^3 |O_D| kappa^2 ||Im Gamma(z_D, z_D)||``.
    Infinite for ``sigma = 0`` unless the contrast vanishes.
    """
    _sphere_only(inclusion, "true inclusion")
    inv = 1.0 / inclusion.eps_r
    norm_im = math.sqrt(3.0) * medium.eps0 * medium.kappa / (6.0 * math.pi)
    signal = (
        3.0 * math.sqrt(2.0 * n) / medium.eps0 * abs(inv - 1.0) / abs(2.0 * inv + 1.0)
        * inclusion.rho**3 * inclusion.volume_O * medium.kappa**2 * norm_im
    )
    if signal == 0:
        return 0.0
    if model.sigma == 0:
        return math.inf
    return signal / model.sigma


def multi_incidences(n: int) -> list[Incidence]:
    """``n`` Fibonacci directions, each with polarizations 1 and 2."""
    return [
        Incidence(triad, ell)
        for triad in (orthonormal_triad(t) for t in fibonacci_directions(n))
        for ell in (1, 2)
    ]


@dataclass
class CovarianceSample:
    separation: float
    empirical: float
    theoretical: float
    stderr: float


@dataclass
class NoiseStudyReport:
    n_directions: int
    trials: int
    sigma: float
    clean_value: float
    empirical_mean: float
    empirical_variance: float
    theoretical_variance: float
    empirical_snr: float | None
    theoretical_snr: float | None
    covariance_samples: list[CovarianceSample] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _run_trials(datasets, medium, trial, model, points, seeds, threads):
    def one(seed):
        rng = np.random.Generator(np.random.PCG64(seed))
        return td_multi(corrupt(datasets, model, rng), medium, trial, points)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, seeds))
    else:
        rows = [one(s) for s in seeds]
    return np.array(rows)


def monte_carlo_image_stats(
    medium: Medium,
    inclusion: InclusionSpec,
    trial: TrialSpec,
    model: NoiseModel,
    n_directions: int,
    quad: SphereQuadrature,
    trials: int,
    separations: Sequence[float] = (),
    probe_direction=(0.0, 0.0, 1.0),
    rng_stream: np.random.SeedSequence | None = None,
    threads: int = 1,
) -> NoiseStudyReport:
    """Monte Carlo statistics of the noisy multi-measurement image at ``z_D``.

    Each trial corrupts the synthetic data of ``n_directions`` x 2
    incidences with independent noise and evaluates :func:`td_multi` at
    ``z_D`` and at ``z_D + s * probe_direction`` for each separation ``s``.
    Trial ``t`` draws from child ``t`` of ``rng_stream`` (default: a
    ``SeedSequence`` of ``model.seed``), so results do not depend on
    ``threads``.

    The empirical SNR is the trial mean at ``z_D`` over the sample standard
    deviation; covariances use ``ddof=1``.
    """
    if trials < 2:
        raise ValueError("need at least two trials")
    stream = rng_stream if rng_stream is not None else np.random.SeedSequence(model.seed)
    seeds = stream.spawn(trials)

    datasets = synthesize_far_field(medium, inclusion, multi_incidences(n_directions), quad)
    direction = np.asarray(probe_direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    points = np.vstack([inclusion.center] + [inclusion.center + s * direction for s in separations])

    clean = td_multi(datasets, medium, trial, points)
    values = _run_trials(datasets, medium, trial, model, points, seeds, threads)

    # shifted-data moments: exact zeros when every trial is identical (sigma = 0)
    shifted = values - values[0]
    centered = shifted - shifted.mean(axis=0)
    mean = float(values[0, 0] + shifted[:, 0].mean())
    var = float(np.sum(centered[:, 0] ** 2) / (trials - 1))
    std = math.sqrt(var)
    empirical_snr = mean / std if std > 0 else None
    theo_snr = theoretical_snr(medium, inclusion, model, n_directions) if inclusion.is_sphere else None
    if theo_snr is not None and not math.isfinite(theo_snr):
        theo_snr = None

    samples = []
    for k, s in enumerate(separations, start=1):
        prod = centered[:, 0] * centered[:, k]
        cov = float(prod.sum() / (trials - 1))
        stderr = float(prod.std(ddof=1) / math.sqrt(trials))
        theo = theoretical_covariance(medium, trial, model, n_directions, points[0], points[k])
        samples.append(CovarianceSample(float(s), cov, float(theo), stderr))

    return NoiseStudyReport(
        n_directions=n_directions,
        trials=trials,
        sigma=model.sigma,
        clean_value=float(clean[0]),
        empirical_mean=mean,
        empirical_variance=var,
        theoretical_variance=theoretical_variance(medium, trial, model, n_directions, points[0]),
        empirical_snr=empirical_snr,
        theoretical_snr=theo_snr,
        covariance_samples=samples,
    )
