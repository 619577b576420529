"""Noise sampling, corruption, closed-form statistics and Monte Carlo."""

import math
from dataclasses import replace

import numpy as np
import pytest

from tdscope.em_kernels import InclusionSpec, Medium, TrialSpec, imag_green_dyad, synthesize_far_field
from tdscope.imaging import SearchGrid, herglotz, sweep_grid, td_multi, td_multi_closed_form
from tdscope.noise import (
    NoiseModel,
    corrupt,
    herglotz_noise_covariance,
    monte_carlo_image_stats,
    multi_incidences,
    sample_tangential_noise,
    theoretical_covariance,
    theoretical_snr,
    theoretical_variance,
)
from tdscope.sphere_math import build_quadrature, orthonormal_triad

KAPPA = 2 * math.pi
MEDIUM = Medium(KAPPA)
Z_D = np.array([0.13, -0.21, 0.07])
INCLUSION = InclusionSpec(Z_D, 0.05, 3.0)
TRIAL = TrialSpec(2.0)


@pytest.fixture(scope="module")
def small_quad():
    return build_quadrature(100)


# -- sampling ---------------------------------------------------------------------


def test_zero_sigma_gives_zeros(small_quad):
    xi = sample_tangential_noise(NoiseModel(0.0), small_quad, np.random.default_rng(0))
    assert xi.shape == (100, 3) and np.all(xi == 0)


@pytest.mark.parametrize("sigma", [-1.0, math.nan, math.inf])
def test_noise_model_rejects_bad_sigma(sigma):
    with pytest.raises(ValueError):
        NoiseModel(sigma)


def test_noise_is_tangential(small_quad):
    xi = sample_tangential_noise(NoiseModel(2.0), small_quad, np.random.default_rng(1))
    normal = np.abs(np.sum(xi * small_quad.nodes, axis=1))
    assert np.all(normal < 1e-12 * np.linalg.norm(xi, axis=1))


@pytest.fixture(scope="module")
def draws(small_quad):
    rng = np.random.default_rng(2)
    model = NoiseModel(0.7)
    return np.array([sample_tangential_noise(model, small_quad, rng) for _ in range(10_000)])


def test_noise_moments_at_one_node(small_quad, draws):
    # per tangential unit direction: E|xi.t|^2 = 4 pi sigma^2 / w_i (delta w.r.t. the mean measure)
    i = 17
    triad = orthonormal_triad(small_quad.nodes[i])
    expected = 4 * math.pi * 0.7**2 / small_quad.weights[i]
    for t in (triad.perp1, triad.perp2):
        comp = draws[:, i] @ t
        assert np.mean(np.abs(comp) ** 2) == pytest.approx(expected, rel=0.05)


def test_noise_mean_zero(draws):
    n = len(draws)
    for part in (draws.real, draws.imag):
        mean, se = part.mean(axis=0), part.std(axis=0) / math.sqrt(n)
        assert np.all(np.abs(mean) <= 4 * se + 1e-15)


def test_noise_is_circular(draws, small_quad):
    # non-conjugated second moment E[xi xi^T] vanishes; compare with the conjugated one
    i = 5
    x = draws[:, i]
    conj = np.einsum("ta,tb->ab", x, x.conj()) / len(x)
    plain = np.einsum("ta,tb->ab", x, x) / len(x)
    scale = np.trace(conj).real
    assert np.abs(plain).max() < 5 * scale / math.sqrt(len(x))


def test_noise_independent_across_nodes(draws):
    a, b = draws[:, 3], draws[:, 60]
    cross = np.mean(a[:, 0] * b[:, 0].conj())
    se = np.sqrt(np.mean(np.abs(a[:, 0]) ** 2) * np.mean(np.abs(b[:, 0]) ** 2) / len(a))
    assert abs(cross) < 4 * se


# -- corruption -------------------------------------------------------------------


@pytest.fixture(scope="module")
def pair(small_quad):
    return synthesize_far_field(MEDIUM, INCLUSION, multi_incidences(1), small_quad)


def test_zero_sigma_corruption_is_identity(pair):
    noisy = corrupt(pair[0], NoiseModel(0.0), np.random.default_rng(0))
    np.testing.assert_array_equal(noisy.samples, pair[0].samples)
    assert noisy.corrupted and not pair[0].corrupted


def test_corruption_is_unbiased(pair):
    rng = np.random.default_rng(3)
    model = NoiseModel(1e-3)
    node = 10
    stack = np.array([corrupt(pair[0], model, rng).samples[node] for _ in range(1000)])
    clean = pair[0].samples[node]
    for part, ref in ((stack.real, clean.real), (stack.imag, clean.imag)):
        se = part.std(axis=0) / math.sqrt(len(part))
        assert np.all(np.abs(part.mean(axis=0) - ref) <= 3 * se + 1e-18)


def test_two_datasets_get_independent_noise(pair):
    rng = np.random.default_rng(4)
    model = NoiseModel(1.0)
    a, b = [], []
    for _ in range(1000):
        d1, d2 = corrupt(pair, model, rng)
        a.append(d1.samples[10, 0] - pair[0].samples[10, 0])
        b.append(d2.samples[10, 0] - pair[1].samples[10, 0])
    a, b = np.array(a), np.array(b)
    cross = np.mean(a * b.conj())
    se = np.sqrt(np.mean(np.abs(a) ** 2) * np.mean(np.abs(b) ** 2) / len(a))
    assert abs(cross) < 3 * se


def test_corruption_reproducible_from_seed(pair):
    model = NoiseModel(0.5)
    a = corrupt(pair, model, np.random.default_rng(9))
    b = corrupt(pair, model, np.random.default_rng(9))
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.samples, y.samples)


# -- Herglotz of noise ----------------------------------------------------------------


def test_herglotz_noise_covariance_coincidence():
    model = NoiseModel(0.3)
    cov = herglotz_noise_covariance(MEDIUM, model, Z_D, Z_D)
    np.testing.assert_allclose(cov, 2 * 0.3**2 / 3 * np.eye(3), rtol=1e-14)
    assert np.all(herglotz_noise_covariance(MEDIUM, NoiseModel(0.0), Z_D, Z_D + 0.1) == 0)


@pytest.mark.parametrize("kr", [0.0, 1.0, 2.0])
def test_herglotz_noise_covariance_monte_carlo(kr):
    quad = build_quadrature(2000)
    model = NoiseModel(0.5)
    z = np.array([0.1, 0.0, -0.2])
    z2 = z + kr / KAPPA * np.array([0.6, 0.0, 0.8])
    rng = np.random.default_rng(11)
    trials = 2000
    h1, h2 = [], []
    for _ in range(trials):
        xi = sample_tangential_noise(model, quad, rng)
        h = herglotz(xi, quad, MEDIUM, np.vstack([z, z2]))
        h1.append(h[0])
        h2.append(h[1])
    h1, h2 = np.array(h1), np.array(h2)
    empirical = np.einsum("ta,tb->ab", h1, h2.conj()) / trials
    theory = herglotz_noise_covariance(MEDIUM, model, z, z2)
    assert np.linalg.norm(empirical - theory) < 0.10 * np.linalg.norm(theory)


# -- closed-form image statistics -------------------------------------------------


def test_variance_spot_value():
    # b = 3 (4pi/3)(1/2 - 1)/(1 (2/2 + 1)) = -pi ; ||Im Gamma(z,z)||^2 = 3 (kappa/6pi)^2 = 1/3
    # Var = pi^2 * 0.01 * (2pi)^4 / 20 * (1/3) = 16 pi^6 / 6000
    got = theoretical_variance(MEDIUM, TRIAL, NoiseModel(0.1), 10)
    assert got == pytest.approx(16 * math.pi**6 / 6000, rel=1e-13)
    assert got == pytest.approx(2.5637045, rel=1e-7)


def test_variance_is_translation_invariant():
    model = NoiseModel(0.2)
    ref = theoretical_variance(MEDIUM, TRIAL, model, 7)
    for z in ([1, 2, 3], [-4.0, 0.5, 9.0]):
        assert theoretical_variance(MEDIUM, TRIAL, model, 7, z) == pytest.approx(ref, rel=1e-14)


def test_variance_scales_with_sigma_squared():
    a = theoretical_variance(MEDIUM, TRIAL, NoiseModel(0.2), 7)
    assert theoretical_variance(MEDIUM, TRIAL, NoiseModel(0.4), 7) == pytest.approx(4 * a, rel=1e-14)


def test_covariance_reduces_to_variance_and_scales_with_n():
    model = NoiseModel(0.2)
    assert theoretical_covariance(MEDIUM, TRIAL, model, 5, Z_D, Z_D) == theoretical_variance(MEDIUM, TRIAL, model, 5, Z_D)
    z2 = Z_D + [0.2, 0.1, 0.0]
    ratio = theoretical_covariance(MEDIUM, TRIAL, model, 8, Z_D, z2) / theoretical_covariance(MEDIUM, TRIAL, model, 32, Z_D, z2)
    assert ratio == pytest.approx(4.0, rel=1e-14)
    assert theoretical_covariance(MEDIUM, TRIAL, NoiseModel(0.0), 5, Z_D, z2) == 0


def test_covariance_is_frobenius_norm_of_imag_green():
    model = NoiseModel(0.3)
    z2 = Z_D + [0.1, -0.3, 0.25]
    b = 3 * TRIAL.volume_O * (1 / 2 - 1) / (2 / 2 + 1)
    im = imag_green_dyad(MEDIUM, Z_D, z2)
    want = b**2 * 0.09 * KAPPA**4 / (2 * 6) * np.sum(im * im)
    assert theoretical_covariance(MEDIUM, TRIAL, model, 6, Z_D, z2) == pytest.approx(want, rel=1e-13)


def test_statistics_require_spheres():
    trial = TrialSpec(2.0, polarization=np.eye(3))
    with pytest.raises(ValueError):
        theoretical_variance(MEDIUM, trial, NoiseModel(0.1), 10)
    inclusion = InclusionSpec(Z_D, 0.05, 3.0, polarization=np.eye(3))
    with pytest.raises(ValueError):
        theoretical_snr(MEDIUM, inclusion, NoiseModel(0.1), 10)
    with pytest.raises(ValueError):
        theoretical_covariance(MEDIUM, TRIAL, NoiseModel(0.1), 0, Z_D, Z_D)


def test_snr_without_contrast_is_zero():
    assert theoretical_snr(MEDIUM, InclusionSpec(Z_D, 0.05, 1.0), NoiseModel(0.1), 10) == 0


def test_snr_noise_free_is_infinite():
    assert theoretical_snr(MEDIUM, INCLUSION, NoiseModel(0.0), 10) == math.inf


def test_snr_scaling_laws():
    model = NoiseModel(0.1)
    base = theoretical_snr(MEDIUM, INCLUSION, model, 10)
    assert theoretical_snr(MEDIUM, INCLUSION, model, 40) == pytest.approx(2 * base, rel=1e-14)
    assert theoretical_snr(Medium(2 * KAPPA), INCLUSION, model, 10) == pytest.approx(8 * base, rel=1e-13)
    doubled = InclusionSpec(Z_D, 0.05, 3.0, volume_O=2 * INCLUSION.volume_O)
    assert theoretical_snr(MEDIUM, doubled, model, 10) == pytest.approx(2 * base, rel=1e-14)


@pytest.mark.parametrize("eps0", [1.0, 2.5])
def test_snr_is_closed_form_mean_over_deviation(eps0):
    # the SNR formula equals the large-n image at z_D over the square root of its variance
    medium = Medium(KAPPA, eps0)
    model = NoiseModel(0.02)
    mean = td_multi_closed_form(medium, INCLUSION, TRIAL, Z_D)
    sd = math.sqrt(theoretical_variance(medium, TRIAL, model, 12))
    assert theoretical_snr(medium, INCLUSION, model, 12) == pytest.approx(mean / sd, rel=1e-12)


# -- Monte Carlo ------------------------------------------------------------------


def test_monte_carlo_without_noise(small_quad):
    report = monte_carlo_image_stats(MEDIUM, INCLUSION, TRIAL, NoiseModel(0.0), 4, small_quad, 5, separations=[0.25])
    assert report.empirical_variance == 0
    assert report.empirical_mean == pytest.approx(report.clean_value, rel=1e-15)
    assert report.covariance_samples[0].empirical == 0
    assert report.empirical_snr is None


def test_monte_carlo_independent_of_threads(small_quad):
    model = NoiseModel(0.01, seed=5)
    a = monte_carlo_image_stats(MEDIUM, INCLUSION, TRIAL, model, 3, small_quad, 20, separations=[0.5])
    b = monte_carlo_image_stats(MEDIUM, INCLUSION, TRIAL, model, 3, small_quad, 20, separations=[0.5], threads=4)
    assert a.to_dict() == b.to_dict()


def test_monte_carlo_requires_two_trials(small_quad):
    with pytest.raises(ValueError):
        monte_carlo_image_stats(MEDIUM, INCLUSION, TRIAL, NoiseModel(0.1), 3, small_quad, 1)


def test_monte_carlo_variance_matches_finite_n_prediction(small_quad):
    # for any n the image is linear in the noise, so its exact variance follows from Cov1 per dataset
    n, trials = 6, 3000
    model = NoiseModel(0.02, seed=1)
    report = monte_carlo_image_stats(MEDIUM, INCLUSION, TRIAL, model, n, small_quad, trials)
    # exact: Var = (a^2/n^2) sum_d E|Re conj(H xi_d) . v_d|^2 = (a^2/(2 n^2)) sum_d v_d^H C v_d, C = (2 sigma^2/3) I
    a = -(KAPPA**2) / (4 * math.pi) * TRIAL.contrast
    m_delta = TRIAL.polarization[0, 0]
    v2 = (KAPPA * m_delta) ** 2  # |M_delta E0|^2 per dataset
    exact = a**2 / (2 * n**2) * 2 * n * v2 * (2 * model.sigma**2 / 3)
    assert report.empirical_variance == pytest.approx(exact, rel=4 * math.sqrt(2 / trials))
    # and the large-n formula agrees with it exactly at the coincidence point
    assert report.theoretical_variance == pytest.approx(exact, rel=1e-12)


@pytest.mark.slow
def test_mean_noisy_map_keeps_clean_argmax():
    quad = build_quadrature(2000)
    n, trials = 20, 500
    datasets = synthesize_far_field(MEDIUM, INCLUSION, multi_incidences(n), quad)
    model = NoiseModel(theoretical_snr(MEDIUM, INCLUSION, NoiseModel(1.0), n) / 5.0)
    grid = SearchGrid([Z_D[0] - 0.43, Z_D[1] - 0.37, Z_D[2] - 0.33], 0.1, (9, 9, 9))
    clean = sweep_grid(grid, lambda z: td_multi(datasets, MEDIUM, TRIAL, z))
    # the image is real-linear in the data, so the trial-mean map is the map of the
    # trial-mean data; averaging the data first avoids 500 grid sweeps
    total = [np.zeros_like(d.samples) for d in datasets]
    for child in np.random.SeedSequence(0).spawn(trials):
        for acc, d in zip(total, corrupt(datasets, model, np.random.default_rng(child))):
            acc += d.samples
    mean_data = [replace(d, samples=acc / trials) for d, acc in zip(datasets, total)]
    mean_map = sweep_grid(grid, lambda z: td_multi(mean_data, MEDIUM, TRIAL, z))
    assert max(abs(a - b) for a, b in zip(mean_map.peak.index, clean.peak.index)) <= 1
