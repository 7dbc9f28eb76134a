import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dfngan import gan, metrics
from dfngan.errors import NotPSD
from dfngan.metrics import FeatureStats, GmmSpec

from conftest import random_orthogonal


def stats(mean, cov):
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    return FeatureStats(mean, np.atleast_2d(np.asarray(cov, dtype=float)), 100)


# -- features --------------------------------------------------------------------------

def test_feature_embed_shape_and_determinism(rng):
    x = rng.uniform(-1, 1, (5, 1, 32, 32))
    f = metrics.feature_embed(x, seed=0)
    assert f.shape == (5, metrics.FEATURE_DIM) == (5, 64)
    np.testing.assert_array_equal(f, metrics.feature_embed(x, seed=0))
    np.testing.assert_array_equal(f, metrics.feature_embed(x[:, 0], seed=0))
    assert not np.allclose(f, metrics.feature_embed(x, seed=1))


def test_feature_embed_is_per_sample(rng):
    x = rng.uniform(-1, 1, (6, 1, 16, 16))
    perm = rng.permutation(6)
    np.testing.assert_allclose(metrics.feature_embed(x[perm]), metrics.feature_embed(x)[perm], atol=1e-14)


def _line_spectrograms(rng, count, n=32):
    # spectrogram-like images: a few horizontal ridges with slow amplitude drift
    rows = np.arange(n)[:, None]
    out = np.empty((count, 1, n, n))
    for i in range(count):
        img = np.zeros((n, n))
        for _ in range(rng.integers(1, 4)):
            r0 = rng.uniform(3, n - 3)
            env = 0.5 + 0.5 * np.sin(np.linspace(0, np.pi, n) * rng.uniform(0.5, 2))
            img += np.exp(-0.5 * ((rows - r0) / 1.2) ** 2) * env[None, :]
        out[i, 0] = 2 * img / max(img.max(), 1e-9) - 1
    return out + 0.02 * rng.standard_normal(out.shape)


def test_fid_separates_real_halves_from_untrained_generator():
    rng = np.random.default_rng(0)
    real = _line_spectrograms(rng, 1024)
    cfg = gan.GanConfig(seed=0)
    state = gan.init_state(cfg)
    z, _ = gan.sample_latent(state, 512, cfg)
    noise = gan.generator_forward(state.gen_params, z, cfg)
    within = metrics.fid(real[:512], real[512:])
    across = metrics.fid(real[:512], noise)
    assert within <= 0.1 * across


def test_fid_of_identical_batches_is_zero(rng):
    x = rng.uniform(-1, 1, (80, 1, 16, 16))
    assert metrics.fid(x, x) == pytest.approx(0.0, abs=1e-9)


# -- moments ----------------------------------------------------------------------------

def test_gaussian_stats_examples():
    s = metrics.gaussian_stats([[1.0, 2.0], [1.0, 2.0]])
    np.testing.assert_array_equal(s.mean, [1.0, 2.0])
    np.testing.assert_array_equal(s.cov, np.zeros((2, 2)))
    assert s.count == 2
    with pytest.raises(ValueError):
        metrics.gaussian_stats([[1.0, 2.0]])


def test_gaussian_stats_matches_numpy(rng):
    f = rng.standard_normal((50, 4)) @ rng.standard_normal((4, 4))
    s = metrics.gaussian_stats(f)
    np.testing.assert_allclose(s.cov, np.cov(f, rowvar=False), atol=1e-12)
    np.testing.assert_array_equal(s.cov, s.cov.T)


def test_gaussian_stats_monte_carlo():
    f = np.random.default_rng(7).standard_normal((100_000, 2))
    s = metrics.gaussian_stats(f)
    assert np.max(np.abs(s.mean)) < 0.02
    assert np.max(np.abs(s.cov - np.eye(2))) < 0.05


# -- Frechet distance -------------------------------------------------------------------

def test_frechet_closed_forms():
    assert metrics.frechet_distance(stats(0, 1), stats(3, 1)) == pytest.approx(9.0, abs=1e-8)
    assert metrics.frechet_distance(stats(0, 1), stats(0, 4)) == pytest.approx(1.0, abs=1e-8)
    s = stats([1.0, -2.0], [[2.0, 0.3], [0.3, 1.0]])
    assert metrics.frechet_distance(s, s) == pytest.approx(0.0, abs=1e-12)


def test_frechet_rejects_bad_input():
    with pytest.raises(ValueError):
        metrics.frechet_distance(stats([0, 0], np.eye(2)), stats([0, 0, 0], np.eye(3)))
    with pytest.raises(NotPSD):
        metrics.frechet_distance(stats([0, 0], np.diag([1.0, -1.0])), stats([0, 0], np.eye(2)))


def _spd(rng, d):
    a = rng.standard_normal((d, d))
    return a @ a.T + 0.1 * np.eye(d)


def test_frechet_symmetry(rng):
    for d in (1, 2, 5, 16):
        r = stats(rng.standard_normal(d), _spd(rng, d))
        g = stats(rng.standard_normal(d), _spd(rng, d))
        a, b = metrics.frechet_distance(r, g), metrics.frechet_distance(g, r)
        assert a == pytest.approx(b, rel=1e-8)


@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.01, 10), st.floats(0.01, 10)),
                min_size=1, max_size=8))
def test_frechet_diagonal_closed_form(dims):
    mr, mg, vr, vg = (np.array(c) for c in zip(*dims))
    want = np.sum((mr - mg) ** 2 + (np.sqrt(vr) - np.sqrt(vg)) ** 2)
    got = metrics.frechet_distance(stats(mr, np.diag(vr)), stats(mg, np.diag(vg)))
    assert got == pytest.approx(want, rel=1e-8, abs=1e-10)


def test_frechet_commuting_covariances_match_rotated_diagonal(rng):
    # same rotation on both covariances leaves the distance unchanged
    q = random_orthogonal(rng, 4)
    vr, vg = rng.uniform(0.5, 3, 4), rng.uniform(0.5, 3, 4)
    mr, mg = rng.standard_normal(4), rng.standard_normal(4)
    base = metrics.frechet_distance(stats(mr, np.diag(vr)), stats(mg, np.diag(vg)))
    rot = metrics.frechet_distance(stats(q @ mr, q @ np.diag(vr) @ q.T), stats(q @ mg, q @ np.diag(vg) @ q.T))
    assert rot == pytest.approx(base, rel=1e-8)


# -- mixture and mode counting ------------------------------------------------------------

def test_gmm_spec_validation():
    spec = GmmSpec.ring()
    assert spec.centers.shape == (10, 2)
    np.testing.assert_allclose(np.linalg.norm(spec.centers, axis=1), 2.0)
    with pytest.raises(ValueError):
        GmmSpec(spec.centers[:9], 0.05)
    with pytest.raises(ValueError):
        GmmSpec(spec.centers, 0.0)
    with pytest.raises(ValueError):
        GmmSpec.ring(radius=2.0, sigma=0.3)  # neighbours 1.24 apart, need > 1.8


def test_gmm_sample_degenerate_sigma_hits_centers():
    spec = GmmSpec.ring(sigma=1e-12)
    x = metrics.gmm_sample(spec, 200, seed=1)
    d = np.min(np.linalg.norm(x[:, None] - spec.centers[None], axis=-1), axis=1)
    assert d.max() < 1e-10


def test_gmm_sample_deterministic():
    spec = GmmSpec.ring()
    np.testing.assert_array_equal(metrics.gmm_sample(spec, 50, seed=3), metrics.gmm_sample(spec, 50, seed=3))
    with pytest.raises(ValueError):
        metrics.gmm_sample(spec, 0)


def test_gmm_sample_counts_within_binomial_bound():
    spec = GmmSpec.ring()
    n = 100_000
    _, counts = metrics.count_modes(metrics.gmm_sample(spec, n, seed=9), spec, capture_radius_mult=10.0)
    sd = np.sqrt(n * 0.1 * 0.9)
    assert counts.sum() == n
    assert np.all(np.abs(counts - n / 10) <= 3 * sd)


def test_count_modes_examples():
    spec = GmmSpec.ring()
    assert metrics.count_modes(np.repeat(spec.centers, 5, axis=0), spec)[0] == 10
    assert metrics.count_modes(np.repeat(spec.centers[:1], 40, axis=0), spec)[0] == 1
    assert metrics.count_modes(np.full((10, 2), 50.0), spec)[0] == 0
    n, counts = metrics.count_modes(metrics.gmm_sample(spec, 10_000, seed=2), spec)
    # radius of a 2-D isotropic Gaussian is Rayleigh: P(r <= 3 sigma) = 1 - exp(-4.5)
    p = 1 - np.exp(-4.5)
    assert n == 10
    assert abs(counts.sum() - p * 10_000) <= 4 * np.sqrt(10_000 * p * (1 - p))
    with pytest.raises(ValueError):
        metrics.count_modes(np.zeros((0, 2)), spec)


def test_count_modes_capture_radius():
    spec = GmmSpec.ring(sigma=0.05)
    x = spec.centers[:2] + np.array([[0.14, 0.0], [0.16, 0.0]]) * np.array([[1], [1]])
    # 0.14 <= 3 sigma = 0.15 < 0.16
    _, counts = metrics.count_modes(x, spec)
    assert counts[0] == 1 and counts[1] == 0


def test_count_modes_min_fraction():
    spec = GmmSpec.ring()
    x = np.concatenate([np.repeat(spec.centers[:1], 99, axis=0), spec.centers[1:2]])
    assert metrics.count_modes(x, spec, min_fraction=0.01)[0] == 2
    assert metrics.count_modes(x, spec, min_fraction=0.02)[0] == 1
    assert metrics.count_modes(x, spec, min_count=100)[0] == 0


def test_count_modes_permutation_invariant_and_monotone(rng):
    spec = GmmSpec.ring()
    x = metrics.gmm_sample(spec, 300, seed=4)
    base = metrics.count_modes(x, spec, min_count=5)
    perm = metrics.count_modes(x[rng.permutation(300)], spec, min_count=5)
    assert base[0] == perm[0]
    np.testing.assert_array_equal(base[1], perm[1])
    more = np.concatenate([x, metrics.gmm_sample(spec, 100, seed=5)])
    assert metrics.count_modes(more, spec, min_count=5)[0] >= base[0]
