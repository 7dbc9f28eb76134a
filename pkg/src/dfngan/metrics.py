"""Frechet distance on frozen random features, and mode counting on a ring of Gaussians."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import matrix_sqrt_psd
from .nn import conv2d

FEATURE_DIM = 64


@dataclass(frozen=True)
class FeatureStats:
    mean: np.ndarray
    cov: np.ndarray
    count: int


@dataclass(frozen=True)
class GmmSpec:
    centers: np.ndarray
    sigma: float

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float)
        if c.shape != (10, 2):
            raise ValueError("a GmmSpec has exactly 10 planar centers")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        d = np.linalg.norm(c[:, None] - c[None, :], axis=-1) + np.diag(np.full(10, np.inf))
        if d.min() <= 6 * self.sigma:
            raise ValueError("centers must be more than 6 sigma apart")

    @classmethod
    def ring(cls, radius: float = 2.0, sigma: float = 0.05) -> "GmmSpec":
        ang = 2 * np.pi * np.arange(10) / 10
        return cls(np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1), sigma)


# -- features --------------------------------------------------------------------

def _embed_weights(seed: int, in_ch: int = 1):
    rng = np.random.default_rng(seed)
    chans = [in_ch, 16, 32, FEATURE_DIM]
    ws = []
    for cin, cout in zip(chans[:-1], chans[1:]):
        std = math.sqrt(2.0 / (cin * 9))
        ws.append((rng.normal(0.0, std, (cout, cin, 3, 3)), rng.normal(0.0, 0.1, cout)))
    return ws


def feature_embed(batch, seed: int = 0) -> np.ndarray:
    """Frozen random conv features, one 64-vector per sample.

    Three 3x3 stride-2 convolutions with ReLU, then global average pooling.
    The weights depend only on ``seed``.
    """
    x = np.asarray(batch, dtype=float)
    if x.ndim == 3:
        x = x[:, None]
    for w, b in _embed_weights(seed, x.shape[1]):
        x, _ = conv2d(x, w, b, 2, 1)
        x = np.maximum(x, 0.0)
    return x.mean(axis=(2, 3))


def gaussian_stats(features) -> FeatureStats:
    f = np.asarray(features, dtype=float)
    if f.ndim != 2 or f.shape[0] < 2:
        raise ValueError("need at least 2 feature vectors")
    cov = np.cov(f, rowvar=False).reshape(f.shape[1], f.shape[1])
    return FeatureStats(mean=f.mean(axis=0), cov=0.5 * (cov + cov.T), count=f.shape[0])


def frechet_distance(r: FeatureStats, g: FeatureStats) -> float:
    """``|mu_r - mu_g|^2 + Tr(S_r + S_g - 2 (S_r S_g)^(1/2))``.

    The cross term uses the symmetric product ``S_r^(1/2) S_g S_r^(1/2)``,
    which has the same trace of square root and stays PSD.
    """
    mr, mg = np.atleast_1d(r.mean), np.atleast_1d(g.mean)
    sr, sg = np.atleast_2d(r.cov), np.atleast_2d(g.cov)
    if mr.shape != mg.shape or sr.shape != sg.shape or sr.shape[0] != mr.shape[0]:
        raise ValueError("feature dimensions do not match")
    root_r = matrix_sqrt_psd(sr)
    cross = matrix_sqrt_psd(root_r @ sg @ root_r)
    diff = mr - mg
    val = float(diff @ diff + np.trace(sr) + np.trace(sg) - 2.0 * np.trace(cross))
    return max(val, 0.0)


def fid(real_batch, fake_batch, seed: int = 0) -> float:
    return frechet_distance(gaussian_stats(feature_embed(real_batch, seed)),
                            gaussian_stats(feature_embed(fake_batch, seed)))


# -- Gaussian mixture -----------------------------------------------------------------

def gmm_sample(spec: GmmSpec, n: int, seed: int = 0) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    comp = rng.integers(0, len(spec.centers), n)
    return np.asarray(spec.centers)[comp] + spec.sigma * rng.standard_normal((n, 2))


def count_modes(samples, spec: GmmSpec, capture_radius_mult: float = 3.0, min_fraction: float = 0.01,
                min_count: int | None = None):
    """Detected modes and per-mode capture counts.

    A sample is captured by its nearest center when within
    ``capture_radius_mult * sigma``. A mode is detected when it captures at
    least ``min_fraction`` of all samples, or ``min_count`` samples if given.
    """
    x = np.asarray(samples, dtype=float).reshape(-1, 2)
    if x.shape[0] == 0:
        raise ValueError("no samples")
    centers = np.asarray(spec.centers)
    dist = np.linalg.norm(x[:, None, :] - centers[None, :, :], axis=-1)
    nearest = dist.argmin(axis=1)
    captured = dist[np.arange(len(x)), nearest] <= capture_radius_mult * spec.sigma
    counts = np.bincount(nearest[captured], minlength=len(centers))
    threshold = min_count if min_count is not None else min_fraction * len(x)
    return int(np.sum(counts >= max(threshold, 1e-12))), counts
