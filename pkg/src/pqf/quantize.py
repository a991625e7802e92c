"""Codebook learning: plain k-means and its annealed stochastic relaxation.

Both quantizers start from uniformly random code assignments and alternate a
codebook update (cluster means, with empty clusters re-seeded to the worst
reconstructed subvector) and a nearest-centroid code update. The annealed
variant perturbs the subvectors fed to the codebook update with zero-mean
Gaussian noise whose per-coordinate variance is the diagonal of the subvector
covariance, scaled by ``(1 - tau/I)**gamma`` so the last iteration is exactly
noiseless; code updates always see the clean subvectors. With a zero
covariance the annealed run is bit-for-bit identical to plain k-means under
the same seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .layout import SubvectorMatrix
from .permsearch import CovarianceStats
from .rng import gaussian, make_rng

DEFAULT_ITERATIONS = 1000
DEFAULT_GAMMA = 0.5


@dataclass(frozen=True)
class SRCConfig:
    """Annealed-quantizer settings: iteration count, noise exponent, seed."""

    iterations: int = DEFAULT_ITERATIONS
    gamma: float = DEFAULT_GAMMA
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")


def clamp_codebook_size(k: int, num_subvectors: int) -> int:
    """Cap the codebook at a quarter of the subvector count, minimum 1."""
    if k < 1 or num_subvectors < 1:
        raise ValueError("codebook size and subvector count must be positive")
    return max(1, min(int(k), num_subvectors // 4))


def _points_and_shape(subvectors):
    if isinstance(subvectors, SubvectorMatrix):
        return subvectors.points(), (subvectors.m_hat, subvectors.n)
    pts = np.asarray(subvectors, dtype=np.float64)
    if pts.ndim != 2:
        raise DimensionMismatch(f"expected an (N, d) array, got shape {pts.shape}")
    return pts, None


def assign_codes(subvectors, codebook) -> np.ndarray:
    """Nearest centroid (squared Euclidean) per subvector; ties go low."""
    pts, shape = _points_and_shape(subvectors)
    cb = np.asarray(codebook, dtype=np.float64)
    if cb.ndim != 2 or cb.shape[1] != pts.shape[1]:
        raise DimensionMismatch(
            f"codebook width {cb.shape} does not match subvector length {pts.shape[1]}"
        )
    codes = _assign(pts, cb)
    return codes.reshape(shape) if shape is not None else codes


def _assign(pts: np.ndarray, codebook: np.ndarray) -> np.ndarray:
    n, d = pts.shape
    k = codebook.shape[0]
    chunk = max(1, (1 << 22) // max(k * d, 1))
    out = np.empty(n, dtype=np.int64)
    for start in range(0, n, chunk):
        block = pts[start : start + chunk]
        # plain difference form: bit-identical to a per-point distance loop
        dist = np.square(block[:, None, :] - codebook[None, :, :]).sum(axis=2)
        out[start : start + chunk] = np.argmin(dist, axis=1)
    return out


def update_codebook(subvectors, codes, k_eff: int) -> np.ndarray:
    """Centroids as assignment means; empty clusters re-seed greedily.

    An empty centroid is replaced by the subvector with the largest current
    reconstruction error (each such subvector used at most once), processed
    in ascending centroid order, which keeps the update deterministic.
    """
    pts, _ = _points_and_shape(subvectors)
    flat = np.asarray(codes, dtype=np.int64).ravel()
    codebook, _ = _update(pts, flat, k_eff)
    return codebook


def _update(pts: np.ndarray, codes: np.ndarray, k_eff: int):
    d = pts.shape[1]
    counts = np.bincount(codes, minlength=k_eff).astype(np.float64)
    sums = np.empty((k_eff, d))
    for j in range(d):
        sums[:, j] = np.bincount(codes, weights=pts[:, j], minlength=k_eff)
    nonempty = counts > 0
    codebook = np.zeros((k_eff, d))
    codebook[nonempty] = sums[nonempty] / counts[nonempty, None]
    empties = np.flatnonzero(~nonempty)
    if empties.size:
        errors = np.square(pts - codebook[codes]).sum(axis=1)
        for t in empties:
            worst = int(np.argmax(errors))
            codebook[t] = pts[worst]
            errors[worst] = -1.0
    return codebook, empties.size > 0


def reconstruction_error(subvectors, codebook, codes) -> float:
    """Mean squared error per subvector (Frobenius norm over count)."""
    pts, _ = _points_and_shape(subvectors)
    flat = np.asarray(codes, dtype=np.int64).ravel()
    cb = np.asarray(codebook, dtype=np.float64)
    return float(np.square(pts - cb[flat]).sum() / pts.shape[0])


def _quantize_rng(seed: int) -> np.random.Generator:
    return make_rng(seed, "quantize")


def _run(pts, k_eff, iters, rng, noise_std=None, gamma=DEFAULT_GAMMA, stop_when_stable=False):
    n = pts.shape[0]
    codes = rng.integers(0, k_eff, size=n, dtype=np.int64)
    codebook, _ = _update(pts, codes, k_eff)
    add_noise = noise_std is not None and bool(np.any(noise_std > 0))
    for tau in range(1, iters + 1):
        scale = (1.0 - tau / iters) ** gamma
        if add_noise and scale > 0.0:
            noisy = pts + gaussian(rng, pts.shape) * (noise_std * scale)
        else:
            noisy = pts
        codebook, reseeded = _update(noisy, codes, k_eff)
        new_codes = _assign(pts, codebook)
        stable = not reseeded and np.array_equal(new_codes, codes)
        codes = new_codes
        if stop_when_stable and stable:
            break
    return codes, codebook, reconstruction_error(pts, codebook, codes)


def kmeans(subvectors, k_eff: int, iters: int = DEFAULT_ITERATIONS, seed: int = 0):
    """Plain k-means from random assignments.

    Runs `iters` rounds of (codebook update, code update) or stops early once
    assignments are stable with no empty-cluster re-seeding. ``iters=0``
    returns the random initial assignments with their implied codebook.
    Returns ``(codes, codebook, error)``.
    """
    pts, shape = _points_and_shape(subvectors)
    if k_eff < 1:
        raise ValueError("codebook size must be >= 1")
    codes, codebook, error = _run(
        pts, k_eff, iters, _quantize_rng(seed), stop_when_stable=True
    )
    return (codes.reshape(shape) if shape is not None else codes), codebook, error


def src(subvectors, stats: CovarianceStats, k_eff: int, cfg: SRCConfig):
    """Annealed k-means: noisy codebook updates, clean code updates.

    The noise standard deviation per coordinate is the square root of the
    diagonal of ``stats.sigma``, scaled by ``(1 - tau/I)**gamma``; the final
    iteration runs at exactly zero noise. Returns ``(codes, codebook, error)``
    after all ``cfg.iterations`` rounds.
    """
    pts, shape = _points_and_shape(subvectors)
    if stats.dim != pts.shape[1]:
        raise DimensionMismatch(
            f"covariance dimension {stats.dim} != subvector length {pts.shape[1]}"
        )
    if k_eff < 1:
        raise ValueError("codebook size must be >= 1")
    noise_std = np.sqrt(np.clip(np.diag(stats.sigma), 0.0, None))
    codes, codebook, error = _run(
        pts,
        k_eff,
        cfg.iterations,
        _quantize_rng(cfg.seed),
        noise_std=noise_std,
        gamma=cfg.gamma,
    )
    return (codes.reshape(shape) if shape is not None else codes), codebook, error
