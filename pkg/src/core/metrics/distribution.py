# coding: utf-8
"""
Distribution distances on raw 2-D samples: Fréchet distance between fitted
Gaussians (toy-FID) and the unbiased cubic-polynomial-kernel MMD² (toy-KID).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from core.errors import InvalidInputError

logger = logging.getLogger(__name__)

# --- Constants ---
SYMMETRY_TOLERANCE = 1e-12
PSD_TOLERANCE = 1e-10


@dataclass(frozen=True)
class GaussianSummary:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])

    def validate(self) -> "GaussianSummary":
        mean = np.asarray(self.mean)
        cov = np.asarray(self.cov)
        if cov.shape != (mean.shape[0], mean.shape[0]):
            raise InvalidInputError(f"covariance shape {cov.shape} does not match mean {mean.shape}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise InvalidInputError("summary holds non-finite values")
        scale = max(1.0, float(np.max(np.abs(cov))))
        if np.max(np.abs(cov - cov.T)) > SYMMETRY_TOLERANCE * scale:
            raise InvalidInputError("covariance is not symmetric")
        smallest = float(np.min(np.linalg.eigvalsh((cov + cov.T) / 2.0)))
        if smallest < -PSD_TOLERANCE * scale:
            raise InvalidInputError(f"covariance is not PSD (min eigenvalue {smallest:.3e})")
        return self


def fit_gaussian(samples: np.ndarray) -> GaussianSummary:
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise InvalidInputError(f"need an (n>=2, d) sample matrix, got {x.shape}")
    return GaussianSummary(x.mean(axis=0), np.cov(x, rowvar=False).reshape(x.shape[1], x.shape[1]))


def _psd_sqrt(cov: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((cov + cov.T) / 2.0)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def frechet_distance(a: GaussianSummary, b: GaussianSummary) -> float:
    """
    ``|mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2))``.

    The trace of the product root is taken from the eigenvalues of the
    symmetric matrix ``S_a^(1/2) S_b S_a^(1/2)``, which shares them.
    """
    a.validate()
    b.validate()
    if a.dim != b.dim:
        raise InvalidInputError(f"dimension mismatch: {a.dim} vs {b.dim}")
    root_a = _psd_sqrt(np.asarray(a.cov))
    inner = root_a @ np.asarray(b.cov) @ root_a
    eig = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    tr_root = float(np.sum(np.sqrt(np.clip(eig, 0.0, None))))
    diff = np.asarray(a.mean) - np.asarray(b.mean)
    value = float(diff @ diff) + float(np.trace(a.cov)) + float(np.trace(b.cov)) - 2.0 * tr_root
    return max(value, 0.0)


def polynomial_kernel(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    d = x.shape[1]
    return (x @ y.T / d + 1.0) ** 3


def mmd_poly(x: np.ndarray, y: np.ndarray) -> float:
    """Unbiased MMD² with ``k(a, b) = (a.b / d + 1)^3``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
        raise InvalidInputError(f"incompatible batches: {x.shape} vs {y.shape}")
    m, n = x.shape[0], y.shape[0]
    if m < 2 or n < 2:
        raise InvalidInputError(f"MMD needs at least 2 samples per batch, got {m} and {n}")
    k_xx = polynomial_kernel(x, x)
    k_yy = polynomial_kernel(y, y)
    k_xy = polynomial_kernel(x, y)
    term_x = (k_xx.sum() - np.trace(k_xx)) / (m * (m - 1))
    term_y = (k_yy.sum() - np.trace(k_yy)) / (n * (n - 1))
    return float(term_x + term_y - 2.0 * k_xy.mean())
