"""Rank-one inflated ("prolate") Gaussian proposals.

The proposal covariance is sigma^2 * I + sigma_dir^2 * d d^T for an update
direction d: isotropic noise plus extra variance along d, which stretches the
proposal cloud into a cigar along the optimizer step.  Determinant, inverse
quadratic form, log-density and sampling are all O(P) and never materialize
the P x P matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))


def _safe_norm(x: np.ndarray) -> float:
    """Euclidean norm that survives entries near the float64 overflow edge."""
    m = float(np.max(np.abs(x))) if x.size else 0.0
    if m == 0.0 or not np.isfinite(m):
        return m
    if m > 1e150:
        scaled = x / m
        return m * float(np.sqrt(scaled @ scaled))
    return float(np.linalg.norm(x))


@dataclass(frozen=True)
class ProlateCovariance:
    """Implicit covariance sigma^2 I_P + sigma_dir^2 d d^T.

    sigma_dir = 0 is a valid mode and reduces every operation to the
    isotropic case.
    """

    sigma: float
    sigma_dir: float
    direction: np.ndarray

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.sigma_dir < 0.0:
            raise ValueError(f"sigma_dir must be non-negative, got {self.sigma_dir}")
        d = np.asarray(self.direction, dtype=float)
        if d.ndim != 1:
            raise ValueError("direction must be a flat vector")
        object.__setattr__(self, "direction", d)

    @property
    def dim(self) -> int:
        return self.direction.shape[0]

    def log_det(self) -> float:
        """Log determinant via the rank-one determinant identity.

        2*P*log(sigma) + log(1 + (sigma_dir/sigma)^2 |d|^2), with the log(1+r)
        term assembled in log space so that huge gradient directions cannot
        overflow the ratio r.
        """
        base = 2.0 * self.dim * np.log(self.sigma)
        norm_d = _safe_norm(self.direction)
        if self.sigma_dir == 0.0 or norm_d == 0.0:
            return float(base)
        log_r = 2.0 * (np.log(self.sigma_dir) + np.log(norm_d) - np.log(self.sigma))
        return float(base + np.logaddexp(0.0, log_r))

    def inv_quad_form(self, x: np.ndarray) -> float:
        """x^T Sigma^{-1} x via the rank-one inverse: two dot products.

        Uses |x|^2/sigma^2 - (<d_hat, x>^2/sigma^2) * t/(1+t) with
        t = (sigma_dir |d| / sigma)^2, which stays finite when t overflows.
        """
        x = np.asarray(x, dtype=float)
        if x.shape != self.direction.shape:
            raise ValueError(
                f"dimension mismatch: x has shape {x.shape}, "
                f"direction has shape {self.direction.shape}"
            )
        s2 = self.sigma * self.sigma
        iso = float(x @ x) / s2
        norm_d = _safe_norm(self.direction)
        if self.sigma_dir == 0.0 or norm_d == 0.0:
            return iso
        cos_comp = float(self.direction @ x) / norm_d
        t = (self.sigma_dir * norm_d / self.sigma) ** 2
        with np.errstate(divide="ignore", over="ignore"):
            shrink = 1.0 / (1.0 + 1.0 / t) if t < np.inf else 1.0
        return iso - (cos_comp * cos_comp / s2) * shrink

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Matrix-vector product Sigma @ x, O(P)."""
        x = np.asarray(x, dtype=float)
        out = self.sigma**2 * x
        if self.sigma_dir > 0.0:
            out = out + self.sigma_dir**2 * float(self.direction @ x) * self.direction
        return out

    def solve(self, x: np.ndarray) -> np.ndarray:
        """Matrix-vector product Sigma^{-1} @ x via the rank-one inverse."""
        x = np.asarray(x, dtype=float)
        s2 = self.sigma * self.sigma
        out = x / s2
        norm_d = _safe_norm(self.direction)
        if self.sigma_dir == 0.0 or norm_d == 0.0:
            return out
        cos_comp = float(self.direction @ x) / norm_d
        t = (self.sigma_dir * norm_d / self.sigma) ** 2
        with np.errstate(divide="ignore", over="ignore"):
            shrink = 1.0 / (1.0 + 1.0 / t) if t < np.inf else 1.0
        return out - (cos_comp * shrink / (s2 * norm_d)) * self.direction

    def log_density(self, mean: np.ndarray, x: np.ndarray) -> float:
        """Gaussian log pdf of x under N(mean, Sigma)."""
        mean = np.asarray(mean, dtype=float)
        x = np.asarray(x, dtype=float)
        if mean.shape != self.direction.shape or x.shape != self.direction.shape:
            raise ValueError("dimension mismatch between mean, x and direction")
        quad = self.inv_quad_form(x - mean)
        return -0.5 * (self.dim * LOG_2PI + self.log_det() + quad)

    def sample(self, mean: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Draw mean + sigma*z + sigma_dir*xi*d, z ~ N(0, I), xi ~ N(0, 1).

        The directional scalar xi is drawn only when sigma_dir > 0, so the
        isotropic mode consumes exactly the same RNG stream as a plain
        Gaussian random walk.
        """
        mean = np.asarray(mean, dtype=float)
        z = rng.standard_normal(self.dim)
        out = mean + self.sigma * z
        if self.sigma_dir > 0.0:
            xi = rng.standard_normal()
            out = out + self.sigma_dir * xi * self.direction
        return out

    def dense(self) -> np.ndarray:
        """Materialize Sigma for small P (testing and dense oracles only)."""
        d = self.direction
        return self.sigma**2 * np.eye(self.dim) + self.sigma_dir**2 * np.outer(d, d)
