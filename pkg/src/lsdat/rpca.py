"""Low-rank plus sparse decomposition (robust PCA).

Solves ``min ||L||_* + lam * ||S||_1  s.t.  X = L + S`` with the inexact
augmented Lagrange multiplier method, alternating a soft-threshold step on
``S`` with a singular value threshold step on ``L``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RpcaConfig",
    "LSDPair",
    "ImageDecomposition",
    "singular_value_threshold",
    "soft_threshold",
    "decompose",
    "decompose_image",
]


@dataclass(frozen=True)
class RpcaConfig:
    """Solver settings. ``lam=None`` selects ``1/sqrt(max(rows, cols))``."""

    lam: float | None = None
    tolerance: float = 1e-7
    max_iterations: int = 1000
    support_eps: float = 1e-6
    rho: float = 1.5
    mu_max_factor: float = 100.0

    def __post_init__(self):
        if self.lam is not None and not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.support_eps < 0:
            raise ValueError(f"support_eps must be nonnegative, got {self.support_eps}")
        if not self.rho > 1:
            raise ValueError(f"rho must exceed 1, got {self.rho}")
        if not self.mu_max_factor >= 1:
            raise ValueError(f"mu_max_factor must be >= 1, got {self.mu_max_factor}")

    def lam_for(self, shape: tuple[int, int]) -> float:
        if self.lam is not None:
            return self.lam
        return 1.0 / math.sqrt(max(shape))


@dataclass
class LSDPair:
    low_rank: np.ndarray
    sparse: np.ndarray
    converged: bool
    iterations: int
    residual: float
    support_eps: float = 1e-6

    @property
    def sparsity(self) -> float:
        """Fraction of entries of ``sparse`` above the support threshold."""
        if self.sparse.size == 0:
            return 0.0
        return float(np.count_nonzero(np.abs(self.sparse) > self.support_eps)) / self.sparse.size

    def support(self) -> np.ndarray:
        return np.abs(self.sparse) > self.support_eps


@dataclass
class ImageDecomposition:
    """Per-channel decompositions of an ``H x W x C`` image."""

    channels: list[LSDPair] = field(default_factory=list)

    @property
    def low_rank(self) -> np.ndarray:
        return np.stack([p.low_rank for p in self.channels], axis=-1)

    @property
    def sparse(self) -> np.ndarray:
        return np.stack([p.sparse for p in self.channels], axis=-1)

    @property
    def converged(self) -> bool:
        return all(p.converged for p in self.channels)

    @property
    def residual(self) -> float:
        return max((p.residual for p in self.channels), default=0.0)

    def reconstruction(self) -> np.ndarray:
        return self.low_rank + self.sparse


def _check_finite(M: np.ndarray) -> None:
    if not np.all(np.isfinite(M)):
        raise FloatingPointError("matrix contains non-finite entries")


def singular_value_threshold(M, tau: float) -> np.ndarray:
    """Proximal operator of ``tau * ||.||_*``: shrink every singular value by ``tau``."""
    M = np.asarray(M, dtype=float)
    _check_finite(M)
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    s = s - tau
    keep = int(np.count_nonzero(s > 0))
    if keep == 0:
        return np.zeros_like(M)
    return (U[:, :keep] * s[:keep]) @ Vt[:keep]


def soft_threshold(M, tau: float) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    _check_finite(M)
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    return np.sign(M) * np.maximum(np.abs(M) - tau, 0.0)


def decompose(X, cfg: RpcaConfig | None = None) -> LSDPair:
    """Split ``X`` into low-rank ``L`` and sparse ``S`` with ``X ~= L + S``.

    Stops once both the primal residual ``||X - L - S||_F`` and the dual
    residual ``mu * ||L_k - L_{k-1}||_F`` fall below ``tolerance * ||X||_F``.
    The penalty ``mu`` is capped at ``mu_max_factor`` times its starting
    value; an uncapped penalty freezes the iterates before the optimum is
    reached. Running out of iterations is not an error; the returned pair
    carries ``converged=False``.
    """
    cfg = cfg or RpcaConfig()
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {X.shape}")
    _check_finite(X)

    norm_fro = np.linalg.norm(X)
    if norm_fro == 0.0:
        return LSDPair(np.zeros_like(X), np.zeros_like(X), True, 0, 0.0, cfg.support_eps)
    # a single row or column is already rank one
    if min(X.shape) == 1:
        return LSDPair(X.copy(), np.zeros_like(X), True, 0, 0.0, cfg.support_eps)

    lam = cfg.lam_for(X.shape)
    norm_two = np.linalg.norm(X, 2)
    norm_inf = np.abs(X).max() / lam
    Y = X / max(norm_two, norm_inf)
    mu = 1.25 / norm_two
    mu_max = mu * cfg.mu_max_factor

    L = np.zeros_like(X)
    S = np.zeros_like(X)
    residual = 1.0
    converged = False
    it = 0
    while it < cfg.max_iterations:
        it += 1
        S = soft_threshold(X - L + Y / mu, lam / mu)
        L_prev = L
        L = singular_value_threshold(X - S + Y / mu, 1.0 / mu)
        Z = X - L - S
        residual = np.linalg.norm(Z) / norm_fro
        dual = mu * np.linalg.norm(L - L_prev) / norm_fro
        if residual <= cfg.tolerance and dual <= cfg.tolerance:
            converged = True
            break
        Y = Y + mu * Z
        mu = min(mu * cfg.rho, mu_max)

    return LSDPair(L, S, converged, it, float(residual), cfg.support_eps)


def decompose_image(img, cfg: RpcaConfig | None = None) -> ImageDecomposition:
    """Decompose each channel of an ``H x W x C`` image independently."""
    img = np.asarray(img, dtype=float)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3:
        raise ValueError(f"expected an H x W x C image, got shape {img.shape}")
    return ImageDecomposition([decompose(img[:, :, c], cfg) for c in range(img.shape[2])])
