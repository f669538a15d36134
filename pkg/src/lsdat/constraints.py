"""Imperceptibility budgets and the projections that enforce them."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

SUPPORT_EPS = 1e-6


@dataclass(frozen=True)
class L0:
    """Perturb at most ``k`` scalar coordinates (channel entries count separately)."""

    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")

    norm = "l0"

    @property
    def budget(self) -> float:
        return self.k


@dataclass(frozen=True)
class L2:
    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0 or not math.isfinite(self.epsilon):
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    norm = "l2"

    @property
    def budget(self) -> float:
        return self.epsilon


@dataclass(frozen=True)
class Linf:
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0 or not math.isfinite(self.sigma):
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    norm = "linf"

    @property
    def budget(self) -> float:
        return self.sigma


PerturbationConstraint = Union[L0, L2, Linf]


def make_constraint(norm: str, budget: float) -> PerturbationConstraint:
    """Build a constraint from a norm name (``l0``, ``l2``, ``linf``) and a budget."""
    norm = norm.lower()
    if norm == "l0":
        if float(budget) != int(budget):
            raise ValueError(f"l0 budget must be an integer count, got {budget}")
        return L0(int(budget))
    if norm == "l2":
        return L2(float(budget))
    if norm in ("linf", "inf"):
        return Linf(float(budget))
    raise ValueError(f"unknown norm {norm!r}; expected l0, l2 or linf")


def project_l0(delta, k: int) -> np.ndarray:
    """Keep the ``k`` largest-magnitude coordinates, zero the rest.

    Ties go to the lower flat (row-major) index.
    """
    delta = np.asarray(delta, dtype=float)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k >= delta.size:
        return delta.copy()
    flat = delta.ravel()
    # stable sort on -|x| keeps ascending index order among equal magnitudes
    order = np.argsort(-np.abs(flat), kind="stable")
    out = np.zeros_like(flat)
    keep = order[:k]
    out[keep] = flat[keep]
    return out.reshape(delta.shape)


def project_l2(delta, epsilon: float) -> np.ndarray:
    delta = np.asarray(delta, dtype=float)
    norm = float(np.linalg.norm(delta))
    if norm <= epsilon:
        return delta.copy()
    return delta * (epsilon / norm)


def project_linf(delta, sigma: float) -> np.ndarray:
    return np.clip(np.asarray(delta, dtype=float), -sigma, sigma)


def project(delta, c: PerturbationConstraint) -> np.ndarray:
    if isinstance(c, L0):
        return project_l0(delta, c.k)
    if isinstance(c, L2):
        return project_l2(delta, c.epsilon)
    if isinstance(c, Linf):
        return project_linf(delta, c.sigma)
    raise TypeError(f"not a perturbation constraint: {c!r}")


def measure(delta, p, support_eps: float = SUPPORT_EPS) -> float:
    """Return the l0 count, l2 norm or max-abs of ``delta``.

    ``p`` accepts ``0``, ``2``, ``math.inf`` or the names ``l0``, ``l2``, ``linf``.
    """
    delta = np.asarray(delta, dtype=float)
    kind = _norm_kind(p)
    if kind == "l0":
        return float(np.count_nonzero(np.abs(delta) > support_eps))
    if kind == "l2":
        return float(np.linalg.norm(delta))
    return float(np.abs(delta).max()) if delta.size else 0.0


def _norm_kind(p) -> str:
    if isinstance(p, str):
        p = p.lower()
        if p in ("l0", "l2", "linf"):
            return p
        if p == "inf":
            return "linf"
    elif p == 0:
        return "l0"
    elif p == 2:
        return "l2"
    elif p == math.inf:
        return "linf"
    raise ValueError(f"unsupported norm {p!r}")


@dataclass(frozen=True)
class Norms:
    l0: float
    l2: float
    linf: float

    @classmethod
    def of(cls, delta, support_eps: float = SUPPORT_EPS) -> "Norms":
        return cls(
            measure(delta, 0, support_eps),
            measure(delta, 2, support_eps),
            measure(delta, math.inf, support_eps),
        )

    def get(self, norm: str) -> float:
        return getattr(self, _norm_kind(norm))

    def within(self, c: PerturbationConstraint, rtol: float = 1e-9) -> bool:
        value = self.get(c.norm)
        if isinstance(c, L0):
            return value <= c.k
        return value <= c.budget * (1.0 + rtol)
