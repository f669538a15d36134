"""Sparse-component traversal attack.

The target image and an initial adversarial sample are each split into
low-rank and sparse parts once. The attack then walks the sparse part of the
target toward that of the sample, projecting the accumulated change onto the
imperceptibility budget before every query, and stops at the first label
flip.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, NamedTuple

import numpy as np

from .constraints import SUPPORT_EPS, Norms, PerturbationConstraint, project
from .oracle import Oracle, as_image
from .rpca import ImageDecomposition, RpcaConfig, decompose_image

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AttackParams:
    constraint: PerturbationConstraint
    alpha: float = 0.05
    max_iter: int = 20
    clip_pixels: bool = True

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")


@dataclass
class AttackOutcome:
    success: bool
    queries_used: int
    perturbed: np.ndarray | None = None
    # norms of the final perturbation against L_o + S_o and against the raw input
    norms: Norms | None = None
    norms_vs_input: Norms | None = None
    within_budget: bool | None = None
    initial_sample_id: Hashable | None = None
    unsuccessful_attempts: int = 0
    lsd_converged: bool = True
    lsd_residual: float = 0.0


class Candidate(NamedTuple):
    sample_id: Hashable
    image: np.ndarray
    label: int


def traversal_steps(alpha: float) -> int:
    """Smallest ``i`` with ``alpha * i >= 1`` in floating point."""
    n = max(1, math.ceil(1.0 / alpha))
    while n > 1 and alpha * (n - 1) >= 1.0:
        n -= 1
    while alpha * n < 1.0:
        n += 1
    return n


def blend(s_o, s_a, t: float) -> np.ndarray:
    """``t * s_a + (1 - t) * s_o`` for ``t`` in ``[0, 1]``; exact at both ends."""
    s_o = np.asarray(s_o, dtype=float)
    s_a = np.asarray(s_a, dtype=float)
    if s_o.shape != s_a.shape:
        raise ValueError(f"sparse components differ in shape: {s_o.shape} vs {s_a.shape}")
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"blend weight must lie in [0, 1], got {t}")
    if t == 0.0:
        return s_o.copy()
    if t == 1.0:
        return s_a.copy()
    return t * s_a + (1.0 - t) * s_o


def blend_weight(alpha: float, i: int) -> float:
    return min(alpha * i, 1.0)


def clip_to_valid(img) -> np.ndarray:
    return np.clip(np.asarray(img, dtype=float), 0.0, 1.0)


def iterate(l_o: np.ndarray, s_o: np.ndarray, s_a: np.ndarray, params: AttackParams, i: int) -> np.ndarray:
    """The ``i``-th queried image (1-based)."""
    s_i = blend(s_o, s_a, blend_weight(params.alpha, i))
    s_i = s_o + project(s_i - s_o, params.constraint)
    x_i = l_o + s_i
    if params.clip_pixels:
        x_i = clip_to_valid(x_i)
    return x_i


def attack_single(x_o, label: int, x_a, oracle: Oracle, params: AttackParams,
                  lsd_o: ImageDecomposition | None = None, lsd_a: ImageDecomposition | None = None,
                  rpca: RpcaConfig | None = None, sample_id: Hashable | None = None) -> AttackOutcome:
    """Attack ``x_o`` (true class ``label``) using ``x_a`` as the initial adversarial sample.

    Decompositions are computed here only when not supplied. Issues at most
    ``params.max_iter`` queries; ``queries_used`` equals the number issued.
    Oracle errors propagate to the caller.
    """
    x_o = as_image(x_o)
    if lsd_o is None:
        lsd_o = decompose_image(x_o, rpca)
    if lsd_a is None:
        lsd_a = decompose_image(as_image(x_a), rpca)
    if lsd_o.sparse.shape != lsd_a.sparse.shape:
        raise ValueError(f"image shapes differ: {lsd_o.sparse.shape} vs {lsd_a.sparse.shape}")
    converged = lsd_o.converged and lsd_a.converged
    if not converged:
        logger.debug("decomposition did not converge; attacking with an approximate split")
    residual = max(lsd_o.residual, lsd_a.residual)

    l_o, s_o, s_a = lsd_o.low_rank, lsd_o.sparse, lsd_a.sparse
    for i in range(1, params.max_iter + 1):
        x_i = iterate(l_o, s_o, s_a, params, i)
        if oracle.query(x_i) != label:
            reference = l_o + s_o
            norms = Norms.of(x_i - reference, SUPPORT_EPS)
            return AttackOutcome(
                success=True,
                queries_used=i,
                perturbed=x_i,
                norms=norms,
                norms_vs_input=Norms.of(x_i - x_o, SUPPORT_EPS),
                within_budget=norms.within(params.constraint),
                initial_sample_id=sample_id,
                lsd_converged=converged,
                lsd_residual=residual,
            )
    return AttackOutcome(success=False, queries_used=params.max_iter, initial_sample_id=None,
                         lsd_converged=converged, lsd_residual=residual)


Decomposer = Callable[[Hashable, np.ndarray], ImageDecomposition]


def attack_with_exploration(x_o, label: int, candidates: Iterable[Candidate], budget: int,
                            oracle: Oracle, params: AttackParams, decomposer: Decomposer | None = None,
                            target_id: Hashable | None = None,
                            rpca: RpcaConfig | None = None) -> AttackOutcome:
    """Try up to ``budget`` initial samples in order until one succeeds.

    Total queries are ``j * max_iter + N_Q`` where ``j`` counts the fully
    failed attempts. The target is decomposed once; each candidate is
    decomposed only when reached. ``decomposer(sample_id, image)`` lets the
    caller cache decompositions.
    """
    if budget < 1:
        raise ValueError("exploration budget must be >= 1")
    if decomposer is None:
        def decomposer(_sid, img):
            return decompose_image(img, rpca)

    x_o = as_image(x_o)
    lsd_o = None
    failed = 0
    converged = True
    residual = 0.0
    for n, cand in enumerate(candidates):
        if n >= budget:
            break
        if cand.label == label:
            raise ValueError(f"candidate {cand.sample_id!r} shares the target label {label}")
        if lsd_o is None:
            lsd_o = decomposer(target_id, x_o)
        lsd_a = decomposer(cand.sample_id, as_image(cand.image))
        out = attack_single(x_o, label, cand.image, oracle, params, lsd_o, lsd_a, sample_id=cand.sample_id)
        converged = converged and out.lsd_converged
        residual = max(residual, out.lsd_residual)
        if out.success:
            out.unsuccessful_attempts = failed
            out.queries_used = failed * params.max_iter + out.queries_used
            out.lsd_converged = converged
            out.lsd_residual = residual
            return out
        failed += 1
    return AttackOutcome(success=False, queries_used=failed * params.max_iter,
                         unsuccessful_attempts=failed, lsd_converged=converged, lsd_residual=residual)
