"""Seeded desk-scale benchmark: low-rank backgrounds plus sparse class signatures.

Each class owns a fixed set of signature pixels with fixed signs. An image is
a random rank-one background plus its class signature at a per-image
strength plus a few nuisance spikes. The oracle is nearest-centroid over the
class means. One extra sample, the planted universal sample, carries its
class signature at full strength with no nuisance, which makes its sparse
component an unusually efficient direction for fooling the classifier.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..oracle import CentroidOracle


@dataclass
class SyntheticBenchmark:
    images: list[np.ndarray]
    labels: list[int]
    ids: list[str]
    centroids: np.ndarray
    universal_id: str | None
    class_count: int

    def oracle(self) -> CentroidOracle:
        return CentroidOracle(self.centroids)


def make_benchmark(seed: int = 0, n_samples: int = 200, class_count: int = 10, size: int = 16,
                   channels: int = 1, signature_pixels: int = 12, strength: tuple[float, float] = (0.12, 0.3),
                   universal_strength: float = 0.45, nuisance: int = 8, nuisance_amp: float = 0.35,
                   plant_universal: bool = True) -> SyntheticBenchmark:
    """Generate ``n_samples`` correctly classified images (plus the universal one if planted)."""
    rng = np.random.default_rng(seed)
    shape = (size, size, channels)
    n_coords = size * size * channels

    signatures = np.zeros((class_count, n_coords))
    for c in range(class_count):
        idx = rng.choice(n_coords, signature_pixels, replace=False)
        signatures[c, idx] = rng.choice([-1.0, 1.0], signature_pixels)
    mean_strength = 0.5 * (strength[0] + strength[1])
    centroids = (0.5 + mean_strength * signatures).reshape((class_count, *shape))
    oracle = CentroidOracle(centroids)

    def draw(label: int, amp: float, spikes: int) -> np.ndarray:
        u = rng.uniform(0.4, 1.0, size)
        v = rng.uniform(0.4, 1.0, size)
        tint = rng.uniform(0.8, 1.0, channels)
        background = 0.25 + 0.4 * np.einsum("i,j,k->ijk", u, v, tint)
        x = background.ravel() + amp * signatures[label]
        if spikes:
            idx = rng.choice(n_coords, spikes, replace=False)
            x[idx] += rng.choice([-1.0, 1.0], spikes) * nuisance_amp
        return np.clip(x, 0.0, 1.0).reshape(shape)

    images, labels = [], []
    universal_id = None
    if plant_universal:
        label = int(rng.integers(class_count))
        img = draw(label, universal_strength, 0)
        if oracle._predict(img) == label:
            images.append(img)
            labels.append(label)
            universal_id = "u0000"
    attempts = 0
    while len(labels) < n_samples + (universal_id is not None):
        attempts += 1
        if attempts > 50 * n_samples:
            raise RuntimeError("could not draw enough correctly classified samples")
        label = int(rng.integers(class_count))
        img = draw(label, rng.uniform(*strength), nuisance)
        if oracle._predict(img) == label:
            images.append(img)
            labels.append(label)

    ids = [f"s{n:04d}" for n in range(len(images))]
    if universal_id is not None:
        ids[0] = universal_id
    # place the universal sample somewhere other than the front
    order = rng.permutation(len(images))
    return SyntheticBenchmark(
        images=[images[i] for i in order],
        labels=[labels[i] for i in order],
        ids=[ids[i] for i in order],
        centroids=centroids,
        universal_id=universal_id,
        class_count=class_count,
    )
