"""Hard-label classifier oracles with exact query counting.

Every oracle answers ``query(img)`` with a top-1 label and counts one query
per answered call. Failed remote round-trips are not counted.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import requests

logger = logging.getLogger(__name__)


class OracleError(RuntimeError):
    """The oracle cannot answer; the attack in progress must stop."""


class TransportError(OracleError):
    """A single remote round-trip failed. Retryable."""


class ReplayMissError(OracleError):
    """A replayed trace has no recorded answer for the queried image."""


@dataclass(frozen=True)
class QueryCounter:
    total: int = 0
    per_attack: int = 0


def as_image(img) -> np.ndarray:
    img = np.asarray(img, dtype=float)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3:
        raise ValueError(f"expected an H x W x C image, got shape {img.shape}")
    return img


def image_hash(img) -> str:
    """SHA-256 over shape and float64 bytes; the replay trace key."""
    img = np.ascontiguousarray(as_image(img), dtype="<f8")
    h = hashlib.sha256()
    h.update(repr(img.shape).encode())
    h.update(img.tobytes())
    return h.hexdigest()


class Oracle:
    """Base class. Subclasses implement ``_predict``."""

    kind = "abstract"

    def __init__(self, class_count: int):
        if class_count < 2:
            raise ValueError(f"an oracle needs at least 2 classes, got {class_count}")
        self.class_count = int(class_count)
        self._lock = threading.Lock()
        self._total = 0
        self._per_attack = 0

    def _predict(self, img: np.ndarray) -> int:
        raise NotImplementedError

    def _count(self) -> None:
        with self._lock:
            self._total += 1
            self._per_attack += 1

    def query(self, img) -> int:
        label = self._predict(as_image(img))
        self._count()
        return label

    def read_counter(self) -> QueryCounter:
        with self._lock:
            return QueryCounter(self._total, self._per_attack)

    def reset_counter(self) -> None:
        """Start a new attack: zero ``per_attack``, keep ``total``."""
        with self._lock:
            self._per_attack = 0

    def scoped(self) -> "ScopedOracle":
        return ScopedOracle(self)


class ScopedOracle(Oracle):
    """Per-attack view over a shared oracle.

    Keeps its own counter and forwards every query to the parent, so the
    parent's total stays exact when several attacks share it concurrently.
    """

    def __init__(self, parent: Oracle):
        super().__init__(parent.class_count)
        self.parent = parent
        self.kind = parent.kind

    def query(self, img) -> int:
        label = self.parent.query(img)
        self._count()
        return label


class LinearOracle(Oracle):
    """``argmax_c w_c . flatten(x) + b_c``, ties to the lowest class id."""

    kind = "synthetic-linear"

    def __init__(self, weights, bias=None):
        weights = np.asarray(weights, dtype=float)
        if weights.ndim < 2:
            raise ValueError("weights must have one row per class")
        super().__init__(weights.shape[0])
        self.input_shape = weights.shape[1:]
        self.weights = weights.reshape(weights.shape[0], -1)
        self.bias = np.zeros(self.class_count) if bias is None else np.asarray(bias, dtype=float)
        if self.bias.shape != (self.class_count,):
            raise ValueError(f"bias must have shape ({self.class_count},), got {self.bias.shape}")

    def scores(self, img) -> np.ndarray:
        x = np.asarray(img, dtype=float).ravel()
        if x.size != self.weights.shape[1]:
            raise ValueError(f"image has {x.size} values, weights expect {self.weights.shape[1]}")
        return self.weights @ x + self.bias

    def _predict(self, img):
        # np.argmax returns the first maximal index
        return int(np.argmax(self.scores(img)))


def make_linear_oracle(weights, bias=None) -> LinearOracle:
    return LinearOracle(weights, bias)


class CentroidOracle(Oracle):
    """Nearest centroid in Euclidean distance, ties to the lowest class id."""

    kind = "synthetic-centroid"

    def __init__(self, centroids):
        centroids = np.asarray(centroids, dtype=float)
        if centroids.ndim < 2:
            raise ValueError("centroids must have one row per class")
        super().__init__(centroids.shape[0])
        self.input_shape = centroids.shape[1:]
        self.centroids = centroids.reshape(centroids.shape[0], -1)

    def distances(self, img) -> np.ndarray:
        x = np.asarray(img, dtype=float).ravel()
        if x.size != self.centroids.shape[1]:
            raise ValueError(f"image has {x.size} values, centroids expect {self.centroids.shape[1]}")
        return np.sum((self.centroids - x) ** 2, axis=1)

    def _predict(self, img):
        return int(np.argmin(self.distances(img)))


def make_centroid_oracle(centroids) -> CentroidOracle:
    return CentroidOracle(centroids)


def encode_image(img) -> dict:
    """Wire body for ``POST /classify``."""
    img = as_image(img)
    h, w, c = img.shape
    return {"height": h, "width": w, "channels": c, "pixels": img.ravel().tolist()}


def decode_image(body: dict) -> np.ndarray:
    try:
        h, w, c = int(body["height"]), int(body["width"]), int(body["channels"])
        pixels = np.asarray(body["pixels"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed classify request: {exc}") from exc
    if pixels.size != h * w * c:
        raise ValueError(f"pixel count {pixels.size} does not match {h}x{w}x{c}")
    return pixels.reshape(h, w, c)


class RemoteOracle(Oracle):
    """Client for a classifier served over HTTP.

    Sends ``POST <endpoint>/classify`` with the JSON image body and expects
    ``{"label": int}``. Non-200 statuses, timeouts and unparsable bodies are
    retried up to ``retries`` extra times, then raise ``OracleError``.
    """

    kind = "remote"

    def __init__(self, endpoint: str, class_count: int = 1000, timeout: float = 10.0,
                 retries: int = 3, backoff: float = 0.0, session: requests.Session | None = None):
        super().__init__(class_count)
        endpoint = endpoint.rstrip("/")
        self.url = endpoint if endpoint.endswith("/classify") else endpoint + "/classify"
        self.timeout = timeout
        self.retries = int(retries)
        self.backoff = backoff
        self._session = session or requests.Session()
        self._session_lock = threading.Lock()

    def _round_trip(self, body: dict) -> int:
        try:
            resp = self._session.post(self.url, json=body, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"request to {self.url} failed: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(f"{self.url} returned HTTP {resp.status_code}")
        try:
            label = resp.json()["label"]
        except (ValueError, KeyError, TypeError) as exc:
            raise TransportError(f"malformed response from {self.url}: {resp.text[:200]!r}") from exc
        if isinstance(label, bool) or not isinstance(label, int) or not 0 <= label < self.class_count:
            raise TransportError(f"malformed label from {self.url}: {label!r}")
        return label

    def _predict(self, img):
        body = encode_image(img)
        last = None
        for attempt in range(self.retries + 1):
            try:
                return self._round_trip(body)
            except TransportError as exc:
                last = exc
                logger.warning("classify attempt %d/%d failed: %s", attempt + 1, self.retries + 1, exc)
                if self.backoff and attempt < self.retries:
                    time.sleep(self.backoff * 2**attempt)
        raise OracleError(f"giving up after {self.retries + 1} attempts: {last}")


def make_remote_oracle(endpoint: str, timeout: float = 10.0, retries: int = 3,
                       class_count: int = 1000) -> RemoteOracle:
    return RemoteOracle(endpoint, class_count=class_count, timeout=timeout, retries=retries)


class ReplayOracle(Oracle):
    """Answers from a recorded ``image-hash -> label`` trace; unknown images are an error."""

    kind = "replay"

    def __init__(self, trace: dict[str, int], class_count: int):
        super().__init__(class_count)
        self.trace = {str(k): int(v) for k, v in trace.items()}

    def _predict(self, img):
        key = image_hash(img)
        try:
            return self.trace[key]
        except KeyError:
            raise ReplayMissError(f"no recorded label for image {key[:16]}...") from None

    @classmethod
    def load(cls, path) -> "ReplayOracle":
        data = json.loads(Path(path).read_text())
        try:
            return cls(data["trace"], data["class_count"])
        except KeyError as exc:
            raise ValueError(f"replay trace {path} is missing field {exc}") from None


class RecordingOracle(Oracle):
    """Wraps an oracle and records every answered query for later replay."""

    def __init__(self, inner: Oracle):
        super().__init__(inner.class_count)
        self.inner = inner
        self.kind = inner.kind
        self.trace: dict[str, int] = {}

    def _predict(self, img):
        label = self.inner.query(img)
        with self._lock:
            self.trace[image_hash(img)] = label
        return label

    def save(self, path) -> None:
        payload = {"class_count": self.class_count, "trace": dict(sorted(self.trace.items()))}
        Path(path).write_text(json.dumps(payload, indent=1))
