"""Dataset manifests and image decoding.

A manifest is JSON::

    {"class_count": 10,
     "samples": [{"id": "s000", "path": "images/s000.npy", "label": 3}, ...]}

Paths are relative to the manifest. Supported image files: ``.png`` (8-bit,
divided by 255), ``.npy`` (float array in [0, 1]) and ``.raw`` (row-major
little-endian float64, requires a ``"shape": [H, W, C]`` field on the entry).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from ..oracle import Oracle


class DatasetError(ValueError):
    pass


@dataclass
class Sample:
    sample_id: str
    path: str
    label: int
    image: np.ndarray = field(repr=False, compare=False)


@dataclass
class DatasetManifest:
    samples: list[Sample]
    class_count: int

    def __len__(self):
        return len(self.samples)

    @property
    def ids(self) -> list[str]:
        return [s.sample_id for s in self.samples]

    def by_id(self) -> dict[str, Sample]:
        return {s.sample_id: s for s in self.samples}


def read_image(path, shape=None) -> np.ndarray:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".png":
        with Image.open(path) as im:
            arr = np.asarray(im)
        if arr.dtype != np.uint8:
            raise DatasetError(f"{path}: only 8-bit PNG is supported, got {arr.dtype}")
        img = arr.astype(float) / 255.0
    elif suffix == ".npy":
        img = np.load(path, allow_pickle=False).astype(float)
    elif suffix == ".raw":
        if shape is None:
            raise DatasetError(f"{path}: raw images need a 'shape' field")
        data = np.fromfile(path, dtype="<f8")
        if data.size != int(np.prod(shape)):
            raise DatasetError(f"{path}: {data.size} values do not fit shape {list(shape)}")
        img = data.reshape(shape)
    else:
        raise DatasetError(f"{path}: unsupported image format {suffix!r}")
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3:
        raise DatasetError(f"{path}: expected H x W x C, got shape {img.shape}")
    if not np.all(np.isfinite(img)) or img.min() < 0.0 or img.max() > 1.0:
        raise DatasetError(f"{path}: pixel values must be finite and within [0, 1]")
    return img


def write_image(path, img) -> None:
    path = Path(path)
    img = np.asarray(img, dtype=float)
    suffix = path.suffix.lower()
    if suffix == ".npy":
        np.save(path, img)
    elif suffix == ".raw":
        np.ascontiguousarray(img, dtype="<f8").tofile(path)
    elif suffix == ".png":
        arr = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
        if arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[:, :, 0]
        Image.fromarray(arr).save(path)
    else:
        raise DatasetError(f"{path}: unsupported image format {suffix!r}")


def load_dataset(manifest_path) -> DatasetManifest:
    manifest_path = Path(manifest_path)
    try:
        data = json.loads(manifest_path.read_text())
    except FileNotFoundError:
        raise DatasetError(f"manifest not found: {manifest_path}") from None
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{manifest_path}: invalid JSON ({exc})") from None
    try:
        class_count = int(data["class_count"])
        entries = data["samples"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"{manifest_path}: missing or invalid field {exc}") from None
    if class_count < 2:
        raise DatasetError(f"{manifest_path}: class_count must be >= 2")

    root = manifest_path.parent
    samples = []
    seen = set()
    for n, entry in enumerate(entries):
        try:
            sid = str(entry["id"])
            rel = entry["path"]
            label = entry["label"]
        except (KeyError, TypeError) as exc:
            raise DatasetError(f"{manifest_path}: sample {n} lacks field {exc}") from None
        if sid in seen:
            raise DatasetError(f"{manifest_path}: duplicate sample id {sid!r}")
        seen.add(sid)
        if isinstance(label, bool) or not isinstance(label, int) or not 0 <= label < class_count:
            raise DatasetError(f"{manifest_path}: sample {sid!r} has bad label {label!r}")
        file = root / rel
        if not file.exists():
            raise DatasetError(f"{manifest_path}: sample {sid!r} image not found: {file}")
        try:
            image = read_image(file, entry.get("shape"))
        except DatasetError:
            raise
        except Exception as exc:
            raise DatasetError(f"{manifest_path}: sample {sid!r} image {file} cannot be decoded: {exc}") from None
        samples.append(Sample(sid, str(rel), label, image))
    return DatasetManifest(samples, class_count)


def save_dataset(directory, images, labels, class_count: int, ids=None, fmt: str = "npy",
                 manifest_name: str = "manifest.json") -> Path:
    """Write images plus a manifest under ``directory``; return the manifest path."""
    directory = Path(directory)
    (directory / "images").mkdir(parents=True, exist_ok=True)
    ids = ids or [f"s{n:04d}" for n in range(len(images))]
    entries = []
    for sid, img, label in zip(ids, images, labels):
        rel = f"images/{sid}.{fmt}"
        write_image(directory / rel, img)
        entry = {"id": sid, "path": rel, "label": int(label)}
        if fmt == "raw":
            entry["shape"] = list(np.asarray(img).shape)
        entries.append(entry)
    path = directory / manifest_name
    path.write_text(json.dumps({"class_count": int(class_count), "samples": entries}, indent=1) + "\n")
    return path


def filter_correct(data: DatasetManifest, oracle: Oracle) -> tuple[DatasetManifest, int]:
    """Keep samples the oracle labels correctly; returns the filtered set and queries spent."""
    before = oracle.read_counter().total
    kept = [s for s in data.samples if oracle.query(s.image) == s.label]
    return DatasetManifest(kept, data.class_count), oracle.read_counter().total - before
