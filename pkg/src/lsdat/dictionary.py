"""Hierarchical dictionary of successful initial adversarial samples.

Two tiers are kept: one ranked list per attacked class and one global list.
Scores count successful attacks; the global score of a sample counts its
successes against every class. Ranking is score descending, then most
recent success first, then sample id ascending.
"""

from __future__ import annotations

import json
import threading
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Container, Iterable

FORMAT_VERSION = 1


class DictionaryFormatError(ValueError):
    """A persisted dictionary could not be parsed."""


@dataclass
class DictionaryEntry:
    sample_id: str
    label: int
    score: int = 0
    first_used: int = 0
    last_used: int = 0

    def rank_key(self):
        return (-self.score, -self.last_used, self.sample_id)


class HierarchicalDictionary:
    def __init__(self, rng_seed: int = 0, max_entries: int | None = None):
        self.rng_seed = rng_seed
        self.max_entries = max_entries
        self.clock = 0
        self.global_entries: list[DictionaryEntry] = []
        self.class_entries: dict[int, list[DictionaryEntry]] = {}
        self._lock = threading.RLock()

    def __eq__(self, other):
        if not isinstance(other, HierarchicalDictionary):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __len__(self):
        return len(self.global_entries)

    # selection

    def next_candidates(self, target: int, budget: int, pool: Iterable[tuple[str, int]] = (),
                        allowed: Container[str] | None = None) -> list[tuple[str, int]]:
        """Ordered ``(sample_id, label)`` pairs to try against class ``target``.

        Class-specific entries first, then global entries not yet listed, then
        ``pool`` draws, truncated to ``budget``. Samples labelled ``target`` are
        skipped, as are dictionary entries outside ``allowed`` when given.
        ``pool`` is consumed lazily and only as far as needed.
        """
        if budget < 1:
            raise ValueError("budget must be >= 1")
        out: list[tuple[str, int]] = []
        seen: set[str] = set()

        def take(sid, label):
            if sid in seen or label == target:
                return
            seen.add(sid)
            out.append((sid, label))

        with self._lock:
            tiers = list(self.class_entries.get(target, ())) + list(self.global_entries)
        for e in tiers:
            if len(out) >= budget:
                return out
            if allowed is None or e.sample_id in allowed:
                take(e.sample_id, e.label)
        if len(out) < budget:
            for sid, label in pool:
                take(sid, label)
                if len(out) >= budget:
                    break
        return out[:budget]

    def top(self, n: int, target: int | None = None) -> list[DictionaryEntry]:
        if n < 1:
            raise ValueError("n must be >= 1")
        with self._lock:
            entries = self.global_entries if target is None else self.class_entries.get(target, [])
            return [DictionaryEntry(**asdict(e)) for e in entries[:n]]

    # mutation

    def record_success(self, sample_id: str, sample_label: int, target: int) -> None:
        with self._lock:
            self.clock += 1
            self._bump(self.global_entries, sample_id, sample_label)
            self._bump(self.class_entries.setdefault(int(target), []), sample_id, sample_label)

    def _bump(self, entries: list[DictionaryEntry], sample_id: str, label: int) -> None:
        for e in entries:
            if e.sample_id == sample_id:
                e.score += 1
                e.last_used = self.clock
                break
        else:
            entries.append(DictionaryEntry(sample_id, int(label), 1, self.clock, self.clock))
        entries.sort(key=DictionaryEntry.rank_key)
        if self.max_entries is not None:
            del entries[self.max_entries:]

    def validate(self) -> None:
        """Raise ``AssertionError`` if ordering or tier-membership invariants are broken."""
        with self._lock:
            lists = [self.global_entries, *self.class_entries.values()]
            for entries in lists:
                keys = [e.rank_key() for e in entries]
                assert keys == sorted(keys), "entries out of rank order"
                assert all(e.score >= 1 for e in entries), "stored entry with zero score"
                ids = [e.sample_id for e in entries]
                assert len(ids) == len(set(ids)), "duplicate entry"
            if self.max_entries is None:
                glob = {e.sample_id: e for e in self.global_entries}
                for cls, entries in self.class_entries.items():
                    for e in entries:
                        g = glob.get(e.sample_id)
                        assert g is not None, f"{e.sample_id} in class {cls} but not global"
                        assert g.score >= e.score, f"{e.sample_id} class score exceeds global score"

    # persistence

    def to_dict(self) -> dict:
        with self._lock:
            return {
                "version": FORMAT_VERSION,
                "rng_seed": self.rng_seed,
                "max_entries": self.max_entries,
                "clock": self.clock,
                "global": [asdict(e) for e in self.global_entries],
                "classes": {str(k): [asdict(e) for e in v] for k, v in sorted(self.class_entries.items())},
            }

    @classmethod
    def from_dict(cls, data: dict) -> "HierarchicalDictionary":
        if not isinstance(data, dict):
            raise DictionaryFormatError("top level must be an object")
        version = _field(data, "version", int, "")
        if version != FORMAT_VERSION:
            raise DictionaryFormatError(f"unsupported version {version}")
        d = cls(rng_seed=data.get("rng_seed", 0), max_entries=data.get("max_entries"))
        d.global_entries = _entries(_field(data, "global", list, ""), "global")
        classes = _field(data, "classes", dict, "")
        for key, raw in classes.items():
            try:
                label = int(key)
            except ValueError:
                raise DictionaryFormatError(f"classes: key {key!r} is not an integer label") from None
            if not isinstance(raw, list):
                raise DictionaryFormatError(f"classes.{key}: expected a list")
            d.class_entries[label] = _entries(raw, f"classes.{key}")
        clock = data.get("clock")
        if clock is None:
            clock = max((e.last_used for e in d.global_entries), default=0)
        d.clock = int(clock)
        return d

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "HierarchicalDictionary":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise DictionaryFormatError(f"{path}: not valid JSON ({exc})") from None
        return cls.from_dict(data)


def _field(obj: dict, name: str, kind: type, where: str):
    path = f"{where}.{name}" if where else name
    if name not in obj:
        raise DictionaryFormatError(f"missing field {path!r}")
    value = obj[name]
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise DictionaryFormatError(f"field {path!r} must be {kind.__name__}, got {type(value).__name__}")
    return value


def _entries(raw: list, where: str) -> list[DictionaryEntry]:
    out = []
    for n, item in enumerate(raw):
        at = f"{where}[{n}]"
        if not isinstance(item, dict):
            raise DictionaryFormatError(f"{at}: expected an object")
        sid = item.get("sample_id")
        if not isinstance(sid, str):
            raise DictionaryFormatError(f"field '{at}.sample_id' must be a string")
        out.append(DictionaryEntry(
            sample_id=sid,
            label=_field(item, "label", int, at),
            score=_field(item, "score", int, at),
            first_used=item.get("first_used", _field(item, "last_used", int, at)),
            last_used=_field(item, "last_used", int, at),
        ))
    out.sort(key=DictionaryEntry.rank_key)
    return out


def random_pool(samples: list[tuple[str, int]], rng) -> Iterable[tuple[str, int]]:
    """Yield ``samples`` in an order drawn from ``rng`` (a ``numpy`` Generator)."""
    for idx in rng.permutation(len(samples)):
        yield samples[idx]

