import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lsdat.dictionary import (DictionaryEntry, DictionaryFormatError, HierarchicalDictionary,
                              random_pool)

POOL = [("p0", 1), ("p1", 0), ("p2", 3), ("p3", 2), ("p4", 4)]


def fixture_dict():
    d = HierarchicalDictionary()
    d.class_entries[0] = [DictionaryEntry("A", 1, 3, 1, 4)]
    d.global_entries = [DictionaryEntry("B", 2, 5, 2, 6), DictionaryEntry("A", 1, 3, 1, 4)]
    d.clock = 6
    d.validate()
    return d


def test_cold_start_draws_from_pool():
    d = HierarchicalDictionary()
    out = d.next_candidates(0, 3, pool=iter(POOL))
    assert out == [("p0", 1), ("p2", 3), ("p3", 2)]
    assert all(label != 0 for _, label in out)


def test_class_then_global_then_random():
    d = fixture_dict()
    out = d.next_candidates(0, 3, pool=iter(POOL))
    assert [sid for sid, _ in out] == ["A", "B", "p0"]


def test_budget_one_takes_class_top():
    assert fixture_dict().next_candidates(0, 1, pool=iter(POOL)) == [("A", 1)]


def test_other_class_falls_back_to_global():
    out = fixture_dict().next_candidates(5, 3, pool=iter(POOL))
    assert [sid for sid, _ in out] == ["B", "A", "p0"]


def test_target_label_entries_are_skipped():
    # B has label 2, so it can never seed an attack on class 2
    out = fixture_dict().next_candidates(2, 4, pool=iter(POOL))
    assert [sid for sid, _ in out] == ["A", "p0", "p1", "p2"]


def test_allowed_filter_and_short_pool():
    out = fixture_dict().next_candidates(0, 10, pool=iter(POOL), allowed={"B"})
    assert [sid for sid, _ in out] == ["B", "p0", "p2", "p3", "p4"]


def test_pool_is_consumed_lazily():
    drawn = []

    def pool():
        for item in POOL:
            drawn.append(item)
            yield item

    fixture_dict().next_candidates(0, 3, pool=pool())
    assert drawn == [POOL[0]]


def test_budget_validation():
    with pytest.raises(ValueError):
        HierarchicalDictionary().next_candidates(0, 0)


def test_record_success_creates_and_increments():
    d = HierarchicalDictionary()
    d.record_success("A", 3, 7)
    assert [(e.sample_id, e.score) for e in d.class_entries[7]] == [("A", 1)]
    assert [(e.sample_id, e.score) for e in d.global_entries] == [("A", 1)]
    d.record_success("A", 3, 7)
    assert d.class_entries[7][0].score == 2 and d.global_entries[0].score == 2
    d.validate()


class ReferenceMap:
    """Plain id -> (score, last_used) map, sorted only when read."""

    def __init__(self):
        self.rows = {}
        self.clock = 0

    def hit(self, sid):
        self.clock += 1
        score, _ = self.rows.get(sid, (0, 0))
        self.rows[sid] = (score + 1, self.clock)

    def order(self):
        return sorted(self.rows, key=lambda s: (-self.rows[s][0], -self.rows[s][1], s))


def test_reorder_after_repeated_success():
    d = HierarchicalDictionary()
    ref = ReferenceMap()
    for sid in ["B", "A", "B", "A", "B"]:
        d.record_success(sid, 1, 0)
        ref.hit(sid)
    assert [(e.sample_id, e.score) for e in d.global_entries] == [("B", 3), ("A", 2)]
    for _ in range(2):
        d.record_success("A", 1, 0)
        ref.hit("A")
    assert [(e.sample_id, e.score) for e in d.global_entries] == [("A", 4), ("B", 3)]
    assert [e.sample_id for e in d.global_entries] == ref.order()


@settings(max_examples=100)
@given(st.lists(st.tuples(st.sampled_from("ABCDEFG"), st.integers(0, 3)), max_size=60))
def test_matches_reference_map(events):
    d = HierarchicalDictionary()
    glob = ReferenceMap()
    per_class = {}
    for sid, target in events:
        d.record_success(sid, ord(sid) % 5 + 4, target)
        glob.hit(sid)
        ref = per_class.setdefault(target, ReferenceMap())
        ref.clock = glob.clock - 1
        ref.hit(sid)
        d.validate()
    assert [e.sample_id for e in d.global_entries] == glob.order()
    assert [e.score for e in d.global_entries] == [glob.rows[s][0] for s in glob.order()]
    for target, ref in per_class.items():
        assert [e.sample_id for e in d.class_entries[target]] == ref.order()


def test_top():
    d = HierarchicalDictionary()
    assert d.top(3) == []
    d.record_success("A", 1, 0)
    assert [e.sample_id for e in d.top(1)] == ["A"]
    d.record_success("B", 2, 0)
    d.record_success("B", 2, 3)
    assert [e.sample_id for e in d.top(10)] == ["B", "A"]
    assert [e.sample_id for e in d.top(10, target=3)] == ["B"]
    assert d.top(5, target=9) == []
    # returned entries are copies
    d.top(1)[0].score = 100
    assert d.global_entries[0].score == 2
    with pytest.raises(ValueError):
        d.top(0)


def test_round_trip(tmp_path):
    empty = HierarchicalDictionary()
    empty.save(tmp_path / "e.json")
    assert HierarchicalDictionary.load(tmp_path / "e.json") == empty

    d = HierarchicalDictionary(rng_seed=4)
    for sid, target in [("A", 0), ("B", 1), ("A", 2), ("C", 0), ("A", 0)]:
        d.record_success(sid, 5, target)
    d.save(tmp_path / "d.json")
    back = HierarchicalDictionary.load(tmp_path / "d.json")
    assert back == d
    assert [e.sample_id for e in back.global_entries] == ["A", "C", "B"]
    assert back.clock == d.clock
    back.record_success("B", 5, 1)
    d.record_success("B", 5, 1)
    assert back == d


def test_truncated_file(tmp_path):
    d = HierarchicalDictionary()
    d.record_success("A", 1, 0)
    text = json.dumps(d.to_dict())
    (tmp_path / "t.json").write_text(text[: len(text) // 2])
    with pytest.raises(DictionaryFormatError):
        HierarchicalDictionary.load(tmp_path / "t.json")


@pytest.mark.parametrize("mutate,field", [
    (lambda x: x.pop("global"), "global"),
    (lambda x: x.update(version="1"), "version"),
    (lambda x: x["global"][0].pop("score"), "global[0].score"),
    (lambda x: x["global"][0].update(sample_id=3), "global[0].sample_id"),
    (lambda x: x["classes"].update({"x": []}), "classes"),
])
def test_malformed_names_field(mutate, field):
    d = HierarchicalDictionary()
    d.record_success("A", 1, 0)
    raw = d.to_dict()
    mutate(raw)
    with pytest.raises(DictionaryFormatError, match=field.replace("[", r"\[").replace("]", r"\]")):
        HierarchicalDictionary.from_dict(raw)


def test_validate_catches_broken_order():
    d = fixture_dict()
    d.global_entries.reverse()
    with pytest.raises(AssertionError):
        d.validate()
    d = fixture_dict()
    d.class_entries[0][0].score = 9
    with pytest.raises(AssertionError):
        d.validate()


def test_selection_is_deterministic():
    d = fixture_dict()
    runs = [d.next_candidates(0, 4, pool=random_pool(POOL, np.random.default_rng(11))) for _ in range(3)]
    assert runs[0] == runs[1] == runs[2]


def test_max_entries_truncates():
    d = HierarchicalDictionary(max_entries=2)
    for sid in "ABC":
        d.record_success(sid, 1, 0)
    assert len(d.global_entries) == 2
