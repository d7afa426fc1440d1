import json

import pytest
from hypothesis import given, settings, strategies as st

from core.errors import ConflictError, NotFoundError, ValidationError
from core.model import ReadingEvent, SummaryReadingEvent, Tag
from core.search import InvertedIndex, parse_query, tokenize
from core.store import LOG_NAME, DimeStore


def reading(doc_id, session="s-1", start=0, text="", **kwargs):
    return ReadingEvent(session_id=session, start_time=start, end_time=start + 1000,
                        plain_text_content=text, targetted_resource_id=doc_id, **kwargs)


def test_add_and_get_element(store, layout):
    stored, created = store.add_element(layout.as_element())
    assert created and stored.id == 1
    assert store.get_element(1) == stored
    assert store.find_element(layout.content_hash) == stored
    with pytest.raises(NotFoundError):
        store.get_element(99)


def test_element_upsert_merges_tags(store, layout):
    first, _ = store.add_element(layout.as_element(tags=[Tag("a")]))
    second, created = store.add_element(layout.as_element(tags=[Tag("b")]))
    assert not created
    assert second.id == first.id
    assert second.tag_texts == ["a", "b"]
    assert store.counts()["elements"] == 1
    again, _ = store.add_element(layout.as_element(tags=[Tag("a")]))
    assert again == second


def test_events_need_a_stored_element(store):
    with pytest.raises(ValidationError):
        store.add_event(reading(1))


def test_event_ids_are_monotonic(store, layout):
    doc = store.post_element(layout.as_element())
    ids = [store.add_event(reading(doc.id, start=i)).id for i in range(3)]
    assert ids == [1, 2, 3]
    store.delete_event(3)
    assert store.add_event(reading(doc.id)).id == 4
    with pytest.raises(NotFoundError):
        store.delete_event(3)


def test_element_with_events_cannot_be_deleted(store, layout):
    doc = store.post_element(layout.as_element())
    event = store.add_event(reading(doc.id))
    with pytest.raises(ConflictError):
        store.delete_element(doc.id)
    store.delete_event(event.id)
    store.delete_element(doc.id)
    assert store.find_element(layout.content_hash) is None


def test_event_filters(store, layout):
    doc = store.post_element(layout.as_element())
    store.add_event(reading(doc.id, session="a"))
    store.add_event(reading(doc.id, session="b"))
    store.add_event(SummaryReadingEvent("a", 0, 5, targetted_resource_id=doc.id))
    assert len(store.events(sessionId="a")) == 2
    assert len(store.events(type="ReadingEvent")) == 2
    assert len(store.events(type="#SummaryReadingEvent", sessionId="a")) == 1
    assert len(store.events(elemId=str(doc.id))) == 3
    assert len(store.events(contentHash=layout.content_hash)) == 3
    assert store.events(contentHash="0" * 64) == []
    assert len(store.events(actor="PeyeDF")) == 3
    with pytest.raises(ValidationError):
        store.events(colour="red")
    with pytest.raises(ValidationError):
        store.events(elemId="x")


def test_element_filters(store, layout):
    store.post_element(layout.as_element(tags=[Tag("answer")]))
    assert len(store.elements(tag="answer")) == 1
    assert store.elements(tag="other") == []
    assert len(store.elements(type="ScientificDocument")) == 1


def test_text_search(store, layout):
    doc = store.post_element(layout.as_element())
    store.add_event(reading(doc.id, text="Saccades jump between fixations"))
    store.add_event(reading(doc.id, text="fixations jump"))
    assert len(store.search_events("JUMP fixations")) == 2
    assert len(store.search_events('"jump between"')) == 1
    assert len(store.search_events('"fixations jump"')) == 1
    assert [e.id for e in store.search_elements("refinding")] == [doc.id]
    assert store.search_elements("absent") == []
    with pytest.raises(ValidationError):
        store.search_events("   ")


def test_store_recovers_from_log(tmp_path, layout):
    path = str(tmp_path / "d")
    first = DimeStore(path, fsync=False)
    doc = first.post_element(layout.as_element(tags=[Tag("x")]))
    first.add_event(reading(doc.id, text="hello world"))
    first.add_event(reading(doc.id))
    first.delete_event(2)
    first.close()

    second = DimeStore(path, fsync=False)
    try:
        assert second.counts() == {"events": 1, "elements": 1}
        assert second.get_element(doc.id).tag_texts == ["x"]
        assert [e.id for e in second.search_events("hello")] == [1]
        assert second.add_event(reading(doc.id)).id == 3
    finally:
        second.close()


def test_torn_last_record_is_ignored(tmp_path, layout):
    path = tmp_path / "d"
    first = DimeStore(str(path), fsync=False)
    first.post_element(layout.as_element())
    first.close()
    with open(path / LOG_NAME, "a", encoding="utf-8") as f:
        f.write('{"op": "put", "kind": "ev')
    second = DimeStore(str(path), fsync=False)
    assert second.counts() == {"events": 0, "elements": 1}
    second.post_element(layout.as_element(tags=[Tag("after")]))
    second.close()
    third = DimeStore(str(path), fsync=False)
    assert third.get_element(1).tag_texts == ["after"]
    third.close()


def test_corrupt_middle_record_is_an_error(tmp_path, layout):
    path = tmp_path / "d"
    first = DimeStore(str(path), fsync=False)
    first.post_element(layout.as_element())
    first.close()
    log = path / LOG_NAME
    log.write_text("garbage\n" + log.read_text(encoding="utf-8"), encoding="utf-8")
    with pytest.raises(ValidationError):
        DimeStore(str(path), fsync=False)


def test_wipe(store, layout):
    store.post_element(layout.as_element())
    store.wipe()
    assert store.counts() == {"events": 0, "elements": 0}
    assert store.post_element(layout.as_element()).id == 1


def test_log_lines_are_canonical(store, layout):
    store.post_element(layout.as_element())
    with open(store.log_path, encoding="utf-8") as f:
        record = json.loads(f.readline())
    assert (record["op"], record["kind"], record["id"]) == ("put", "element", 1)


def test_tokenize_and_parse_query():
    assert tokenize("Eye-Tracking, in READING!") == ["eye", "tracking", "in", "reading"]
    assert parse_query('"exact phrase"') == (["exact", "phrase"], True)
    assert parse_query("two words") == (["two", "words"], False)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.sampled_from(["alpha", "beta", "gamma", "delta"]), min_size=1, max_size=6),
                min_size=1, max_size=6),
       st.lists(st.sampled_from(["alpha", "beta", "gamma", "delta"]), min_size=1, max_size=3))
def test_index_matches_brute_force(texts, query):
    index = InvertedIndex()
    for i, words in enumerate(texts):
        index.add(i, " ".join(words))
    expected = {i for i, words in enumerate(texts) if set(query) <= set(words)}
    assert index.search(" ".join(query)) == expected
    phrase = {i for i, words in enumerate(texts)
              if any(words[k:k + len(query)] == query for k in range(len(words)))}
    assert index.search('"' + " ".join(query) + '"') == phrase
