import json

import pytest
from hypothesis import given, strategies as st

from core.errors import ValidationError
from core.model import (APP_ID_PREFIX, ClassSource, PageEyeData, READING_EVENT_TYPE, ReadingClass,
                        ReadingEvent, Rect, ScientificDocument, SearchRecord, SummaryReadingEvent, Tag,
                        TagAnchor, compute_content_hash, deserialize_element, deserialize_event,
                        make_app_id, normalize_type, serialize_element, serialize_event, strip_app_id)


def reading_event(**kwargs) -> ReadingEvent:
    values = dict(
        session_id="s-1", start_time=1000, end_time=5000,
        page_numbers=(0, 1), page_labels=("1", "2"),
        page_rects=(Rect(0, 0, 612, 400, 0, ReadingClass.VIEWPORT, ClassSource.VIEWPORT),),
        plain_text_content="visible words",
        page_eye_data=(PageEyeData(0, (10.0, 20.0), (700.0, 690.0), (200.0, 250.0), (3.1, 3.2), (0.0, 300.0)),),
        targetted_resource_id=1,
    )
    values.update(kwargs)
    return ReadingEvent(**values)


def test_content_hash_is_sha256_hex():
    assert compute_content_hash("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"


def test_app_id_round_trip():
    h = compute_content_hash("hello")
    assert make_app_id(h) == APP_ID_PREFIX + h
    assert strip_app_id(make_app_id(h)) == h


@pytest.mark.parametrize("bad", ["", "ABC", "x" * 64, "0" * 63])
def test_make_app_id_rejects_non_digests(bad):
    with pytest.raises(ValidationError):
        make_app_id(bad)


def test_normalize_type_accepts_short_names():
    assert normalize_type("ReadingEvent") == READING_EVENT_TYPE
    assert normalize_type("#ReadingEvent") == READING_EVENT_TYPE
    assert normalize_type(READING_EVENT_TYPE) == READING_EVENT_TYPE


def test_rect_rejects_negative_size_and_page():
    with pytest.raises(ValidationError):
        Rect(0, 0, -1, 10, 0)
    with pytest.raises(ValidationError):
        Rect(0, 0, 1, 10, -1)
    with pytest.raises(ValidationError):
        Rect(0, float("nan"), 1, 1, 0)


def test_rect_geometry():
    a = Rect(0, 0, 10, 10, 0)
    b = Rect(5, 5, 10, 10, 0)
    assert a.overlaps(b)
    assert a.intersection(b) == Rect(5, 5, 5, 5, 0)
    assert a.union(b) == Rect(0, 0, 15, 15, 0)
    assert not a.overlaps(Rect(5, 5, 10, 10, 1))
    # touching edges share no area
    assert not a.overlaps(Rect(10, 0, 5, 5, 0))


def test_page_eye_data_requires_equal_lengths():
    with pytest.raises(ValidationError):
        PageEyeData(0, (1.0, 2.0), (1.0,), (1.0, 2.0), (1.0, 2.0), (0.0, 1.0))


def test_page_eye_data_requires_chronological_order():
    with pytest.raises(ValidationError):
        PageEyeData(0, (1.0, 2.0), (1.0, 2.0), (1.0, 2.0), (1.0, 2.0), (5.0, 1.0))


def test_reading_event_rects_must_be_on_listed_pages():
    with pytest.raises(ValidationError):
        reading_event(page_rects=(Rect(0, 0, 1, 1, 3),))


def test_reading_event_end_not_before_start():
    with pytest.raises(ValidationError):
        reading_event(start_time=10, end_time=5)


def test_reading_event_json_round_trip():
    event = reading_event(id=7)
    assert deserialize_event(serialize_event(event)) == event
    data = json.loads(serialize_event(event))
    assert data["@type"] == READING_EVENT_TYPE
    assert data["targettedResource"] == {"id": 1}
    assert data["pageEyeData"][0]["Xs"] == [10.0, 20.0]


def test_summary_event_round_trip():
    summary = SummaryReadingEvent(
        session_id="s-1", start_time=0, end_time=100000,
        search_queries=(SearchRecord("gaze", 3, (0, 1)),),
        proportions={ReadingClass.READ: 0.25, ReadingClass.CRITICAL: 0.1},
        targetted_resource_id=1,
    )
    restored = deserialize_event(serialize_event(summary))
    assert restored == summary
    assert json.loads(serialize_event(summary))["proportions"] == {"20": 0.25, "30": 0.1}


def test_summary_proportions_bounded():
    with pytest.raises(ValidationError):
        SummaryReadingEvent("s", 0, 1, proportions={ReadingClass.READ: 1.5})


def test_document_identity_follows_text():
    doc = ScientificDocument.from_text("some text", title="T")
    assert doc.app_id == make_app_id(doc.content_hash)
    with pytest.raises(ValidationError):
        ScientificDocument(content_hash=compute_content_hash("other"), plain_text_content="some text")
    with pytest.raises(ValidationError):
        ScientificDocument(content_hash=doc.content_hash, plain_text_content="some text",
                           app_id=APP_ID_PREFIX + "0" * 64)


def test_document_tags_merge_without_duplicates():
    anchor = TagAnchor(0, Rect(1, 2, 3, 4, 0), "selected")
    doc = ScientificDocument.from_text("x", tags=(Tag("a"),))
    merged = doc.with_tags([Tag("a"), Tag("b", anchor)])
    assert merged.tag_texts == ["a", "b"]
    assert deserialize_element(serialize_element(merged)) == merged


def test_tag_anchor_rect_on_anchor_page():
    with pytest.raises(ValidationError):
        TagAnchor(1, Rect(0, 0, 1, 1, 0))


@pytest.mark.parametrize("raw", [
    "not json",
    "[]",
    "{}",
    '{"@type": "#Unknown", "sessionId": "s", "start": 0, "end": 1}',
    '{"@type": "#ReadingEvent", "sessionId": "", "start": 0, "end": 1}',
    '{"@type": "#ReadingEvent", "sessionId": "s", "start": "0", "end": 1}',
    '{"@type": "#ReadingEvent", "sessionId": "s", "start": 0, "end": 1, "pageRects": [{"origin": 1}]}',
    '{"@type": "#SummaryReadingEvent", "sessionId": "s", "start": 0, "end": 1, "proportions": {"x": 1}}',
])
def test_deserialize_event_rejects_junk(raw):
    with pytest.raises(ValidationError):
        deserialize_event(raw)


json_values = st.recursive(
    st.none() | st.booleans() | st.integers() | st.floats(allow_nan=False) | st.text(max_size=5),
    lambda children: st.lists(children, max_size=3) | st.dictionaries(st.text(max_size=8), children, max_size=4),
    max_leaves=12,
)


@given(st.dictionaries(
    st.sampled_from(["@type", "sessionId", "start", "end", "pageNumbers", "pageLabels", "pageRects",
                     "pageEyeData", "targettedResource", "proportions", "searchQueries", "id", "actor"]),
    json_values, max_size=8))
def test_deserialize_event_is_total(data):
    try:
        deserialize_event(json.dumps(data))
    except ValidationError:
        pass


@given(st.text(max_size=200))
def test_document_hash_is_deterministic(text):
    assert ScientificDocument.from_text(text).content_hash == compute_content_hash(text)
