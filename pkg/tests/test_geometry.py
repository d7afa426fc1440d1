import math

import pytest
from hypothesis import given, settings, strategies as st

from core.errors import GeometryError, ValidationError
from core.geometry import (EyeRectangle, ViewGeometry, ViewportState, compute_viewport, point_to_paragraph_rect,
                           split_and_crop, unite_colliding_rects, union_area, visual_span_points)
from core.layout import DocumentLayout, PageLayout, TextBlock, load_layout, save_layout
from core.model import ClassSource, ReadingClass, Rect
from core.paragraphs import class_proportions, count_paragraph_fixations, read_paragraphs

from .conftest import make_layout


def eye(x, y, w, h, indices=(0,), page=0) -> EyeRectangle:
    return EyeRectangle(Rect(x, y, w, h, page, ReadingClass.UNKNOWN, ClassSource.EYE), indices)


# --- visual span ---------------------------------------------------------------

def test_three_degree_span_at_sixty_cm():
    span = visual_span_points(3.0)
    assert span / 28.346 == pytest.approx(3.1423, abs=1e-4)
    assert span == pytest.approx(89.07, abs=0.01)


def test_span_scales_with_distance():
    near = visual_span_points(3.0, ViewGeometry(eye_distance_cm=30))
    assert near == pytest.approx(visual_span_points(3.0) / 2)


@pytest.mark.parametrize("angle", [0, -1, 90, 120])
def test_span_rejects_bad_angles(angle):
    with pytest.raises(GeometryError):
        visual_span_points(angle)


def test_geometry_rejects_non_positive_values():
    with pytest.raises(GeometryError):
        ViewGeometry(eye_distance_cm=0)
    with pytest.raises(GeometryError):
        ViewGeometry(points_per_cm=float("inf"))


# --- paragraph rects ------------------------------------------------------------

def test_point_off_text_gives_none(layout):
    assert point_to_paragraph_rect(10, 10, 0, layout) is None
    assert point_to_paragraph_rect(100, 605, 7, layout) is None


def test_short_paragraph_is_returned_whole(layout):
    rect = point_to_paragraph_rect(100, 495, 0, layout)
    assert (rect.x, rect.y, rect.width, rect.height) == (72, 486, 468, 28)
    assert rect.class_source == ClassSource.EYE


def test_tall_paragraph_is_clipped_around_fixation(layout):
    span = visual_span_points(3.0)
    rect = point_to_paragraph_rect(100, 400, 0, layout)
    assert rect.height == pytest.approx(span)
    assert rect.y == pytest.approx(400 - span / 2)


def test_clip_is_clamped_to_paragraph(layout):
    span = visual_span_points(3.0)
    rect = point_to_paragraph_rect(100, 301, 0, layout)
    assert rect.y == pytest.approx(300)
    assert rect.top == pytest.approx(300 + span)


def test_paragraph_never_crosses_break(layout):
    rect = point_to_paragraph_rect(100, 605, 0, layout)
    assert (rect.y, rect.height) == (600, 14)


# --- uniting and cropping ----------------------------------------------------------

def test_unite_merges_overlaps_only():
    out = unite_colliding_rects([eye(0, 0, 10, 10, (0,)), eye(5, 5, 10, 10, (1,)), eye(50, 50, 5, 5, (2,))])
    assert len(out) == 2
    merged = next(e for e in out if e.united_count == 2)
    assert (merged.rect.x, merged.rect.y, merged.rect.width, merged.rect.height) == (0, 0, 15, 15)
    assert merged.fixation_indices == (0, 1)


def test_unite_rejects_mixed_pages():
    with pytest.raises(GeometryError):
        unite_colliding_rects([eye(0, 0, 1, 1), eye(0, 0, 1, 1, page=1)])


def test_unite_chain_resolves_fully():
    # a overlaps b, c overlaps the a+b box but neither alone
    a, b, c = eye(0, 0, 10, 10, (0,)), eye(20, 0, 10, 10, (1,)), eye(8, 0, 14, 5, (2,))
    out = unite_colliding_rects([a, b, c])
    assert len(out) == 1
    assert out[0].fixation_indices == (0, 1, 2)


rect_strategy = st.builds(
    lambda x, y, w, h, i: eye(x, y, w, h, (i,)),
    st.integers(0, 200), st.integers(0, 200), st.integers(1, 80), st.integers(1, 80), st.integers(0, 50),
)


@settings(max_examples=60, deadline=None)
@given(st.lists(rect_strategy, max_size=8))
def test_united_rects_are_disjoint_and_order_free(rects):
    out = unite_colliding_rects(rects)
    for i, a in enumerate(out):
        for b in out[i + 1:]:
            assert not a.rect.overlaps(b.rect)
    assert [e.rect for e in unite_colliding_rects(list(reversed(rects)))] == [e.rect for e in out]
    assert union_area([e.rect for e in out]) >= union_area([e.rect for e in rects]) - 1e-6


def test_split_and_crop_assigns_fixations():
    tall = eye(0, 0, 100, 250, (0, 1, 2))
    pieces = split_and_crop([tall], 100, fixation_ys=[240, 120, 10])
    assert [(p.rect.y, p.rect.height) for p in pieces] == [(150, 100), (50, 100), (0, 50)]
    assert [p.fixation_indices for p in pieces] == [(0,), (1,), (2,)]


def test_split_leaves_short_rects_alone():
    short = eye(0, 0, 10, 50)
    assert split_and_crop([short], 100) == [short]
    with pytest.raises(GeometryError):
        split_and_crop([short], 0)


@settings(max_examples=50, deadline=None)
@given(st.floats(1, 2000), st.floats(5, 400))
def test_split_pieces_cover_the_rect(height, max_height):
    pieces = split_and_crop([eye(0, 0, 10, height)], max_height)
    assert all(p.rect.height <= max_height + 1e-6 for p in pieces)
    assert sum(p.rect.height for p in pieces) == pytest.approx(height)


# --- viewport -------------------------------------------------------------------------

def test_viewport_spanning_two_pages(layout):
    rects = compute_viewport((0, 700), (612, 200), layout)
    assert [r.page_index for r in rects] == [0, 1]
    first, second = rects
    assert (first.y, first.height) == (0, 92)
    # page 1 starts at 802 in document space
    assert (second.height, second.top) == (98, 792)
    assert all(r.reading_class == ReadingClass.VIEWPORT for r in rects)


def test_viewport_zoom_shrinks_document_box(layout):
    rects = compute_viewport((0, 0), (612, 400), layout, zoom=2.0)
    assert rects[0].height == 200
    assert rects[0].width == 306


def test_viewport_state_round_trip():
    state = ViewportState(10, 20, 600, 400, 1.5)
    assert state.document_to_screen(*state.screen_to_document(30, 40)) == pytest.approx((30, 40))
    with pytest.raises(GeometryError):
        ViewportState(0, 0, 0, 10)


def test_union_area_counts_overlap_once():
    a, b = Rect(0, 0, 10, 10, 0), Rect(5, 0, 10, 10, 0)
    assert union_area([a, b]) == pytest.approx(150)
    assert union_area([a, b], within=[Rect(0, 0, 5, 5, 0)]) == pytest.approx(25)
    assert union_area([a, Rect(0, 0, 10, 10, 1)]) == pytest.approx(200)


# --- layout and paragraphs ---------------------------------------------------------------

def test_layout_paragraphs(layout):
    paragraphs = layout.paragraphs(0)
    assert len(paragraphs) == 3
    assert paragraphs[1].block_indices == (1, 2)
    assert layout.page_offset(1) == 802
    assert layout.document_to_page(*layout.page_to_document(1, 100, 450)) == (1, 100, 450)


def test_layout_rejects_blocks_outside_crop_box():
    with pytest.raises(ValidationError):
        DocumentLayout(pages=(PageLayout(100, 100, "1", (TextBlock(Rect(50, 50, 80, 10, 0), "x"),)),))


def test_layout_save_and_load(tmp_path, layout):
    path = tmp_path / "paper.json"
    save_layout(layout, str(path))
    loaded = load_layout(str(path))
    assert loaded.content_hash == layout.content_hash
    assert loaded.pages == layout.pages


def test_plain_text_layout(tmp_path):
    path = tmp_path / "notes.txt"
    path.write_text("first paragraph\n\nsecond paragraph", encoding="utf-8")
    loaded = load_layout(str(path))
    assert loaded.title == "notes"
    assert len(loaded.paragraphs(0)) == 2
    assert loaded.as_element().plain_text_content == "first paragraph\n\nsecond paragraph"


def test_count_hits(layout):
    assert layout.count_hits("reading") == (2, [0, 1])
    assert layout.find_text('"saccades"') == [0]


def test_read_paragraphs_needs_three_fixations(layout):
    fixations = [(0, 100, 495), (0, 100, 490), (0, 100, 500), (0, 100, 605), (0, 100, 605)]
    read = read_paragraphs(layout, fixations)
    assert [p.block_indices for p in read] == [(1, 2)]


def test_annotated_paragraphs_are_not_read(layout):
    fixations = [(0, 100, 495)] * 4
    mark = Rect(80, 490, 10, 5, 0, ReadingClass.CRITICAL, ClassSource.CLICK)
    counts = count_paragraph_fixations(layout, fixations, [mark])
    target = next(c for c in counts if c.paragraph.block_indices == (1, 2))
    assert target.fixations == 4 and target.annotated and not target.read


def test_class_proportions(layout):
    total = sum(r.area for r in layout.text_rects())
    marked = Rect(72, 486, 468, 28, 0, ReadingClass.READ, ClassSource.EYE)
    proportions = class_proportions(layout, [marked, marked])
    assert proportions == {ReadingClass.READ: pytest.approx(468 * 28 / total)}
    assert class_proportions(layout, []) == {}
    assert math.isclose(sum(class_proportions(
        layout, [r.classified(ReadingClass.READ, ClassSource.EYE) for r in layout.text_rects()]).values()), 1.0)
