"""
Reading geometry: visual-angle spans, fixation-to-paragraph mapping,
eye-rectangle uniting and cropping, and viewport computation.

All page-space values are in points with the origin at the page's bottom left.
"""

import math
from dataclasses import dataclass, replace
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import GeometryError
from .layout import DocumentLayout
from .model import ClassSource, ReadingClass, Rect


READING_ANGLE_DEG = 3.0
DEFAULT_POINTS_PER_CM = 28.346  # 72 pt/inch
DEFAULT_EYE_DISTANCE_CM = 60.0


@dataclass(frozen=True)
class ViewGeometry:
    """Screen density and eye-to-screen distance."""
    points_per_cm: float = DEFAULT_POINTS_PER_CM
    eye_distance_cm: float = DEFAULT_EYE_DISTANCE_CM

    def __post_init__(self):
        for name in ("points_per_cm", "eye_distance_cm"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise GeometryError("must be strictly positive", name)

    def at_distance(self, distance_cm: Optional[float]) -> "ViewGeometry":
        """Same density at a measured eye distance (unknown keeps the default)."""
        if distance_cm is None or distance_cm <= 0:
            return self
        return replace(self, eye_distance_cm=float(distance_cm))


def visual_span_points(angle_degrees: float, geometry: ViewGeometry = ViewGeometry()) -> float:
    """Page points covered by a visual angle at the configured distance."""
    if not 0.0 < angle_degrees < 90.0:
        raise GeometryError("angle must lie strictly between 0 and 90 degrees", "angle")
    span_cm = 2.0 * geometry.eye_distance_cm * math.tan(math.radians(angle_degrees) / 2.0)
    return span_cm * geometry.points_per_cm


def default_max_height(geometry: ViewGeometry = ViewGeometry()) -> float:
    return 2.0 * visual_span_points(READING_ANGLE_DEG, geometry)


def point_to_paragraph_rect(x: float, y: float, page_index: int, layout: DocumentLayout,
                            geometry: ViewGeometry = ViewGeometry()) -> Optional[Rect]:
    """
    Rect of the paragraph under a fixation, clipped to the reading span.

    Returns None when the point falls on no text block. A paragraph taller than
    the 3 degree span is cut to a window of that height centered on the
    fixation and clamped to the paragraph.
    """
    hit = layout.block_at(page_index, x, y)
    if hit is None:
        return None
    block_index = hit[0]
    paragraph = next(p for p in layout.paragraphs(page_index) if block_index in p.block_indices)
    rect = paragraph.rect.classified(ReadingClass.UNKNOWN, ClassSource.EYE)
    span = visual_span_points(READING_ANGLE_DEG, geometry)
    if rect.height <= span:
        return rect
    bottom = min(max(y - span / 2.0, rect.y), rect.top - span)
    return replace(rect, y=bottom, height=span)


@dataclass(frozen=True)
class EyeRectangle:
    """A paragraph rect produced by gaze, with the fixations that produced it."""
    rect: Rect
    fixation_indices: Tuple[int, ...]
    united_count: int = 1

    def __post_init__(self):
        if self.rect.class_source != ClassSource.EYE:
            raise GeometryError("eye rectangles must have classSource eye", "classSource")
        object.__setattr__(self, "fixation_indices", tuple(self.fixation_indices))
        if any(i < 0 for i in self.fixation_indices):
            raise GeometryError("fixation indices must be >= 0", "fixationIndices")


def _check_same_page(rects: Sequence[EyeRectangle]):
    pages = {e.rect.page_index for e in rects}
    if len(pages) > 1:
        raise GeometryError(f"rects span pages {sorted(pages)}", "pageIndex")


def _sort_key(e: EyeRectangle):
    return (-e.rect.top, e.rect.x, -e.rect.y, e.rect.right)


def unite_colliding_rects(rects: Iterable[EyeRectangle]) -> List[EyeRectangle]:
    """
    Merge overlapping eye rectangles into their bounding boxes.

    Merging repeats until no two outputs share positive area, so the result
    does not depend on input order. Output is sorted top-down.
    """
    items = list(rects)
    _check_same_page(items)
    merged = True
    while merged:
        merged = False
        result: List[EyeRectangle] = []
        for item in items:
            for i, other in enumerate(result):
                if item.rect.overlaps(other.rect):
                    box = other.rect.union(item.rect)
                    box = replace(box, reading_class=max(other.rect.reading_class, item.rect.reading_class))
                    result[i] = EyeRectangle(
                        box,
                        tuple(sorted(set(other.fixation_indices) | set(item.fixation_indices))),
                        other.united_count + item.united_count,
                    )
                    merged = True
                    break
            else:
                result.append(item)
        items = result
    return sorted(
        (replace(e, fixation_indices=tuple(sorted(set(e.fixation_indices)))) for e in items),
        key=_sort_key,
    )


def split_and_crop(rects: Iterable[EyeRectangle], max_height: float,
                   fixation_ys: Optional[Sequence[float]] = None) -> List[EyeRectangle]:
    """
    Split rects taller than max_height into top-down pieces.

    fixation_ys maps a fixation index to its page y; each index goes to the
    piece containing that y (the upper piece on a shared edge). Without it,
    indices stay on the top piece. Pieces that hold no fixation keep an empty
    index tuple.
    """
    if not max_height > 0:
        raise GeometryError("must be > 0", "maxHeight")
    out: List[EyeRectangle] = []
    for e in rects:
        r = e.rect
        if r.height <= max_height:
            out.append(e)
            continue
        count = int(math.ceil(r.height / max_height - 1e-9))
        bounds = []
        for k in range(count):
            top = r.top - k * max_height
            bottom = r.y if k == count - 1 else max(r.y, top - max_height)
            bounds.append((bottom, top))
        assigned: List[List[int]] = [[] for _ in bounds]
        for index in e.fixation_indices:
            if fixation_ys is None or index >= len(fixation_ys):
                assigned[0].append(index)
                continue
            fy = fixation_ys[index]
            slot = next((k for k, (b, t) in enumerate(bounds) if b <= fy <= t), None)
            if slot is None:
                slot = 0 if fy > r.top else len(bounds) - 1
            assigned[slot].append(index)
        for (bottom, top), indices in zip(bounds, assigned):
            out.append(EyeRectangle(replace(r, y=bottom, height=top - bottom), tuple(indices), e.united_count))
    return out


@dataclass(frozen=True)
class ViewportState:
    """Window position over the document: scroll offset and size, document points."""
    scroll_x: float
    scroll_y: float
    width: float
    height: float
    zoom: float = 1.0

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise GeometryError("window size must be positive", "window")
        if not self.zoom > 0:
            raise GeometryError("must be positive", "zoom")

    @property
    def document_box(self) -> Tuple[float, float, float, float]:
        """(left, top, right, bottom) in document space."""
        return (self.scroll_x, self.scroll_y,
                self.scroll_x + self.width / self.zoom, self.scroll_y + self.height / self.zoom)

    def screen_to_document(self, sx: float, sy: float) -> Tuple[float, float]:
        return self.scroll_x + sx / self.zoom, self.scroll_y + sy / self.zoom

    def document_to_screen(self, dx: float, dy: float) -> Tuple[float, float]:
        return (dx - self.scroll_x) * self.zoom, (dy - self.scroll_y) * self.zoom


def compute_viewport(scroll: Tuple[float, float], window: Tuple[float, float],
                     layout: DocumentLayout, zoom: float = 1.0) -> List[Rect]:
    """One viewport rect per page the window covers with positive area."""
    state = ViewportState(scroll[0], scroll[1], window[0], window[1], zoom)
    left, top, right, bottom = state.document_box
    rects = []
    for index, page in enumerate(layout.pages):
        page_top = layout.page_offset(index)
        x0, x1 = max(left, 0.0), min(right, page.width)
        y0, y1 = max(top, page_top), min(bottom, page_top + page.height)
        if x1 <= x0 or y1 <= y0:
            continue
        rects.append(Rect(x0, page_top + page.height - y1, x1 - x0, y1 - y0, index,
                          ReadingClass.VIEWPORT, ClassSource.VIEWPORT))
    return rects


def union_area(rects: Sequence[Rect], within: Optional[Sequence[Rect]] = None) -> float:
    """
    Area covered by the union of rects, optionally intersected with the
    union of `within`. Rects are compared on their own page only.
    """
    total = 0.0
    pages = {r.page_index for r in rects}
    for page in pages:
        a = [r for r in rects if r.page_index == page and r.area > 0]
        b = None if within is None else [r for r in within if r.page_index == page and r.area > 0]
        if not a or (b is not None and not b):
            continue
        everything = a + (b or [])
        xs = np.unique([v for r in everything for v in (r.x, r.right)])
        ys = np.unique([v for r in everything for v in (r.y, r.top)])
        cx = (xs[:-1] + xs[1:]) / 2.0
        cy = (ys[:-1] + ys[1:]) / 2.0
        cell = np.outer(np.diff(xs), np.diff(ys))
        covered = _coverage(a, cx, cy)
        if b is not None:
            covered &= _coverage(b, cx, cy)
        total += float(cell[covered].sum())
    return total


def _coverage(rects: Sequence[Rect], cx: np.ndarray, cy: np.ndarray) -> np.ndarray:
    mask = np.zeros((len(cx), len(cy)), dtype=bool)
    for r in rects:
        mask |= np.outer((cx > r.x) & (cx < r.right), (cy > r.y) & (cy < r.top))
    return mask
