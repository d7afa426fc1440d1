"""
Paragraph-level reading summaries: which paragraphs count as read and how
much of the document's text area each reading class covers.
"""

from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Tuple

from .geometry import union_area
from .layout import DocumentLayout, Paragraph
from .model import ANNOTATION_CLASSES, ClassSource, ReadingClass, Rect


READ_FIXATION_THRESHOLD = 3

# (page_index, x, y) in page space
PagePoint = Tuple[int, float, float]


@dataclass(frozen=True)
class ParagraphCount:
    paragraph: Paragraph
    fixations: int
    annotated: bool

    @property
    def read(self) -> bool:
        return self.fixations >= READ_FIXATION_THRESHOLD and not self.annotated


def count_paragraph_fixations(layout: DocumentLayout, fixations: Iterable[PagePoint],
                              annotations: Sequence[Rect] = ()) -> List[ParagraphCount]:
    """Fixation count per paragraph; a fixation counts when it lands on one of its blocks."""
    counts: Dict[Tuple[int, int], int] = {}
    for page_index, x, y in fixations:
        hit = layout.block_at(page_index, x, y)
        if hit is None:
            continue
        counts[(page_index, hit[0])] = counts.get((page_index, hit[0]), 0) + 1
    marked = [r for r in annotations if r.reading_class in ANNOTATION_CLASSES]
    result = []
    for paragraph in layout.all_paragraphs():
        n = sum(counts.get((paragraph.page_index, i), 0) for i in paragraph.block_indices)
        annotated = any(paragraph.rect.overlaps(r) for r in marked)
        result.append(ParagraphCount(paragraph, n, annotated))
    return result


def read_paragraphs(layout: DocumentLayout, fixations: Iterable[PagePoint],
                    annotations: Sequence[Rect] = ()) -> List[Paragraph]:
    """Unannotated paragraphs that received at least three fixations."""
    return [c.paragraph for c in count_paragraph_fixations(layout, fixations, annotations) if c.read]


def read_rects(paragraphs: Iterable[Paragraph]) -> List[Rect]:
    return [p.rect.classified(ReadingClass.READ, ClassSource.EYE) for p in paragraphs]


def class_proportions(layout: DocumentLayout, rects: Iterable[Rect]) -> Dict[ReadingClass, float]:
    """
    Fraction of the document's text area covered by each reading class.

    Rects of one class are united before measuring, so overlaps count once.
    Only classes that occur in `rects` appear in the result.
    """
    text = layout.text_rects()
    total = union_area(text)
    by_class: Dict[ReadingClass, List[Rect]] = {}
    for r in rects:
        if r.reading_class == ReadingClass.UNKNOWN:
            continue
        by_class.setdefault(r.reading_class, []).append(r)
    proportions = {}
    for reading_class, members in sorted(by_class.items()):
        covered = union_area(members, within=text) if total > 0 else 0.0
        proportions[reading_class] = min(1.0, covered / total) if total > 0 else 0.0
    return proportions
