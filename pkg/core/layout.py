"""
Document layout: pages, crop boxes and text blocks.
Stands in for a PDF renderer's document model and handles layout save/load.
"""

import os
import json
from typing import Dict, List, Tuple, Optional, Iterable
from dataclasses import dataclass, field

from .errors import ValidationError
from .model import Rect, ScientificDocument, compute_content_hash


LAYOUT_VERSION = 1
DEFAULT_PAGE_SPACING = 10.0

# Used when laying out a bare text file
LETTER_PAGE = (612.0, 792.0)
TEXT_MARGIN = 72.0
TEXT_LINE_HEIGHT = 14.0
TEXT_CHARS_PER_LINE = 80

EPS = 1e-6


@dataclass(frozen=True)
class TextBlock:
    """A run of text occupying a rect on one page."""
    rect: Rect
    text: str
    paragraph_break_above: bool = False
    paragraph_break_below: bool = False

    def to_dict(self) -> Dict:
        return {
            "rect": [self.rect.x, self.rect.y, self.rect.width, self.rect.height],
            "text": self.text,
            "paragraphBreakAbove": self.paragraph_break_above,
            "paragraphBreakBelow": self.paragraph_break_below,
        }


@dataclass(frozen=True)
class PageLayout:
    """One page: its crop box, label and text blocks."""
    width: float
    height: float
    label: str
    text_blocks: Tuple[TextBlock, ...] = ()

    def to_dict(self) -> Dict:
        return {
            "cropBox": {"width": self.width, "height": self.height},
            "label": self.label,
            "textBlocks": [b.to_dict() for b in self.text_blocks],
        }


@dataclass(frozen=True)
class Paragraph:
    """Consecutive text blocks of one page not separated by a paragraph break."""
    page_index: int
    rect: Rect
    text: str
    block_indices: Tuple[int, ...]


@dataclass(frozen=True)
class DocumentLayout:
    """Abstract document: ordered pages plus the plain text that identifies it."""
    pages: Tuple[PageLayout, ...]
    title: str = ""
    uri: str = ""
    page_spacing: float = DEFAULT_PAGE_SPACING
    plain_text: str = ""
    content_hash: str = field(init=False, default="")
    _paragraphs: Tuple[Tuple[Paragraph, ...], ...] = field(init=False, repr=False, compare=False, default=())
    _offsets: Tuple[float, ...] = field(init=False, repr=False, compare=False, default=())

    def __post_init__(self):
        if not self.pages:
            raise ValidationError("a layout needs at least one page", "pages")
        if self.page_spacing < 0:
            raise ValidationError("must be >= 0", "pageSpacing")
        for index, page in enumerate(self.pages):
            if page.width <= 0 or page.height <= 0:
                raise ValidationError(f"page {index} crop box must have positive size", "cropBox")
            for block in page.text_blocks:
                r = block.rect
                if r.page_index != index:
                    raise ValidationError(f"block on page {index} has pageIndex {r.page_index}", "textBlocks")
                if r.x < -EPS or r.y < -EPS or r.right > page.width + EPS or r.top > page.height + EPS:
                    raise ValidationError(f"block outside the crop box of page {index}", "textBlocks")
        if not self.plain_text:
            object.__setattr__(self, "plain_text", self._joined_text())
        object.__setattr__(self, "content_hash", compute_content_hash(self.plain_text))
        object.__setattr__(self, "_paragraphs", tuple(self._find_paragraphs(i) for i in range(len(self.pages))))
        offsets, top = [], 0.0
        for page in self.pages:
            offsets.append(top)
            top += page.height + self.page_spacing
        object.__setattr__(self, "_offsets", tuple(offsets))

    def _joined_text(self) -> str:
        parts = []
        for page in self.pages:
            for block in page.text_blocks:
                if block.paragraph_break_above and parts:
                    parts.append("")
                parts.append(block.text)
                if block.paragraph_break_below:
                    parts.append("")
        return "\n".join(parts).strip("\n")

    def _find_paragraphs(self, page_index: int) -> Tuple[Paragraph, ...]:
        blocks = self.pages[page_index].text_blocks
        groups: List[List[int]] = []
        for i, block in enumerate(blocks):
            if groups and not block.paragraph_break_above and not blocks[i - 1].paragraph_break_below:
                groups[-1].append(i)
            else:
                groups.append([i])
        result = []
        for group in groups:
            rect = blocks[group[0]].rect
            for i in group[1:]:
                rect = rect.union(blocks[i].rect)
            text = "\n".join(blocks[i].text for i in group)
            result.append(Paragraph(page_index, rect, text, tuple(group)))
        return tuple(result)

    # --- queries -------------------------------------------------------------

    @property
    def page_count(self) -> int:
        return len(self.pages)

    def page_label(self, index: int) -> str:
        return self.pages[index].label or str(index)

    def has_page(self, index: int) -> bool:
        return 0 <= index < len(self.pages)

    def paragraphs(self, page_index: int) -> Tuple[Paragraph, ...]:
        if not self.has_page(page_index):
            return ()
        return self._paragraphs[page_index]

    def all_paragraphs(self) -> List[Paragraph]:
        return [p for page in self._paragraphs for p in page]

    def text_rects(self, page_index: Optional[int] = None) -> List[Rect]:
        """Rects of every text block, optionally restricted to one page."""
        indices = range(len(self.pages)) if page_index is None else [page_index]
        return [b.rect for i in indices for b in self.pages[i].text_blocks]

    def block_at(self, page_index: int, x: float, y: float) -> Optional[Tuple[int, TextBlock]]:
        if not self.has_page(page_index):
            return None
        for i, block in enumerate(self.pages[page_index].text_blocks):
            if block.rect.contains_point(x, y):
                return i, block
        return None

    def visible_text(self, viewport_rects: Iterable[Rect]) -> str:
        """All text of blocks overlapping any of the given rects, in reading order."""
        rects = list(viewport_rects)
        lines = []
        for index, page in enumerate(self.pages):
            page_rects = [r for r in rects if r.page_index == index]
            if not page_rects:
                continue
            for block in page.text_blocks:
                if any(block.rect.overlaps(r) for r in page_rects):
                    lines.append(block.text)
        return "\n".join(lines)

    def find_text(self, query: str) -> List[int]:
        """Page indices whose text contains the query (case-insensitive)."""
        needle = query.strip('"').lower()
        if not needle:
            return []
        hits = []
        for index, page in enumerate(self.pages):
            page_text = "\n".join(b.text for b in page.text_blocks).lower()
            if needle in page_text:
                hits.append(index)
        return hits

    def count_hits(self, query: str) -> Tuple[int, List[int]]:
        """Number of occurrences of the query and the pages holding them."""
        needle = query.strip('"').lower()
        if not needle:
            return 0, []
        total, pages = 0, []
        for index, page in enumerate(self.pages):
            n = "\n".join(b.text for b in page.text_blocks).lower().count(needle)
            if n:
                total += n
                pages.append(index)
        return total, pages

    # --- document space ------------------------------------------------------
    # Pages are stacked top to bottom and left aligned; y grows downward.

    def page_offset(self, index: int) -> float:
        return self._offsets[index]

    @property
    def document_height(self) -> float:
        return self._offsets[-1] + self.pages[-1].height

    @property
    def document_width(self) -> float:
        return max(p.width for p in self.pages)

    def page_to_document(self, page_index: int, x: float, y: float) -> Tuple[float, float]:
        page = self.pages[page_index]
        return x, self._offsets[page_index] + (page.height - y)

    def document_to_page(self, dx: float, dy: float) -> Optional[Tuple[int, float, float]]:
        for index, page in enumerate(self.pages):
            top = self._offsets[index]
            if top <= dy <= top + page.height and 0.0 <= dx <= page.width:
                return index, dx, top + page.height - dy
        return None

    # --- conversion ----------------------------------------------------------

    def as_element(self, tags=()) -> ScientificDocument:
        """The information element describing this document."""
        return ScientificDocument(
            content_hash=self.content_hash,
            plain_text_content=self.plain_text,
            uri=self.uri,
            title=self.title,
            tags=tuple(tags),
        )

    def to_dict(self) -> Dict:
        return {
            "layoutVersion": LAYOUT_VERSION,
            "title": self.title,
            "uri": self.uri,
            "pageSpacing": self.page_spacing,
            "plainText": self.plain_text,
            "pages": [p.to_dict() for p in self.pages],
        }

    @staticmethod
    def from_dict(data: Dict) -> "DocumentLayout":
        if not isinstance(data, dict):
            raise ValidationError("expected an object", "layout")
        version = data.get("layoutVersion", LAYOUT_VERSION)
        if version != LAYOUT_VERSION:
            raise ValidationError(f"unsupported layout version {version!r}", "layoutVersion")
        raw_pages = data.get("pages")
        if not isinstance(raw_pages, list):
            raise ValidationError("expected an array", "pages")
        pages = []
        for index, raw in enumerate(raw_pages):
            pages.append(_page_from_dict(raw, index))
        spacing = data.get("pageSpacing", DEFAULT_PAGE_SPACING)
        if isinstance(spacing, bool) or not isinstance(spacing, (int, float)):
            raise ValidationError("expected a number", "pageSpacing")
        for key in ("title", "uri", "plainText"):
            if not isinstance(data.get(key, ""), str):
                raise ValidationError("expected a string", key)
        return DocumentLayout(
            pages=tuple(pages),
            title=data.get("title", ""),
            uri=data.get("uri", ""),
            page_spacing=float(spacing),
            plain_text=data.get("plainText", ""),
        )

    @staticmethod
    def from_text(text: str, title: str = "", uri: str = "") -> "DocumentLayout":
        """Lay out plain text on letter-sized pages, one block per line."""
        width, height = LETTER_PAGE
        lines_per_page = int((height - 2 * TEXT_MARGIN) // TEXT_LINE_HEIGHT)
        pages: List[List[TextBlock]] = [[]]
        pending_break = False
        for raw in text.splitlines():
            if not raw.strip():
                pending_break = True
                continue
            for start in range(0, len(raw), TEXT_CHARS_PER_LINE):
                if len(pages[-1]) >= lines_per_page:
                    pages.append([])
                page_index = len(pages) - 1
                row = len(pages[-1])
                top = height - TEXT_MARGIN - row * TEXT_LINE_HEIGHT
                rect = Rect(TEXT_MARGIN, top - TEXT_LINE_HEIGHT, width - 2 * TEXT_MARGIN,
                            TEXT_LINE_HEIGHT, page_index)
                pages[-1].append(TextBlock(rect, raw[start:start + TEXT_CHARS_PER_LINE],
                                           paragraph_break_above=pending_break))
                pending_break = False
        return DocumentLayout(
            pages=tuple(PageLayout(width, height, str(i + 1), tuple(blocks))
                        for i, blocks in enumerate(pages)),
            title=title,
            uri=uri,
            plain_text=text,
        )


def _page_from_dict(raw: Dict, index: int) -> PageLayout:
    if not isinstance(raw, dict):
        raise ValidationError(f"page {index} is not an object", "pages")
    crop = raw.get("cropBox")
    if isinstance(crop, dict):
        width, height = crop.get("width"), crop.get("height")
    elif isinstance(crop, list) and len(crop) == 2:
        width, height = crop
    else:
        raise ValidationError(f"page {index} needs a cropBox", "cropBox")
    for value in (width, height):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(f"page {index} crop box must be numeric", "cropBox")
    label = raw.get("label") or str(index)
    if not isinstance(label, str):
        raise ValidationError("expected a string", "label")
    blocks = []
    raw_blocks = raw.get("textBlocks", [])
    if not isinstance(raw_blocks, list):
        raise ValidationError("expected an array", "textBlocks")
    for b in raw_blocks:
        if not isinstance(b, dict):
            raise ValidationError("expected an object", "textBlocks")
        r = b.get("rect")
        if isinstance(r, dict):
            r = [r.get("x"), r.get("y"), r.get("width"), r.get("height")]
        if not isinstance(r, list) or len(r) != 4:
            raise ValidationError("rect must be [x, y, width, height]", "rect")
        text = b.get("text", "")
        if not isinstance(text, str):
            raise ValidationError("expected a string", "text")
        blocks.append(TextBlock(
            rect=Rect(r[0], r[1], r[2], r[3], index),
            text=text,
            paragraph_break_above=bool(b.get("paragraphBreakAbove", False)),
            paragraph_break_below=bool(b.get("paragraphBreakBelow", False)),
        ))
    return PageLayout(float(width), float(height), label, tuple(blocks))


def load_layout(path: str) -> DocumentLayout:
    """Load a layout JSON file; a plain-text file is laid out on the fly."""
    with open(path, "r", encoding="utf-8") as f:
        content = f.read()
    if path.lower().endswith(".json"):
        try:
            data = json.loads(content)
        except json.JSONDecodeError as e:
            raise ValidationError(f"malformed layout JSON: {e}", "layout") from None
        layout = DocumentLayout.from_dict(data)
        if not layout.uri:
            layout = DocumentLayout(pages=layout.pages, title=layout.title, uri=os.path.abspath(path),
                                    page_spacing=layout.page_spacing, plain_text=layout.plain_text)
        return layout
    title = os.path.splitext(os.path.basename(path))[0]
    return DocumentLayout.from_text(content, title=title, uri=os.path.abspath(path))


def save_layout(layout: DocumentLayout, path: str):
    """Write a layout as JSON."""
    with open(path, "w", encoding="utf-8") as f:
        json.dump(layout.to_dict(), f, ensure_ascii=False, indent=2)
