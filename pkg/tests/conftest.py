import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.layout import DocumentLayout, PageLayout, TextBlock  # noqa: E402
from core.model import Rect  # noqa: E402
from core.store import DimeStore  # noqa: E402
from service.api import BackgroundServer  # noqa: E402

CREDENTIALS = ("Test1", "123456")


def make_layout(title: str = "Sample paper") -> DocumentLayout:
    """Two letter pages; page 0 holds two paragraphs, page 1 one."""
    p0 = (
        TextBlock(Rect(72, 600, 468, 14, 0), "Eye tracking in reading", paragraph_break_below=True),
        TextBlock(Rect(72, 500, 468, 14, 0), "Fixations cluster on relevant words."),
        TextBlock(Rect(72, 486, 468, 14, 0), "Saccades jump between them.", paragraph_break_below=True),
        TextBlock(Rect(72, 300, 468, 200 - 14, 0), "A long paragraph about refinding documents."),
    )
    p1 = (
        TextBlock(Rect(72, 400, 468, 100, 1), "Conclusions on reading behaviour."),
    )
    return DocumentLayout(
        pages=(PageLayout(612, 792, "1", p0), PageLayout(612, 792, "2", p1)),
        title=title,
        uri="file:///papers/sample.pdf",
    )


@pytest.fixture
def layout() -> DocumentLayout:
    return make_layout()


@pytest.fixture
def store(tmp_path):
    s = DimeStore(str(tmp_path / "dime"), fsync=False)
    yield s
    s.close()


@pytest.fixture
def server(store):
    with BackgroundServer(store, CREDENTIALS) as srv:
        yield srv
