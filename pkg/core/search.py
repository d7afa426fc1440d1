"""Inverted index for case-insensitive word and exact-phrase search."""

import re
from typing import Dict, List, Set, Tuple

_WORD_RE = re.compile(r"\w+")


def tokenize(text: str) -> List[str]:
    """Lowercase word tokens in order."""
    return _WORD_RE.findall(text.lower())


def parse_query(query: str) -> Tuple[List[str], bool]:
    """Split a query into words; a query wrapped in double quotes is a phrase."""
    stripped = query.strip()
    phrase = len(stripped) >= 2 and stripped.startswith('"') and stripped.endswith('"')
    if phrase:
        stripped = stripped[1:-1]
    return tokenize(stripped), phrase


class InvertedIndex:
    """Word -> record ids, with per-record token lists kept for phrase checks."""

    def __init__(self) -> None:
        self.index: Dict[str, Set[int]] = {}
        self.record_tokens: Dict[int, List[str]] = {}

    def __len__(self) -> int:
        return len(self.record_tokens)

    def add(self, record_id: int, text: str) -> None:
        """Index a record, replacing any earlier text for the same id."""
        self.remove(record_id)
        tokens = tokenize(text)
        self.record_tokens[record_id] = tokens
        for word in set(tokens):
            self.index.setdefault(word, set()).add(record_id)

    def remove(self, record_id: int) -> None:
        tokens = self.record_tokens.pop(record_id, None)
        if tokens is None:
            return
        for word in set(tokens):
            ids = self.index.get(word)
            if ids is not None:
                ids.discard(record_id)
                if not ids:
                    del self.index[word]

    def clear(self) -> None:
        self.index.clear()
        self.record_tokens.clear()

    def search(self, query: str) -> Set[int]:
        """Ids containing every query word (AND); quoted queries must match as a phrase."""
        words, phrase = parse_query(query)
        if not words:
            return set()
        result = set(self.index.get(words[0], set()))
        for word in words[1:]:
            result &= self.index.get(word, set())
        if phrase and len(words) > 1:
            result = {i for i in result if _contains_run(self.record_tokens[i], words)}
        return result


def _contains_run(tokens: List[str], words: List[str]) -> bool:
    n = len(words)
    first = words[0]
    for i, token in enumerate(tokens):
        if token == first and tokens[i:i + n] == words:
            return True
    return False
