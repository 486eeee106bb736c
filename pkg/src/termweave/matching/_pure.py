"""Pure-Python multi-pattern scanner (Aho-Corasick over case-folded text).

This is the reference implementation of the matching contract shared
with the compiled kernel in ``_speedups.pyx``:

* patterns are pre-folded (``str.casefold``) non-empty strings;
* the input text is folded character by character while recording, for
  every folded character, the index of the original character it came
  from (a fold can expand one character into several);
* a hit is reported only when the folded span aligns with original
  character boundaries, so the matched slice of the *original* text
  case-folds back to the pattern;
* the characters adjacent to the matched slice (if any) must not be
  alphabetic, which blocks sub-word matches while admitting punctuation,
  digits, whitespace and string edges as boundaries;
* hits are ordered by (start, longest first, pattern index) and include
  every overlapping and nested occurrence.

The automaton is the textbook construction: a goto trie, failure links
computed breadth-first, and output lists propagated along the failure
chain so that nested patterns surface at every end position.
"""

from __future__ import annotations

from collections import deque
from typing import Sequence

_FOLD_CACHE: dict[str, str] = {}


def _fold_char(ch: str) -> str:
    code = ord(ch)
    if code < 128:
        if 65 <= code <= 90:
            return chr(code + 32)
        return ch
    folded = _FOLD_CACHE.get(ch)
    if folded is None:
        folded = ch.casefold()
        _FOLD_CACHE[ch] = folded
    return folded


class TermScanner:
    """Scanner for a fixed pattern set, reusable across many texts."""

    def __init__(self, patterns: Sequence[str]):
        self.patterns = tuple(patterns)
        for i, p in enumerate(self.patterns):
            if not p:
                raise ValueError(f"pattern {i} is empty")
            if p != p.casefold():
                raise ValueError(f"pattern {i} ({p!r}) is not case-folded")
        # Trie arrays indexed by state id; state 0 is the root.
        self._children: list[dict[str, int]] = [{}]
        self._fail: list[int] = [0]
        self._out: list[list[int]] = [[]]
        for idx, pattern in enumerate(self.patterns):
            state = 0
            for ch in pattern:
                nxt = self._children[state].get(ch)
                if nxt is None:
                    nxt = len(self._children)
                    self._children[state][ch] = nxt
                    self._children.append({})
                    self._fail.append(0)
                    self._out.append([])
                state = nxt
            self._out[state].append(idx)
        self._build_links()

    def _build_links(self) -> None:
        queue: deque[int] = deque()
        for state in self._children[0].values():
            self._fail[state] = 0
            queue.append(state)
        while queue:
            state = queue.popleft()
            for ch, nxt in self._children[state].items():
                fallback = self._fail[state]
                while fallback and ch not in self._children[fallback]:
                    fallback = self._fail[fallback]
                self._fail[nxt] = self._children[fallback].get(ch, 0)
                if self._fail[nxt] == nxt:
                    self._fail[nxt] = 0
                self._out[nxt] = self._out[nxt] + self._out[self._fail[nxt]]
                queue.append(nxt)

    def scan(self, text: str) -> list[tuple[int, int, int]]:
        """All boundary-valid case-insensitive hits as
        (pattern_index, start, end) offsets into ``text``."""
        folded: list[str] = []
        orig_idx: list[int] = []
        is_first: list[bool] = []
        for i, ch in enumerate(text):
            for j, fc in enumerate(_fold_char(ch)):
                folded.append(fc)
                orig_idx.append(i)
                is_first.append(j == 0)

        children = self._children
        fail = self._fail
        out = self._out
        patterns = self.patterns
        n_folded = len(folded)
        text_len = len(text)
        hits: list[tuple[int, int, int]] = []
        state = 0
        for pos in range(n_folded):
            ch = folded[pos]
            while state and ch not in children[state]:
                state = fail[state]
            state = children[state].get(ch, 0)
            if not out[state]:
                continue
            for pidx in out[state]:
                fs = pos - len(patterns[pidx]) + 1
                fe = pos + 1
                if not is_first[fs]:
                    continue
                if fe < n_folded and not is_first[fe]:
                    continue
                start = orig_idx[fs]
                end = orig_idx[fe - 1] + 1
                if start > 0 and text[start - 1].isalpha():
                    continue
                if end < text_len and text[end].isalpha():
                    continue
                hits.append((pidx, start, end))
        hits.sort(key=lambda h: (h[1], h[1] - h[2], h[0]))
        return hits
