"""Deterministic glossary retrieval over segments.

A glossary source term matches wherever it occurs in the segment text,
case-insensitively, with non-alphabetic characters (or the string
edges) on both sides. Relevant and noise entries are matched alike:
filtering noise is deliberately left to the translation model, so the
prompt reflects everything an honest string match retrieves. Nested and
overlapping matches are all reported; nothing is pruned.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .corpus import Segment
from .glossary import Glossary, GlossaryEntry, fold_term
from .matching import TermScanner


@dataclass(frozen=True)
class TermMatch:
    entry_id: str
    segment_id: str
    start: int
    end: int
    matched_surface: str

    def to_json_obj(self) -> dict:
        return {
            "entry_id": self.entry_id,
            "segment_id": self.segment_id,
            "start": self.start,
            "end": self.end,
            "matched_surface": self.matched_surface,
        }


@dataclass(frozen=True)
class DocumentRetrievalSummary:
    """Document-level match counts; the relevant-only pair fixes the
    terminology audit universe."""
    distinct_entries: int
    total_matches: int
    distinct_relevant_entries: int
    relevant_matches: int


class Retriever:
    """Holds the compiled automaton for one glossary; reusable and
    safe to share across threads."""

    def __init__(self, glossary: Glossary, entries: Sequence[GlossaryEntry] | None = None):
        self.glossary = glossary
        self.entries = tuple(entries if entries is not None else glossary.entries)
        self._scanner = TermScanner([fold_term(e.source_term) for e in self.entries]) \
            if self.entries else None

    def retrieve(self, segment: Segment) -> list[TermMatch]:
        if self._scanner is None:
            return []
        text = segment.source_text
        return [
            TermMatch(
                entry_id=self.entries[pidx].entry_id,
                segment_id=segment.segment_id,
                start=start,
                end=end,
                matched_surface=text[start:end],
            )
            for pidx, start, end in self._scanner.scan(text)
        ]

    def retrieve_document(self, segments: Sequence[Segment]
                          ) -> tuple[dict[str, list[TermMatch]], DocumentRetrievalSummary]:
        by_segment = {s.segment_id: self.retrieve(s) for s in segments}
        relevant_ids = {e.entry_id for e in self.entries if e.relevant}
        all_matches = [m for matches in by_segment.values() for m in matches]
        relevant = [m for m in all_matches if m.entry_id in relevant_ids]
        summary = DocumentRetrievalSummary(
            distinct_entries=len({m.entry_id for m in all_matches}),
            total_matches=len(all_matches),
            distinct_relevant_entries=len({m.entry_id for m in relevant}),
            relevant_matches=len(relevant),
        )
        return by_segment, summary


def retrieve(segment: Segment, glossary: Glossary) -> list[TermMatch]:
    """One-shot per-segment retrieval (builds a throwaway automaton;
    use Retriever for documents)."""
    return Retriever(glossary).retrieve(segment)


def retrieve_document(segments: Sequence[Segment], glossary: Glossary
                      ) -> tuple[dict[str, list[TermMatch]], DocumentRetrievalSummary]:
    return Retriever(glossary).retrieve_document(segments)


def matches_to_jsonl(matches: Iterable[TermMatch]) -> str:
    return "\n".join(json.dumps(m.to_json_obj(), ensure_ascii=False, sort_keys=True)
                     for m in matches)
