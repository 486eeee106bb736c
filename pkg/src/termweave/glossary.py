"""Bilingual glossary loading, validation and querying.

A glossary is an ordered list of (source term, preferred target form)
pairs. Entries flagged ``relevant=False`` are deliberate noise: they are
matched and injected into prompts exactly like domain terms, but they
never enter the terminology audit universe.
"""

from __future__ import annotations

import csv
import io
import json
import sys
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import LoadError, ValidationError

_TRUE_VALUES = {"true", "1"}
_FALSE_VALUES = {"false", "0"}

# Warning threshold only; long terms load fine.
LONG_TERM_CHARS = 80


def fold_term(term: str) -> str:
    """Canonical matching key: trimmed, internal whitespace collapsed
    to single spaces, full Unicode case fold."""
    return " ".join(term.split()).casefold()


def _has_control_chars(text: str) -> bool:
    return any(unicodedata.category(ch) == "Cc" for ch in text)


@dataclass(frozen=True)
class GlossaryEntry:
    entry_id: str
    source_term: str
    target_term: str
    relevant: bool = True

    @property
    def source_key(self) -> str:
        return fold_term(self.source_term)

    @property
    def target_key(self) -> str:
        return fold_term(self.target_term)


@dataclass(frozen=True)
class Glossary:
    entries: tuple[GlossaryEntry, ...]
    source_lang: str = "es"
    target_lang: str = "en"
    _by_id: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {e.entry_id: e for e in self.entries})

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def entry(self, entry_id: str) -> GlossaryEntry:
        try:
            return self._by_id[entry_id]
        except KeyError:
            raise KeyError(f"unknown glossary entry_id {entry_id!r}") from None

    def relevant_entries(self) -> tuple[GlossaryEntry, ...]:
        return tuple(e for e in self.entries if e.relevant)


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def to_json(self) -> str:
        return json.dumps(
            {"ok": self.ok, "errors": self.errors, "warnings": self.warnings},
            ensure_ascii=False, indent=2, sort_keys=True,
        )

    def to_text(self) -> str:
        lines = []
        for msg in self.errors:
            lines.append(f"error: {msg}")
        for msg in self.warnings:
            lines.append(f"warning: {msg}")
        lines.append(f"{len(self.errors)} error(s), {len(self.warnings)} warning(s)")
        return "\n".join(lines)


def _parse_relevant(raw: str, line_no: int) -> bool:
    value = raw.strip().casefold()
    if value in _TRUE_VALUES or value == "":
        return True
    if value in _FALSE_VALUES:
        return False
    raise LoadError(f"line {line_no}: relevant must be one of true/false/1/0, got {raw!r}")


def _read_rows(path: str | Path, fmt: str) -> tuple[list[str], list[tuple[int, list[str]]]]:
    """Returns (header, [(line_no, cells), ...]). TSV rows are split on
    raw tabs (terms may contain commas and quotes); CSV goes through the
    csv module."""
    if str(path) == "-":
        text = sys.stdin.read()
    else:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except FileNotFoundError:
            raise LoadError(f"glossary file not found: {path}")
        except UnicodeDecodeError as exc:
            raise LoadError(f"glossary file {path} is not valid UTF-8: {exc}")
    if fmt == "tsv":
        rows = [
            (i + 1, line.split("\t"))
            for i, line in enumerate(text.splitlines())
            if line.strip()
        ]
    elif fmt == "csv":
        reader = csv.reader(io.StringIO(text))
        rows = [(i + 1, cells) for i, cells in enumerate(reader) if any(c.strip() for c in cells)]
    else:
        raise LoadError(f"unknown glossary format {fmt!r} (expected tsv or csv)")
    if not rows:
        raise LoadError(f"glossary file {path} is empty (header row required)")
    header_no, header = rows[0]
    return [h.strip().casefold() for h in header], rows[1:]


def load_glossary(path: str | Path, fmt: str = "tsv",
                  source_lang: str = "es", target_lang: str = "en") -> Glossary:
    """Load and validate a glossary file.

    The header row must declare ``source_term`` and ``target_term``;
    ``relevant`` and ``entry_id`` columns are optional. Missing
    ``relevant`` means True, missing ``entry_id`` means the 0-based data
    row ordinal.
    """
    header, data_rows = _read_rows(path, fmt)
    required = {"source_term", "target_term"}
    missing = required - set(header)
    if missing:
        raise LoadError(
            f"glossary header must declare columns {sorted(required)}; missing {sorted(missing)}"
        )
    col = {name: header.index(name) for name in header}

    entries: list[GlossaryEntry] = []
    seen_source: dict[str, tuple[int, GlossaryEntry]] = {}
    for ordinal, (line_no, cells) in enumerate(data_rows):
        if len(cells) != len(header):
            raise LoadError(
                f"line {line_no}: expected {len(header)} column(s), got {len(cells)}"
            )
        source = cells[col["source_term"]].strip()
        target = cells[col["target_term"]].strip()
        if not source or not target:
            raise ValidationError(f"line {line_no}: empty term cell")
        if _has_control_chars(source) or _has_control_chars(target):
            raise ValidationError(f"line {line_no}: term contains control characters")
        relevant = True
        if "relevant" in col:
            relevant = _parse_relevant(cells[col["relevant"]], line_no)
        entry_id = str(ordinal)
        if "entry_id" in col and cells[col["entry_id"]].strip():
            entry_id = cells[col["entry_id"]].strip()
        entry = GlossaryEntry(entry_id, source, target, relevant)

        key = entry.source_key
        if key in seen_source:
            prev_no, prev = seen_source[key]
            if prev.target_key == entry.target_key:
                raise ValidationError(
                    f"line {line_no}: duplicate entry {source!r} -> {target!r}"
                    f" (first seen on line {prev_no})"
                )
            raise ValidationError(
                f"line {line_no}: source term {source!r} already mapped to"
                f" {prev.target_term!r} on line {prev_no}; one preferred form per source term"
            )
        seen_source[key] = (line_no, entry)
        entries.append(entry)

    if len({e.entry_id for e in entries}) != len(entries):
        raise ValidationError("entry_id values are not unique")
    return Glossary(tuple(entries), source_lang=source_lang, target_lang=target_lang)


def save_glossary(glossary: Glossary, path: str | Path) -> None:
    """Write a glossary back to TSV; load_glossary(save_glossary(g)) == g."""
    lines = ["entry_id\tsource_term\ttarget_term\trelevant"]
    for e in glossary.entries:
        lines.append(f"{e.entry_id}\t{e.source_term}\t{e.target_term}\t{str(e.relevant).lower()}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def validate_glossary(glossary: Glossary) -> ValidationReport:
    """Produce a report of invariant violations (errors) and suspicious
    but legal content (warnings). Never raises."""
    report = ValidationReport()
    seen_pairs: dict[tuple[str, str], str] = {}
    seen_source: dict[str, GlossaryEntry] = {}
    seen_ids: set[str] = set()
    for e in glossary.entries:
        if not e.source_term.strip() or not e.target_term.strip():
            report.errors.append(f"entry {e.entry_id}: empty term after trim")
            continue
        if e.source_term != e.source_term.strip():
            report.errors.append(f"entry {e.entry_id}: source term has surrounding whitespace")
        if _has_control_chars(e.source_term):
            report.errors.append(f"entry {e.entry_id}: source term contains control characters")
        if e.entry_id in seen_ids:
            report.errors.append(f"entry_id {e.entry_id!r} is not unique")
        seen_ids.add(e.entry_id)
        pair = (e.source_key, e.target_key)
        if pair in seen_pairs:
            report.errors.append(
                f"entry {e.entry_id}: duplicate of entry {seen_pairs[pair]}"
                f" ({e.source_term!r} -> {e.target_term!r})"
            )
        elif e.source_key in seen_source:
            prev = seen_source[e.source_key]
            report.errors.append(
                f"entry {e.entry_id}: source term {e.source_term!r} conflicts with"
                f" entry {prev.entry_id} ({prev.target_term!r})"
            )
        seen_pairs.setdefault(pair, e.entry_id)
        seen_source.setdefault(e.source_key, e)
        if len(e.source_term) > LONG_TERM_CHARS:
            report.warnings.append(
                f"entry {e.entry_id}: source term longer than {LONG_TERM_CHARS} characters"
            )
        if len(e.target_term) > LONG_TERM_CHARS:
            report.warnings.append(
                f"entry {e.entry_id}: target term longer than {LONG_TERM_CHARS} characters"
            )

    keys = [(e.entry_id, e.source_key) for e in glossary.entries if e.source_key]
    for i, (id_a, key_a) in enumerate(keys):
        for id_b, key_b in keys[i + 1:]:
            if key_a == key_b:
                continue
            if key_a in key_b:
                report.warnings.append(
                    f"source term of entry {id_a} is a substring of entry {id_b}"
                )
            elif key_b in key_a:
                report.warnings.append(
                    f"source term of entry {id_b} is a substring of entry {id_a}"
                )
    return report
