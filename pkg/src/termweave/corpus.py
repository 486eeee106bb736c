"""Segmented source documents and per-system translation sets.

Both are stored as JSON-lines (one object per line). A line whose
object carries a ``_meta`` key is provenance written by the pipeline
(run manifest digest etc.) and is skipped by the loaders.
"""

from __future__ import annotations

import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import LoadError, ValidationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Segment:
    segment_id: str
    ordinal: int
    source_text: str


@dataclass(frozen=True)
class TranslationRecord:
    segment_id: str
    system_id: str
    output_text: str
    prompt_hash: str | None = None
    backend_meta: dict = field(default_factory=dict)
    # Runtime-only; never serialized, so reruns stay byte-identical.
    cache_hit: bool = field(default=False, compare=False)

    def to_json_obj(self) -> dict:
        obj = {
            "segment_id": self.segment_id,
            "system_id": self.system_id,
            "output_text": self.output_text,
        }
        if self.prompt_hash is not None:
            obj["prompt_hash"] = self.prompt_hash
        if self.backend_meta:
            obj["backend_meta"] = self.backend_meta
        return obj


def _read_jsonl(path: str | Path) -> Iterable[tuple[int, dict]]:
    if str(path) == "-":
        lines = sys.stdin.read().splitlines()
    else:
        try:
            lines = Path(path).read_text(encoding="utf-8").splitlines()
        except FileNotFoundError:
            raise LoadError(f"file not found: {path}")
        except UnicodeDecodeError as exc:
            raise LoadError(f"{path} is not valid UTF-8: {exc}")
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise LoadError(f"{path} line {line_no}: invalid JSON ({exc})")
        if not isinstance(obj, dict):
            raise LoadError(f"{path} line {line_no}: expected a JSON object")
        if "_meta" in obj:
            continue
        yield line_no, obj


def load_segments(path: str | Path) -> tuple[Segment, ...]:
    """Load a pre-segmented document; ordinals follow file order."""
    segments: list[Segment] = []
    seen: set[str] = set()
    for line_no, obj in _read_jsonl(path):
        try:
            segment_id = str(obj["segment_id"])
            source_text = obj["source_text"]
        except KeyError as exc:
            raise LoadError(f"{path} line {line_no}: missing field {exc}")
        if not isinstance(source_text, str) or not source_text.strip():
            raise ValidationError(f"segment {segment_id!r} has blank source_text")
        if segment_id in seen:
            raise ValidationError(f"duplicate segment_id {segment_id!r}")
        seen.add(segment_id)
        segments.append(Segment(segment_id, len(segments), source_text))
    word_count = sum(len(s.source_text.split()) for s in segments)
    log.info("loaded %d segment(s), %d whitespace-delimited word(s)", len(segments), word_count)
    return tuple(segments)


def save_segments(segments: Sequence[Segment], path: str | Path) -> None:
    lines = [
        json.dumps({"segment_id": s.segment_id, "source_text": s.source_text},
                   ensure_ascii=False)
        for s in segments
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_translations(path: str | Path,
                      segments: Sequence[Segment] | None = None) -> tuple[TranslationRecord, ...]:
    """Load translation records; if ``segments`` is given, every record
    must reference a known segment_id."""
    known = {s.segment_id for s in segments} if segments is not None else None
    records: list[TranslationRecord] = []
    seen: set[tuple[str, str]] = set()
    for line_no, obj in _read_jsonl(path):
        try:
            segment_id = str(obj["segment_id"])
            system_id = str(obj["system_id"])
            output_text = obj["output_text"]
        except KeyError as exc:
            raise LoadError(f"{path} line {line_no}: missing field {exc}")
        if not isinstance(output_text, str):
            raise LoadError(f"{path} line {line_no}: output_text must be a string")
        if known is not None and segment_id not in known:
            raise ValidationError(
                f"{path} line {line_no}: unknown segment_id {segment_id!r}"
            )
        key = (segment_id, system_id)
        if key in seen:
            raise ValidationError(
                f"{path} line {line_no}: duplicate record for segment {segment_id!r},"
                f" system {system_id!r}"
            )
        seen.add(key)
        records.append(TranslationRecord(
            segment_id=segment_id,
            system_id=system_id,
            output_text=output_text,
            prompt_hash=obj.get("prompt_hash"),
            backend_meta=obj.get("backend_meta") or {},
        ))
    return tuple(records)


def save_translations(records: Sequence[TranslationRecord], path: str | Path,
                      meta: dict | None = None) -> None:
    lines = []
    if meta:
        lines.append(json.dumps({"_meta": meta}, ensure_ascii=False, sort_keys=True))
    lines.extend(json.dumps(r.to_json_obj(), ensure_ascii=False, sort_keys=True)
                 for r in records)
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def group_by_system(records: Iterable[TranslationRecord]) -> dict[str, dict[str, TranslationRecord]]:
    """system_id -> segment_id -> record."""
    grouped: dict[str, dict[str, TranslationRecord]] = {}
    for r in records:
        grouped.setdefault(r.system_id, {})[r.segment_id] = r
    return grouped


def check_completeness(records: Iterable[TranslationRecord],
                       segments: Sequence[Segment],
                       systems: Sequence[str] | None = None) -> list[tuple[str, str]]:
    """Missing (system_id, segment_id) pairs; empty list means complete.

    Without an explicit system list, completeness is checked for every
    system that appears in the records; a fully empty record set is
    reported against a single unnamed system so the gaps are visible.
    """
    grouped = group_by_system(records)
    if systems is None:
        systems = sorted(grouped)
        if not systems:
            return [("<none>", s.segment_id) for s in segments]
    missing = []
    for system_id in systems:
        have = grouped.get(system_id, {})
        for s in segments:
            if s.segment_id not in have:
                missing.append((system_id, s.segment_id))
    return missing
