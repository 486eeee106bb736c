"""Terminology compliance auditing.

The audit universe is fixed by retrieval: every boundary-valid match of
a *relevant* glossary term in the source document is one occurrence
(noise entries never audit). An occurrence is correct for a system when
the expected preferred target form appears in that system's output,
case-insensitively and boundary-checked with the same matching kernel
used for retrieval. The metric is intentionally strict: paraphrases
count as incorrect.

When a source term occurs k times in a segment and the expected form
occurs m times in the output, the min(k, m) occurrences with the lowest
match index are the correct ones; the rest are incorrect. Automated
wrong-vs-missing discrimination is best effort: it fires only when a
configured distractor form (a plausible but non-preferred rendering) is
found in the output, otherwise incorrect occurrences are labelled as
missing candidates. Human adjudicated labels, ingested separately,
remain authoritative for the error profile.
"""

from __future__ import annotations

import csv
import json
import logging
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import Segment, TranslationRecord, group_by_system
from .errors import LoadError, ValidationError
from .glossary import Glossary, fold_term
from .matching import TermScanner
from .retrieval import Retriever

log = logging.getLogger(__name__)

AUTO_LABELS = ("correct", "missing_candidate", "wrong_candidate")
MQM_LABELS = ("no_error", "wrong_term", "missing_term", "inconsistent_term")
MQM_ERROR_LABELS = ("wrong_term", "inconsistent_term", "missing_term")


def occurrence_id(segment_id: str, entry_id: str, match_index: int) -> str:
    return f"{segment_id}:{entry_id}:{match_index}"


@dataclass(frozen=True)
class TermOccurrence:
    occurrence_id: str
    segment_id: str
    entry_id: str
    match_index: int
    expected_target: str
    relevant: bool = True


@dataclass(frozen=True)
class OccurrenceSummary:
    distinct_terms: int
    total_occurrences: int


@dataclass(frozen=True)
class AuditVerdict:
    occurrence_id: str
    system_id: str
    correct: bool
    auto_label: str
    matched_output_span: tuple[int, int] | None = None

    def __post_init__(self):
        if self.auto_label not in AUTO_LABELS:
            raise ValueError(f"bad auto_label {self.auto_label!r}")
        if self.correct != (self.auto_label == "correct"):
            raise ValueError("correct flag disagrees with auto_label")
        if self.correct != (self.matched_output_span is not None):
            raise ValueError("matched_output_span must be present exactly for correct verdicts")

    def to_json_obj(self) -> dict:
        return {
            "occurrence_id": self.occurrence_id,
            "system_id": self.system_id,
            "correct": self.correct,
            "auto_label": self.auto_label,
            "matched_output_span": list(self.matched_output_span)
            if self.matched_output_span else None,
        }


@dataclass(frozen=True)
class MqmLabel:
    occurrence_id: str
    system_id: str
    label: str
    annotator_id: str
    note: str | None = None


def enumerate_occurrences(segments: Sequence[Segment], glossary: Glossary,
                          ) -> tuple[tuple[TermOccurrence, ...], OccurrenceSummary]:
    """The audit universe: one occurrence per relevant-term match,
    ordered by (segment ordinal, match start)."""
    retriever = Retriever(glossary, glossary.relevant_entries())
    occurrences: list[TermOccurrence] = []
    for segment in sorted(segments, key=lambda s: s.ordinal):
        per_entry_count: dict[str, int] = defaultdict(int)
        for match in retriever.retrieve(segment):
            entry = glossary.entry(match.entry_id)
            index = per_entry_count[match.entry_id]
            per_entry_count[match.entry_id] += 1
            occurrences.append(TermOccurrence(
                occurrence_id=occurrence_id(segment.segment_id, match.entry_id, index),
                segment_id=segment.segment_id,
                entry_id=match.entry_id,
                match_index=index,
                expected_target=entry.target_term,
                relevant=True,
            ))
    summary = OccurrenceSummary(
        distinct_terms=len({o.entry_id for o in occurrences}),
        total_occurrences=len(occurrences),
    )
    log.info("audit universe: %d occurrence(s) of %d distinct term(s)",
             summary.total_occurrences, summary.distinct_terms)
    return tuple(occurrences), summary


def load_distractors(path: str | Path, glossary: Glossary) -> dict[str, tuple[str, ...]]:
    """Optional per-entry distractor forms, TSV with header
    ``source_term<TAB>distractor``; returns entry_id -> forms."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise LoadError(f"distractor file not found: {path}")
    if not lines:
        raise LoadError(f"distractor file {path} is empty (header row required)")
    header = [h.strip().casefold() for h in lines[0].split("\t")]
    if header[:2] != ["source_term", "distractor"]:
        raise LoadError(
            f"{path}: header must be source_term<TAB>distractor, got {lines[0]!r}")
    by_source = {e.source_key: e.entry_id for e in glossary.entries}
    out: dict[str, list[str]] = defaultdict(list)
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split("\t")
        if len(cells) < 2 or not cells[0].strip() or not cells[1].strip():
            raise LoadError(f"{path} line {line_no}: expected source_term<TAB>distractor")
        key = fold_term(cells[0])
        if key not in by_source:
            raise ValidationError(
                f"{path} line {line_no}: {cells[0]!r} is not a glossary source term")
        out[by_source[key]].append(cells[1].strip())
    return {entry_id: tuple(forms) for entry_id, forms in out.items()}


def audit_exact_match(occurrences: Sequence[TermOccurrence],
                      translations: Sequence[TranslationRecord],
                      distractors: Mapping[str, Sequence[str]] | None = None,
                      systems: Sequence[str] | None = None,
                      ) -> tuple[AuditVerdict, ...]:
    """Verdicts for every (occurrence, system) pair.

    Requires a translation for every (segment, system) the universe
    touches. ``systems`` defaults to every system present in the
    translations.
    """
    distractors = distractors or {}
    grouped = group_by_system(translations)
    if systems is None:
        systems = sorted(grouped)

    by_segment: dict[str, list[TermOccurrence]] = defaultdict(list)
    for occ in occurrences:
        by_segment[occ.segment_id].append(occ)

    verdicts: list[AuditVerdict] = []
    for segment_id, segment_occurrences in by_segment.items():
        entry_ids = sorted({o.entry_id for o in segment_occurrences})
        expected_by_entry = {o.entry_id: o.expected_target for o in segment_occurrences}
        scanner = TermScanner([fold_term(expected_by_entry[eid]) for eid in entry_ids])
        occs_by_entry = {
            eid: sorted((o for o in segment_occurrences if o.entry_id == eid),
                        key=lambda o: o.match_index)
            for eid in entry_ids
        }
        # One combined scanner for all of this segment's distractor forms.
        d_patterns: list[str] = []
        d_owner: list[str] = []
        for eid in entry_ids:
            for form in distractors.get(eid, ()):
                d_patterns.append(fold_term(form))
                d_owner.append(eid)
        d_scanner = TermScanner(d_patterns) if d_patterns else None

        for system_id in systems:
            record = grouped.get(system_id, {}).get(segment_id)
            if record is None:
                raise ValidationError(
                    f"missing translation for segment {segment_id!r},"
                    f" system {system_id!r}")
            output = record.output_text

            spans_by_entry: dict[str, list[tuple[int, int]]] = {eid: [] for eid in entry_ids}
            for pidx, start, end in scanner.scan(output):
                spans_by_entry[entry_ids[pidx]].append((start, end))
            distractor_hit: set[str] = set()
            if d_scanner is not None:
                for pidx, _start, _end in d_scanner.scan(output):
                    distractor_hit.add(d_owner[pidx])

            for eid in entry_ids:
                occs = occs_by_entry[eid]
                spans = spans_by_entry[eid]
                n_correct = min(len(occs), len(spans))
                for i, occ in enumerate(occs):
                    if i < n_correct:
                        verdicts.append(AuditVerdict(
                            occurrence_id=occ.occurrence_id,
                            system_id=system_id,
                            correct=True,
                            auto_label="correct",
                            matched_output_span=spans[i],
                        ))
                    else:
                        label = ("wrong_candidate" if eid in distractor_hit
                                 else "missing_candidate")
                        verdicts.append(AuditVerdict(
                            occurrence_id=occ.occurrence_id,
                            system_id=system_id,
                            correct=False,
                            auto_label=label,
                        ))
    return tuple(verdicts)


def accuracy_by_system(verdicts: Sequence[AuditVerdict],
                       occurrences: Sequence[TermOccurrence],
                       ) -> dict[str, tuple[int, int, float]]:
    """system_id -> (correct_count, total, percentage). Every system
    must cover the whole occurrence universe."""
    universe = {o.occurrence_id for o in occurrences}
    by_system: dict[str, dict[str, bool]] = defaultdict(dict)
    for v in verdicts:
        by_system[v.system_id][v.occurrence_id] = v.correct
    result: dict[str, tuple[int, int, float]] = {}
    for system_id in sorted(by_system):
        seen = by_system[system_id]
        missing = universe - seen.keys()
        if missing:
            listing = ", ".join(sorted(missing)[:5])
            raise ValidationError(
                f"system {system_id!r}: verdicts missing for {len(missing)}"
                f" occurrence(s): {listing}")
        correct = sum(1 for occ_id in universe if seen[occ_id])
        total = len(universe)
        pct = 100.0 * correct / total if total else 0.0
        result[system_id] = (correct, total, pct)
    return result


def consistency_check(occurrences: Sequence[TermOccurrence],
                      verdicts: Sequence[AuditVerdict],
                      ) -> list[tuple[str, str, str]]:
    """Automated approximation of the inconsistency label: for every
    (system, entry) with two or more occurrences, 'mixed' when the
    verdicts disagree on correctness, 'uniform' otherwise. Adjudicated
    human labels remain authoritative for the error profile."""
    entry_of = {o.occurrence_id: o.entry_id for o in occurrences}
    outcomes: dict[tuple[str, str], set[bool]] = defaultdict(set)
    counts: dict[tuple[str, str], int] = defaultdict(int)
    for v in verdicts:
        if v.occurrence_id not in entry_of:
            continue
        key = (v.system_id, entry_of[v.occurrence_id])
        outcomes[key].add(v.correct)
        counts[key] += 1
    report = []
    for (system_id, entry_id), seen in sorted(outcomes.items()):
        if counts[(system_id, entry_id)] < 2:
            continue
        flag = "mixed" if len(seen) > 1 else "uniform"
        report.append((system_id, entry_id, flag))
    return report


def load_mqm_labels(path: str | Path,
                    occurrences: Sequence[TermOccurrence],
                    ) -> tuple[MqmLabel, ...]:
    """Adjudicated labels, CSV with header
    ``occurrence_id,system_id,label,annotator_id,note``."""
    universe = {o.occurrence_id for o in occurrences}
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise LoadError(f"{path} is empty (header row required)")
            required = {"occurrence_id", "system_id", "label", "annotator_id"}
            missing = required - set(reader.fieldnames)
            if missing:
                raise LoadError(f"{path}: header missing column(s) {sorted(missing)}")
            labels: list[MqmLabel] = []
            seen: set[tuple[str, str]] = set()
            for row_no, row in enumerate(reader, start=2):
                occ_id = (row["occurrence_id"] or "").strip()
                system_id = (row["system_id"] or "").strip()
                label = (row["label"] or "").strip()
                if occ_id not in universe:
                    raise ValidationError(
                        f"{path} line {row_no}: unknown occurrence_id {occ_id!r}")
                if label not in MQM_LABELS:
                    raise ValidationError(
                        f"{path} line {row_no}: label must be one of {MQM_LABELS},"
                        f" got {label!r}")
                key = (occ_id, system_id)
                if key in seen:
                    raise ValidationError(
                        f"{path} line {row_no}: duplicate label for occurrence"
                        f" {occ_id!r}, system {system_id!r}")
                seen.add(key)
                labels.append(MqmLabel(
                    occurrence_id=occ_id,
                    system_id=system_id,
                    label=label,
                    annotator_id=(row["annotator_id"] or "").strip(),
                    note=(row.get("note") or "").strip() or None,
                ))
    except FileNotFoundError:
        raise LoadError(f"label file not found: {path}")
    return tuple(labels)


def error_profile(labels: Sequence[MqmLabel]) -> dict[str, dict[str, int]]:
    """Per-system counts of each terminology error label plus a total;
    no_error contributes nothing to the total."""
    profile: dict[str, dict[str, int]] = {}
    for label in labels:
        row = profile.setdefault(label.system_id,
                                 {name: 0 for name in MQM_ERROR_LABELS} | {"total": 0})
        if label.label in MQM_ERROR_LABELS:
            row[label.label] += 1
            row["total"] += 1
    return profile


def verdicts_to_jsonl(verdicts: Iterable[AuditVerdict], meta: dict | None = None) -> str:
    lines = []
    if meta:
        lines.append(json.dumps({"_meta": meta}, ensure_ascii=False, sort_keys=True))
    lines.extend(json.dumps(v.to_json_obj(), ensure_ascii=False, sort_keys=True)
                 for v in verdicts)
    return "\n".join(lines)


def load_verdicts(path: str | Path) -> tuple[AuditVerdict, ...]:
    verdicts = []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise LoadError(f"verdict file not found: {path}")
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise LoadError(f"{path} line {line_no}: invalid JSON ({exc})")
        if "_meta" in obj:
            continue
        span = obj.get("matched_output_span")
        verdicts.append(AuditVerdict(
            occurrence_id=obj["occurrence_id"],
            system_id=obj["system_id"],
            correct=obj["correct"],
            auto_label=obj["auto_label"],
            matched_output_span=tuple(span) if span else None,
        ))
    return tuple(verdicts)
