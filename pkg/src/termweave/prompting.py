"""Prompt construction for the simple and glossary-augmented modes.

The exact rendered text is the unit of provenance: its SHA-256 digest
keys the response cache and travels with every translation record. The
wording lives in a versioned template resource (templates/default.json)
so replications can vary layout without touching code.

Layout choice: constraints come between the instruction and the segment
text. With zero retrieved entries the augmented rendering collapses to
the simple one, byte for byte.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

from .corpus import Segment
from .glossary import Glossary
from .retrieval import TermMatch

MODES = ("simple", "rag")

DIGEST_ALGORITHM = "sha256"


@dataclass(frozen=True)
class PromptTemplate:
    instruction: str
    constraint_header: str
    pair_line: str
    template_version: int = 1

    @classmethod
    def load_default(cls) -> "PromptTemplate":
        raw = resources.files("termweave").joinpath("templates/default.json").read_text("utf-8")
        return cls(**json.loads(raw))

    @classmethod
    def load(cls, path: str | Path) -> "PromptTemplate":
        return cls(**json.loads(Path(path).read_text("utf-8")))


@dataclass(frozen=True)
class PromptSpec:
    mode: str
    instruction_text: str
    constraint_block: str | None
    segment_text: str
    rendered: str
    prompt_hash: str
    segment_id: str


def prompt_digest(rendered: str) -> str:
    return hashlib.sha256(rendered.encode("utf-8")).hexdigest()


def build_prompt(segment: Segment, matches: Sequence[TermMatch], glossary: Glossary,
                 mode: str, template: PromptTemplate | None = None) -> PromptSpec:
    """Render the prompt for one segment.

    In augmented mode the constraint block lists each distinct matched
    entry once, in first-occurrence order. Every match must reference a
    known glossary entry.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r} (expected one of {MODES})")
    if template is None:
        template = PromptTemplate.load_default()

    ordered_entries = []
    seen: set[str] = set()
    for m in matches:
        entry = glossary.entry(m.entry_id)  # raises KeyError on unknown ids
        if m.entry_id not in seen:
            seen.add(m.entry_id)
            ordered_entries.append(entry)

    constraint_block: str | None = None
    if mode == "rag" and ordered_entries:
        lines = [template.constraint_header]
        lines.extend(template.pair_line.format(source_term=e.source_term,
                                               target_term=e.target_term)
                     for e in ordered_entries)
        constraint_block = "\n".join(lines)

    if constraint_block is None:
        rendered = f"{template.instruction}\n\n{segment.source_text}"
    else:
        rendered = f"{template.instruction}\n\n{constraint_block}\n\n{segment.source_text}"

    return PromptSpec(
        mode=mode,
        instruction_text=template.instruction,
        constraint_block=constraint_block,
        segment_text=segment.source_text,
        rendered=rendered,
        prompt_hash=prompt_digest(rendered),
        segment_id=segment.segment_id,
    )
