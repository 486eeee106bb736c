"""Result tables and the qualitative-example listing.

One JSON report object is the single source of truth; the plain-text
rendering is derived from it, so the two views cannot disagree. Number
formatting is fixed here: percentages and score statistics use two
decimals, p-values drop the leading zero and collapse to "<.001" or
"<.00001" below those thresholds, and significance is starred at 0.05.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .audit import AuditVerdict, TermOccurrence
from .corpus import TranslationRecord, group_by_system
from .errors import LoadError
from .glossary import Glossary, fold_term
from .matching import TermScanner
from .stats import McNemarInput, PairedStatsResult

log = logging.getLogger(__name__)

REPORT_FORMAT_VERSION = 1
SIGNIFICANCE_ALPHA = 0.05


def _strip_leading_zero(text: str) -> str:
    return text[1:] if text.startswith("0.") else text


def format_p(p: float) -> str:
    """p-value display: "<.00001", "<.001", then four decimals below
    .01 and three otherwise, always without the leading zero."""
    if p < 0.00001:
        return "<.00001"
    if p < 0.001:
        return "<.001"
    if p < 0.01:
        return _strip_leading_zero(f"{p:.4f}")
    return _strip_leading_zero(f"{p:.3f}")


def format_pct(value: float) -> str:
    return f"{value:.2f}"


@dataclass(frozen=True)
class QualitativeExample:
    occurrence_id: str
    segment_id: str
    system_id: str
    source_term: str
    expected_form: str
    produced_form: str

    def to_json_obj(self) -> dict:
        return {
            "occurrence_id": self.occurrence_id,
            "segment_id": self.segment_id,
            "system_id": self.system_id,
            "source_term": self.source_term,
            "expected_form": self.expected_form,
            "produced_form": self.produced_form,
        }


def collect_distractor_examples(verdicts: Sequence[AuditVerdict],
                                occurrences: Sequence[TermOccurrence],
                                translations: Sequence[TranslationRecord],
                                glossary: Glossary,
                                distractors: Mapping[str, Sequence[str]],
                                system_order: Sequence[str] | None = None,
                                ) -> list[QualitativeExample]:
    """One example per distractor-triggered incorrect verdict: the
    source term, the preferred form, and the form actually produced
    (recovered by re-scanning the output for the entry's distractors)."""
    occ_by_id = {o.occurrence_id: o for o in occurrences}
    occ_position = {o.occurrence_id: i for i, o in enumerate(occurrences)}
    grouped = group_by_system(translations)
    system_rank = {s: i for i, s in enumerate(system_order or sorted(grouped))}

    scanners: dict[str, TermScanner] = {}
    for entry_id, forms in distractors.items():
        if forms:
            scanners[entry_id] = TermScanner([fold_term(f) for f in forms])

    wrong = [v for v in verdicts if v.auto_label == "wrong_candidate"
             and v.occurrence_id in occ_by_id]
    wrong.sort(key=lambda v: (occ_position[v.occurrence_id],
                              system_rank.get(v.system_id, len(system_rank))))
    examples: list[QualitativeExample] = []
    for verdict in wrong:
        occ = occ_by_id[verdict.occurrence_id]
        record = grouped.get(verdict.system_id, {}).get(occ.segment_id)
        scanner = scanners.get(occ.entry_id)
        if record is None or scanner is None:
            log.warning("cannot recover produced form for %s/%s",
                        verdict.occurrence_id, verdict.system_id)
            continue
        hits = scanner.scan(record.output_text)
        if not hits:
            log.warning("no distractor hit in output for %s/%s",
                        verdict.occurrence_id, verdict.system_id)
            continue
        _idx, start, end = hits[0]
        examples.append(QualitativeExample(
            occurrence_id=occ.occurrence_id,
            segment_id=occ.segment_id,
            system_id=verdict.system_id,
            source_term=glossary.entry(occ.entry_id).source_term,
            expected_form=occ.expected_target,
            produced_form=record.output_text[start:end],
        ))
    return examples


def _ordered(system_ids, system_order: Sequence[str] | None):
    if system_order is None:
        return sorted(system_ids)
    rank = {s: i for i, s in enumerate(system_order)}
    return sorted(system_ids, key=lambda s: (rank.get(s, len(rank)), s))


def build_report(score_summary: Mapping[str, tuple[float, float, int]] | None = None,
                 paired_results: Sequence[PairedStatsResult] | None = None,
                 accuracy: Mapping[str, tuple[int, int, float]] | None = None,
                 mcnemar_results: Sequence[tuple[McNemarInput, float]] | None = None,
                 error_profiles: Mapping[str, Mapping[str, int]] | None = None,
                 qualitative: Sequence[QualitativeExample] | None = None,
                 system_order: Sequence[str] | None = None,
                 ) -> dict:
    """Assemble the JSON report; sections without inputs are omitted."""
    report: dict = {"format_version": REPORT_FORMAT_VERSION}

    if score_summary:
        best = max(mean for mean, _sd, _n in score_summary.values())
        report["score_summary"] = [
            {
                "system_id": system_id,
                "mean": round(score_summary[system_id][0], 10),
                "sd": round(score_summary[system_id][1], 10),
                "n": score_summary[system_id][2],
                "best": score_summary[system_id][0] == best,
            }
            for system_id in _ordered(score_summary, system_order)
        ]

    if paired_results:
        report["paired_comparisons"] = [
            r.to_json_obj() | {
                "p_display": format_p(r.wilcoxon_p),
                "significant": r.wilcoxon_p < SIGNIFICANCE_ALPHA,
            }
            for r in paired_results
        ]

    if accuracy:
        best_pct = max(pct for _c, _t, pct in accuracy.values())
        report["terminology_accuracy"] = [
            {
                "system_id": system_id,
                "correct": accuracy[system_id][0],
                "total": accuracy[system_id][1],
                "accuracy_pct": accuracy[system_id][2],
                "accuracy_display": format_pct(accuracy[system_id][2]),
                "best": accuracy[system_id][2] == best_pct,
            }
            for system_id in _ordered(accuracy, system_order)
        ]

    if mcnemar_results:
        report["mcnemar"] = [
            {
                "contrast": list(inp.contrast),
                "b": inp.b,
                "c": inp.c,
                "n_concordant": inp.n_concordant,
                "p": p,
                "p_display": format_p(p),
                "significant": p < SIGNIFICANCE_ALPHA,
            }
            for inp, p in mcnemar_results
        ]

    if error_profiles:
        columns = ("wrong_term", "inconsistent_term", "missing_term", "total")
        minima = {col: min(row[col] for row in error_profiles.values())
                  for col in columns}
        report["error_profile"] = [
            {
                "system_id": system_id,
                **{col: error_profiles[system_id][col] for col in columns},
                "best_columns": [col for col in columns
                                 if error_profiles[system_id][col] == minima[col]],
            }
            for system_id in _ordered(error_profiles, system_order)
        ]

    if qualitative is not None:
        report["qualitative_examples"] = [ex.to_json_obj() for ex in qualitative]

    return report


def _text_table(title: str, columns: Sequence[str], rows: Sequence[Sequence[str]],
                footnote: str | None = None) -> list[str]:
    widths = [
        max(len(col), *(len(row[i]) for row in rows)) if rows else len(col)
        for i, col in enumerate(columns)
    ]
    lines = [title]
    header = "  ".join(col.ljust(widths[i]) for i, col in enumerate(columns)).rstrip()
    lines.append(header)
    lines.append("-" * len(header))
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i])
                               for i, cell in enumerate(row)).rstrip())
    if footnote:
        lines.append(footnote)
    lines.append("")
    return lines


def render_text(report: Mapping) -> str:
    """Plain-text tables derived from the JSON report object."""
    lines: list[str] = ["Terminology-controlled translation report"]
    meta = report.get("meta") or {}
    if meta.get("manifest_digest"):
        lines.append(f"manifest digest: {meta['manifest_digest']}")
    lines.append("")

    if "score_summary" in report:
        rows = [
            [r["system_id"], format_pct(r["mean"]) + ("*" if r["best"] else ""),
             format_pct(r["sd"]), str(r["n"])]
            for r in report["score_summary"]
        ]
        lines += _text_table(
            "Segment quality scores (0-100) per system",
            ("System", "Mean score", "SD", "Segments (n)"), rows,
            "* highest mean")

    if "paired_comparisons" in report:
        rows = [
            [f"{r['contrast'][0]} - {r['contrast'][1]}",
             f"{r['mean_diff']:+.2f}",
             f"[{r['ci_low']:.2f}, {r['ci_high']:.2f}]",
             r["p_display"] + ("*" if r["significant"] else "")]
            for r in report["paired_comparisons"]
        ]
        lines += _text_table(
            "Paired segment-level score comparisons (percentile bootstrap CIs)",
            ("Contrast", "Mean difference", "95% CI", "Wilcoxon p"), rows,
            "* significant at 0.05")

    if "terminology_accuracy" in report:
        rows = [
            [r["system_id"], f"{r['correct']}/{r['total']}",
             r["accuracy_display"] + ("*" if r["best"] else ""), str(r["total"])]
            for r in report["terminology_accuracy"]
        ]
        lines += _text_table(
            "Exact-match terminology accuracy",
            ("System", "Correct terms", "Accuracy (%)", "Audited terms (n)"), rows,
            "* highest accuracy")

    if "mcnemar" in report:
        rows = [
            [f"{r['contrast'][0]} vs {r['contrast'][1]}",
             r["p_display"] + ("*" if r["significant"] else ""),
             f"b={r['b']}, c={r['c']}"]
            for r in report["mcnemar"]
        ]
        lines += _text_table(
            "Pairwise exact McNemar tests on terminology correctness",
            ("Contrast", "Exact McNemar p", "Discordant counts"), rows,
            "* significant at 0.05")

    if "error_profile" in report:
        def cell(row, col):
            marker = "*" if col in row["best_columns"] else ""
            return str(row[col]) + marker
        rows = [
            [r["system_id"], cell(r, "wrong_term"), cell(r, "inconsistent_term"),
             cell(r, "missing_term"), cell(r, "total")]
            for r in report["error_profile"]
        ]
        lines += _text_table(
            "Terminology error profile (adjudicated labels)",
            ("System", "Wrong term", "Inconsistent term", "Missing term",
             "Total error spans"), rows,
            "* lowest in column")

    if "qualitative_examples" in report:
        examples = report["qualitative_examples"]
        lines.append("Distractor-triggered wrong-term examples")
        if examples:
            rows = [
                [ex["segment_id"], ex["system_id"], ex["source_term"],
                 ex["expected_form"], ex["produced_form"]]
                for ex in examples
            ]
            lines += _text_table(
                f"{len(examples)} case(s) where a known non-preferred form was produced",
                ("Segment", "System", "Source term", "Preferred form", "Produced form"),
                rows)
        else:
            lines += ["(none found)", ""]

    return "\n".join(lines).rstrip() + "\n"


def render_tables(score_summary=None, paired_results=None, accuracy=None,
                  mcnemar_results=None, error_profiles=None, qualitative=None,
                  system_order=None) -> tuple[str, dict]:
    """Both views of the report: (plain text, JSON object)."""
    obj = build_report(score_summary, paired_results, accuracy, mcnemar_results,
                       error_profiles, qualitative, system_order)
    return render_text(obj), obj


def save_report(report: Mapping, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8")


def load_report(path: str | Path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise LoadError(f"report file not found: {path}")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LoadError(f"{path}: invalid JSON ({exc})")
    if not isinstance(obj, dict):
        raise LoadError(f"{path}: report must be a JSON object")
    return obj
