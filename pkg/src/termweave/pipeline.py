"""End-to-end orchestration driven by a JSON run manifest.

The manifest is one JSON document; every path inside it is resolved
relative to the manifest's own directory, so a run directory can be
moved or mounted elsewhere without edits. A digest of the effective
manifest content (canonical JSON, original path strings) is stamped
into every artifact so outputs can always be traced to the exact
configuration that produced them. Artifacts carry no timestamps:
reruns with unchanged inputs, seed, and cache are byte-identical.

Per-segment failures leave completed work in the response cache, so a
rerun after a partial failure only re-requests the missing segments.
"""

from __future__ import annotations

import hashlib
import json
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

from . import __version__
from .audit import (audit_exact_match, accuracy_by_system, enumerate_occurrences,
                    error_profile, load_distractors, load_mqm_labels,
                    verdicts_to_jsonl)
from .backends import BackendConfig, ResponseCache, translate_document
from .corpus import load_segments, save_translations
from .errors import LoadError, TermweaveError, ValidationError
from .glossary import load_glossary, validate_glossary
from .prompting import MODES, PromptTemplate
from .report import build_report, collect_distractor_examples, render_text
from .stats import (DEFAULT_RESAMPLES, build_mcnemar_input, compare_systems,
                    load_scores, mcnemar_exact, summarize_scores)

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1

_MANIFEST_KEYS = {
    "manifest_version", "corpus", "glossary", "systems", "scores", "mqm_labels",
    "distractors", "template", "output_dir", "cache_dir", "seed", "n_resamples",
}
_SYSTEM_KEYS = {"system_id", "mode", "backend"}


@dataclass(frozen=True)
class SystemSpec:
    system_id: str
    mode: str
    backend: BackendConfig
    backend_raw: dict = field(repr=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(
                f"system {self.system_id!r}: mode must be one of {MODES},"
                f" got {self.mode!r}")


@dataclass(frozen=True)
class RunManifest:
    base_dir: Path
    corpus: str
    glossary: str
    systems: tuple[SystemSpec, ...]
    output_dir: str
    seed: int = 0
    n_resamples: int = DEFAULT_RESAMPLES
    scores: str | None = None
    mqm_labels: str | None = None
    distractors: str | None = None
    template: str | None = None
    cache_dir: str | None = None

    def __post_init__(self):
        ids = [s.system_id for s in self.systems]
        if len(ids) != len(set(ids)):
            raise ValidationError(f"duplicate system_id in manifest: {ids}")
        if not self.systems:
            raise ValidationError("manifest declares no systems")

    def resolve(self, rel: str) -> Path:
        return (self.base_dir / rel).resolve()

    def to_json_obj(self) -> dict:
        obj: dict = {
            "manifest_version": MANIFEST_VERSION,
            "corpus": self.corpus,
            "glossary": self.glossary,
            "systems": [
                {"system_id": s.system_id, "mode": s.mode, "backend": s.backend_raw}
                for s in self.systems
            ],
            "output_dir": self.output_dir,
            "seed": self.seed,
            "n_resamples": self.n_resamples,
        }
        for key in ("scores", "mqm_labels", "distractors", "template", "cache_dir"):
            value = getattr(self, key)
            if value is not None:
                obj[key] = value
        return obj

    def digest(self) -> str:
        canonical = json.dumps(self.to_json_obj(), sort_keys=True,
                               separators=(",", ":"), ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _build_system(obj: dict, base_dir: Path, index: int) -> SystemSpec:
    if not isinstance(obj, dict):
        raise ValidationError(f"systems[{index}] must be an object")
    unknown = set(obj) - _SYSTEM_KEYS
    if unknown:
        raise ValidationError(f"systems[{index}]: unknown key(s) {sorted(unknown)}")
    for key in _SYSTEM_KEYS:
        if key not in obj:
            raise ValidationError(f"systems[{index}]: missing key {key!r}")
    backend_ref = obj["backend"]
    if isinstance(backend_ref, str):
        ref_path = (base_dir / backend_ref).resolve()
        try:
            backend_raw = json.loads(ref_path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ValidationError(
                f"systems[{index}]: backend config file not found: {ref_path}")
        except json.JSONDecodeError as exc:
            raise LoadError(f"{ref_path}: invalid JSON ({exc})")
    elif isinstance(backend_ref, dict):
        backend_raw = backend_ref
    else:
        raise ValidationError(
            f"systems[{index}]: backend must be an object or a file path")
    resolved = dict(backend_raw)
    if resolved.get("replay_path"):
        resolved["replay_path"] = str((base_dir / resolved["replay_path"]).resolve())
    return SystemSpec(
        system_id=str(obj["system_id"]),
        mode=str(obj["mode"]),
        backend=BackendConfig.from_json_obj(resolved),
        backend_raw=backend_raw,
    )


def load_manifest(path: str | Path) -> RunManifest:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise LoadError(f"manifest not found: {path}")
    except json.JSONDecodeError as exc:
        raise LoadError(f"{path}: invalid JSON ({exc})")
    if not isinstance(obj, dict):
        raise LoadError(f"{path}: manifest must be a JSON object")
    unknown = set(obj) - _MANIFEST_KEYS
    if unknown:
        raise ValidationError(f"{path}: unknown manifest key(s) {sorted(unknown)}")
    version = obj.get("manifest_version", MANIFEST_VERSION)
    if version != MANIFEST_VERSION:
        raise ValidationError(
            f"{path}: unsupported manifest_version {version!r}")
    for key in ("corpus", "glossary", "systems", "output_dir"):
        if key not in obj:
            raise ValidationError(f"{path}: missing manifest key {key!r}")
    base_dir = path.parent.resolve()
    systems = tuple(
        _build_system(entry, base_dir, i) for i, entry in enumerate(obj["systems"])
    )
    return RunManifest(
        base_dir=base_dir,
        corpus=str(obj["corpus"]),
        glossary=str(obj["glossary"]),
        systems=systems,
        output_dir=str(obj["output_dir"]),
        seed=int(obj.get("seed", 0)),
        n_resamples=int(obj.get("n_resamples", DEFAULT_RESAMPLES)),
        scores=obj.get("scores"),
        mqm_labels=obj.get("mqm_labels"),
        distractors=obj.get("distractors"),
        template=obj.get("template"),
        cache_dir=obj.get("cache_dir"),
    )


def with_seed(manifest: RunManifest, seed: int) -> RunManifest:
    """Manifest with a different stats seed; the digest follows."""
    return replace(manifest, seed=seed)


@dataclass(frozen=True)
class RunResult:
    output_dir: Path
    manifest_digest: str
    artifact_paths: dict[str, Path]
    report: dict
    report_text: str


@contextmanager
def _stage(name: str):
    log.info("stage %s: start", name)
    try:
        yield
    except TermweaveError as exc:
        raise type(exc)(f"stage {name}: {exc}") from exc
    log.info("stage %s: done", name)


def _preflight(manifest: RunManifest) -> None:
    missing = []
    for label, rel in [("corpus", manifest.corpus), ("glossary", manifest.glossary),
                       ("scores", manifest.scores), ("mqm_labels", manifest.mqm_labels),
                       ("distractors", manifest.distractors),
                       ("template", manifest.template)]:
        if rel is not None and not manifest.resolve(rel).is_file():
            missing.append(f"{label} ({manifest.resolve(rel)})")
    for spec in manifest.systems:
        if spec.backend.replay_path and not Path(spec.backend.replay_path).is_file():
            missing.append(f"replay file for {spec.system_id!r}"
                           f" ({spec.backend.replay_path})")
    if missing:
        raise ValidationError("missing input file(s): " + "; ".join(missing))


def _contrasts(systems: Sequence[SystemSpec]) -> list[tuple[str, str]]:
    """Every ordered pair (later system, earlier system) in manifest
    order, so listing the baseline first yields later-minus-baseline
    differences."""
    ids = [s.system_id for s in systems]
    return [(ids[i], ids[j]) for i in range(len(ids)) for j in range(i)]


@dataclass(frozen=True)
class AnalysisResult:
    occurrences: tuple
    occurrence_summary: object
    verdicts: tuple
    accuracy: dict
    mcnemar_results: list
    score_summary: dict | None
    paired_results: list | None
    profiles: dict | None
    qualitative: list | None
    report: dict
    report_text: str


def analyze(glossary, segments, translations, system_order: Sequence[str], *,
            distractors: Mapping | None = None,
            score_records: Sequence | None = None,
            mqm_labels_path: str | Path | None = None,
            seed: int = 0, n_resamples: int = DEFAULT_RESAMPLES,
            meta: Mapping | None = None,
            contrasts: Sequence[tuple[str, str]] | None = None) -> AnalysisResult:
    """Everything downstream of translation: audit, statistics, report.

    ``contrasts`` defaults to every ordered pair (later, earlier) in
    ``system_order``.
    """
    if contrasts is None:
        contrasts = [(system_order[i], system_order[j])
                     for i in range(len(system_order)) for j in range(i)]

    with _stage("occurrences"):
        occurrences, occ_summary = enumerate_occurrences(segments, glossary)

    with _stage("audit"):
        verdicts = audit_exact_match(occurrences, translations,
                                     distractors=distractors, systems=system_order)
        accuracy = accuracy_by_system(verdicts, occurrences)

    with _stage("mcnemar"):
        mcnemar_results = []
        for contrast in contrasts:
            inp = build_mcnemar_input(verdicts, contrast)
            mcnemar_results.append((inp, mcnemar_exact(inp.b, inp.c)))

    score_summary = None
    paired_results = None
    if score_records is not None:
        with _stage("scores"):
            known_segments = {s.segment_id for s in segments}
            strange = sorted({r.segment_id for r in score_records} - known_segments)
            if strange:
                raise ValidationError(
                    f"score file references unknown segment id(s): {strange[:5]}")
            score_summary = summarize_scores(score_records)
            scored_systems = set(score_summary)
            paired_results = []
            for contrast in contrasts:
                if not set(contrast) <= scored_systems:
                    log.warning("skipping score contrast %s: missing scores", contrast)
                    continue
                paired_results.append(compare_systems(
                    score_records, contrast[0], contrast[1],
                    n_resamples=n_resamples, seed=seed))

    profiles = None
    if mqm_labels_path is not None:
        with _stage("mqm"):
            labels = load_mqm_labels(mqm_labels_path, occurrences)
            profiles = error_profile(labels)

    qualitative = None
    if distractors is not None:
        with _stage("qualitative"):
            qualitative = collect_distractor_examples(
                verdicts, occurrences, translations, glossary, distractors,
                system_order=system_order)

    with _stage("report"):
        report = build_report(
            score_summary=score_summary, paired_results=paired_results,
            accuracy=accuracy, mcnemar_results=mcnemar_results,
            error_profiles=profiles, qualitative=qualitative,
            system_order=system_order)
        head: dict = {}
        if meta:
            head["meta"] = dict(meta) | {"artifact": "report"}
        head["occurrence_summary"] = {
            "distinct_terms": occ_summary.distinct_terms,
            "total_occurrences": occ_summary.total_occurrences,
        }
        report = head | report
        report_text = render_text(report)

    return AnalysisResult(
        occurrences=occurrences, occurrence_summary=occ_summary,
        verdicts=verdicts, accuracy=accuracy, mcnemar_results=mcnemar_results,
        score_summary=score_summary, paired_results=paired_results,
        profiles=profiles, qualitative=qualitative,
        report=report, report_text=report_text)


def write_analysis_artifacts(result: AnalysisResult, out_dir: Path,
                             meta: Mapping) -> dict[str, Path]:
    """The verdict, stats, and report files for an analysis."""
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = dict(meta)
    paths: dict[str, Path] = {}

    lines = [json.dumps({"_meta": meta | {"artifact": "occurrences"}},
                        ensure_ascii=False, sort_keys=True)]
    lines += [
        json.dumps({
            "occurrence_id": o.occurrence_id, "segment_id": o.segment_id,
            "entry_id": o.entry_id, "match_index": o.match_index,
            "expected_target": o.expected_target,
        }, ensure_ascii=False, sort_keys=True)
        for o in result.occurrences
    ]
    paths["occurrences"] = out_dir / "occurrences.jsonl"
    paths["occurrences"].write_text("\n".join(lines) + "\n", encoding="utf-8")

    paths["verdicts"] = out_dir / "verdicts.jsonl"
    paths["verdicts"].write_text(
        verdicts_to_jsonl(result.verdicts, meta=meta | {"artifact": "verdicts"})
        + "\n", encoding="utf-8")

    stats_obj: dict = {
        "meta": meta | {"artifact": "stats"},
        "accuracy": {s: {"correct": c, "total": t, "pct": p}
                     for s, (c, t, p) in result.accuracy.items()},
        "mcnemar": [
            {"contrast": list(inp.contrast), "b": inp.b, "c": inp.c,
             "n_concordant": inp.n_concordant, "p": p}
            for inp, p in result.mcnemar_results
        ],
    }
    if result.score_summary is not None:
        stats_obj["score_summary"] = {
            s: {"mean": m, "sd": sd, "n": n}
            for s, (m, sd, n) in result.score_summary.items()
        }
    if result.paired_results is not None:
        stats_obj["paired_comparisons"] = [r.to_json_obj()
                                           for r in result.paired_results]
    if result.profiles is not None:
        stats_obj["error_profile"] = {s: dict(row)
                                      for s, row in result.profiles.items()}
    paths["stats"] = out_dir / "stats.json"
    paths["stats"].write_text(
        json.dumps(stats_obj, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8")

    paths["report.json"] = out_dir / "report.json"
    paths["report.json"].write_text(
        json.dumps(result.report, ensure_ascii=False, sort_keys=True, indent=2)
        + "\n", encoding="utf-8")
    paths["report.txt"] = out_dir / "report.txt"
    paths["report.txt"].write_text(result.report_text, encoding="utf-8")
    return paths


def run_pipeline(manifest: RunManifest) -> RunResult:
    _preflight(manifest)
    digest = manifest.digest()
    meta_base = {"manifest_digest": digest, "tool": "termweave",
                 "tool_version": __version__}
    system_order = [s.system_id for s in manifest.systems]

    with _stage("glossary"):
        glossary = load_glossary(manifest.resolve(manifest.glossary))
        check = validate_glossary(glossary)
        if not check.ok:
            raise ValidationError("glossary failed validation: "
                                  + "; ".join(check.errors))
    with _stage("corpus"):
        segments = load_segments(manifest.resolve(manifest.corpus))

    template = None
    if manifest.template:
        with _stage("template"):
            template = PromptTemplate.load(manifest.resolve(manifest.template))

    out_dir = manifest.resolve(manifest.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache_root = (manifest.resolve(manifest.cache_dir) if manifest.cache_dir
                  else out_dir / "cache")
    cache = ResponseCache(cache_root)
    paths: dict[str, Path] = {}

    translations = []
    for spec in manifest.systems:
        with _stage(f"translate:{spec.system_id}"):
            records = translate_document(
                segments, glossary, spec.mode, spec.backend, spec.system_id,
                cache=cache, template=template)
            path = out_dir / f"translations.{spec.system_id}.jsonl"
            save_translations(records, path, meta=meta_base | {
                "artifact": "translations", "system_id": spec.system_id,
                "mode": spec.mode})
            paths[f"translations.{spec.system_id}"] = path
            translations.extend(records)

    distractors = None
    if manifest.distractors:
        with _stage("distractors"):
            distractors = load_distractors(
                manifest.resolve(manifest.distractors), glossary)

    score_records = None
    if manifest.scores:
        with _stage("scores"):
            score_records = load_scores(manifest.resolve(manifest.scores))

    result = analyze(
        glossary, segments, translations, system_order,
        distractors=distractors, score_records=score_records,
        mqm_labels_path=(manifest.resolve(manifest.mqm_labels)
                         if manifest.mqm_labels else None),
        seed=manifest.seed, n_resamples=manifest.n_resamples, meta=meta_base)

    paths |= write_analysis_artifacts(result, out_dir, meta_base)

    log.info("pipeline complete: %s", out_dir)
    return RunResult(output_dir=out_dir, manifest_digest=digest,
                     artifact_paths=paths, report=result.report,
                     report_text=result.report_text)
