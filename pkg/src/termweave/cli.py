"""Command-line interface.

Results go to standard output (or files named by flags); logs go to
standard error. Exit codes: 0 on success, 1 on any validation,
configuration, or input problem, 2 on transport or provider failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .audit import (accuracy_by_system, audit_exact_match, consistency_check,
                    enumerate_occurrences, error_profile, load_distractors,
                    load_mqm_labels, verdicts_to_jsonl)
from .backends import BACKEND_KINDS, BackendConfig, ResponseCache, translate_document
from .corpus import load_segments, load_translations, save_translations
from .errors import (ConfigurationError, DegenerateInputError, LoadError,
                     ProviderError, TermweaveError, TransportError,
                     ValidationError)
from .glossary import load_glossary, validate_glossary
from .matching import backend_name
from .pipeline import analyze, load_manifest, run_pipeline, with_seed, write_analysis_artifacts
from .prompting import MODES, PromptTemplate, build_prompt
from .report import format_p, format_pct
from .retrieval import Retriever, matches_to_jsonl
from .stats import (DEFAULT_CI_LEVEL, DEFAULT_RESAMPLES, DEFAULT_SEED,
                    compare_systems, load_scores, summarize_scores)

log = logging.getLogger("termweave")


class _Parser(argparse.ArgumentParser):
    # Usage mistakes are validation failures, so exit 1 (argparse's own
    # default of 2 is reserved for transport errors here).
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _emit(text: str, output: str | None) -> None:
    if output and output != "-":
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load_many_translations(paths, segments):
    records = []
    seen = set()
    for path in paths:
        for record in load_translations(path, segments):
            key = (record.segment_id, record.system_id)
            if key in seen:
                raise ValidationError(
                    f"{path}: duplicate record for segment {key[0]!r},"
                    f" system {key[1]!r} (already loaded from another file)")
            seen.add(key)
            records.append(record)
    return tuple(records)


def _system_order(records, explicit):
    if explicit:
        present = {r.system_id for r in records}
        missing = [s for s in explicit if s not in present]
        if missing:
            raise ValidationError(f"no translations for system(s) {missing}")
        return list(explicit)
    order = []
    for record in records:
        if record.system_id not in order:
            order.append(record.system_id)
    return order


def _backend_from_args(args) -> BackendConfig:
    if args.backend_config:
        try:
            obj = json.loads(Path(args.backend_config).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigurationError(f"backend config not found: {args.backend_config}")
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{args.backend_config}: invalid JSON ({exc})")
        overrides = {
            "model_name": args.model, "temperature": args.temperature,
            "max_parallel": args.max_parallel, "endpoint_url": args.endpoint,
            "credential_env_var": args.credential_env, "replay_path": args.replay,
        }
        obj.update({k: v for k, v in overrides.items() if v is not None})
        return BackendConfig.from_json_obj(obj)
    kind = args.backend or ("replay" if args.replay else None)
    if kind is None:
        raise ConfigurationError(
            "no backend given: pass --backend-config, --backend, or --replay")
    obj = {"backend_kind": kind}
    for key, value in [("endpoint_url", args.endpoint), ("model_name", args.model),
                       ("temperature", args.temperature),
                       ("credential_env_var", args.credential_env),
                       ("max_parallel", args.max_parallel),
                       ("replay_path", args.replay), ("rule", args.rule)]:
        if value is not None:
            obj[key] = value
    return BackendConfig.from_json_obj(obj)


def _cmd_glossary_validate(args) -> int:
    try:
        glossary = load_glossary(args.path, fmt=args.format)
    except (LoadError, ValidationError) as exc:
        # Structural problems mean there is nothing further to check.
        if args.json:
            _emit(json.dumps({"errors": [str(exc)], "warnings": []},
                             ensure_ascii=False) + "\n", args.output)
        else:
            _emit(f"error: {exc}\n", args.output)
        return 1
    report = validate_glossary(glossary)
    _emit((report.to_json() + "\n") if args.json else (report.to_text() + "\n"),
          args.output)
    return 0 if report.ok else 1


def _cmd_retrieve(args) -> int:
    glossary = load_glossary(args.glossary, fmt=args.format)
    segments = load_segments(args.corpus)
    entries = glossary.relevant_entries() if args.relevant_only else None
    retriever = Retriever(glossary, entries)
    by_segment, summary = retriever.retrieve_document(segments)
    matches = [m for s in segments for m in by_segment[s.segment_id]]
    _emit(matches_to_jsonl(matches) + ("\n" if matches else ""), args.output)
    log.info("retrieved %d match(es) of %d distinct entr(ies) over %d segment(s)",
             summary.total_matches, summary.distinct_entries, len(segments))
    return 0


def _cmd_translate(args) -> int:
    glossary = load_glossary(args.glossary)
    segments = load_segments(args.corpus)
    template = PromptTemplate.load(args.template) if args.template else None

    if args.dry_run:
        retriever = Retriever(glossary)
        lines = []
        for segment in segments:
            matches = retriever.retrieve(segment) if args.mode == "rag" else ()
            prompt = build_prompt(segment, matches, glossary, args.mode, template)
            lines.append(json.dumps({
                "segment_id": prompt.segment_id, "mode": prompt.mode,
                "prompt_hash": prompt.prompt_hash, "rendered": prompt.rendered,
            }, ensure_ascii=False, sort_keys=True))
        _emit("\n".join(lines) + ("\n" if lines else ""), args.output)
        return 0

    config = _backend_from_args(args)
    cache = ResponseCache(args.cache_dir) if args.cache_dir else None
    records = translate_document(segments, glossary, args.mode, config,
                                 args.system_id, cache=cache, template=template)
    if args.output and args.output != "-":
        save_translations(records, args.output, meta={
            "tool": "termweave", "tool_version": __version__,
            "system_id": args.system_id, "mode": args.mode})
    else:
        for record in records:
            sys.stdout.write(json.dumps(record.to_json_obj(), ensure_ascii=False,
                                        sort_keys=True) + "\n")
    log.info("translated %d segment(s) as %r", len(records), args.system_id)
    return 0


def _audit_common(args):
    glossary = load_glossary(args.glossary)
    segments = load_segments(args.corpus)
    records = _load_many_translations(args.translations, segments)
    occurrences, summary = enumerate_occurrences(segments, glossary)
    distractors = (load_distractors(args.distractors, glossary)
                   if getattr(args, "distractors", None) else None)
    systems = _system_order(records, getattr(args, "systems", None))
    verdicts = audit_exact_match(occurrences, records, distractors=distractors,
                                 systems=systems)
    return glossary, segments, records, occurrences, summary, verdicts, systems


def _cmd_audit_terms(args) -> int:
    _g, _s, _r, occurrences, summary, verdicts, systems = _audit_common(args)
    _emit(verdicts_to_jsonl(verdicts) + "\n", args.output)
    accuracy = accuracy_by_system(verdicts, occurrences)
    for system_id in systems:
        correct, total, pct = accuracy[system_id]
        log.info("%s: %d/%d correct (%s%%)", system_id, correct, total,
                 format_pct(pct))
    log.info("audited %d occurrence(s) of %d distinct term(s)",
             summary.total_occurrences, summary.distinct_terms)
    return 0


def _cmd_audit_consistency(args) -> int:
    _g, _s, _r, occurrences, _summary, verdicts, _systems = _audit_common(args)
    rows = consistency_check(occurrences, verdicts)
    if args.json:
        text = json.dumps([
            {"system_id": s, "entry_id": e, "flag": f} for s, e, f in rows
        ], ensure_ascii=False, indent=2) + "\n"
    else:
        text = "".join(f"{s}\t{e}\t{f}\n" for s, e, f in rows)
    _emit(text, args.output)
    return 0


def _cmd_audit_mqm(args) -> int:
    glossary = load_glossary(args.glossary)
    segments = load_segments(args.corpus)
    occurrences, _summary = enumerate_occurrences(segments, glossary)
    labels = load_mqm_labels(args.labels, occurrences)
    profiles = error_profile(labels)
    if args.json:
        _emit(json.dumps(profiles, ensure_ascii=False, indent=2, sort_keys=True)
              + "\n", args.output)
    else:
        lines = ["system\twrong_term\tinconsistent_term\tmissing_term\ttotal"]
        for system_id in sorted(profiles):
            row = profiles[system_id]
            lines.append(f"{system_id}\t{row['wrong_term']}\t"
                         f"{row['inconsistent_term']}\t{row['missing_term']}\t"
                         f"{row['total']}")
        _emit("\n".join(lines) + "\n", args.output)
    return 0


def _cmd_scores_summarize(args) -> int:
    records = load_scores(args.scores)
    summary = summarize_scores(records)
    if args.json:
        obj = {s: {"mean": m, "sd": sd, "n": n} for s, (m, sd, n) in summary.items()}
        _emit(json.dumps(obj, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
              args.output)
    else:
        lines = ["system\tmean\tsd\tn"]
        lines += [f"{s}\t{format_pct(m)}\t{format_pct(sd)}\t{n}"
                  for s, (m, sd, n) in summary.items()]
        _emit("\n".join(lines) + "\n", args.output)
    return 0


def _cmd_stats_compare(args) -> int:
    records = load_scores(args.scores)
    system_a, system_b = args.contrast
    result = compare_systems(records, system_a, system_b,
                             n_resamples=args.resamples, level=args.level,
                             seed=args.seed,
                             degenerate_as_null=args.degenerate_as_null)
    if args.json:
        _emit(json.dumps(result.to_json_obj(), ensure_ascii=False, indent=2,
                         sort_keys=True) + "\n", args.output)
    else:
        _emit(
            f"contrast: {system_a} - {system_b}\n"
            f"mean difference: {result.mean_diff:+.2f}\n"
            f"{int(result.ci_level * 100)}% bootstrap CI:"
            f" [{result.ci_low:.2f}, {result.ci_high:.2f}]"
            f" ({result.n_resamples} resamples, seed {result.rng_seed})\n"
            f"wilcoxon p: {format_p(result.wilcoxon_p)}"
            f" (statistic {result.wilcoxon_statistic:g})\n"
            f"n segments: {result.n_segments}\n"
            f"method: {result.method_notes}\n",
            args.output)
    return 0


def _cmd_report(args) -> int:
    glossary = load_glossary(args.glossary)
    segments = load_segments(args.corpus)
    records = _load_many_translations(args.translations, segments)
    systems = _system_order(records, args.systems)
    distractors = (load_distractors(args.distractors, glossary)
                   if args.distractors else None)
    score_records = load_scores(args.scores) if args.scores else None
    result = analyze(glossary, segments, records, systems,
                     distractors=distractors, score_records=score_records,
                     mqm_labels_path=args.mqm_labels, seed=args.seed,
                     n_resamples=args.resamples,
                     meta={"tool": "termweave", "tool_version": __version__})
    if args.output_dir:
        paths = write_analysis_artifacts(
            result, Path(args.output_dir),
            {"tool": "termweave", "tool_version": __version__})
        log.info("wrote %s", ", ".join(str(p) for p in paths.values()))
    else:
        sys.stdout.write(result.report_text)
    return 0


def _cmd_run(args) -> int:
    manifest = load_manifest(args.manifest)
    if args.seed is not None:
        manifest = with_seed(manifest, args.seed)
    result = run_pipeline(manifest)
    sys.stdout.write(result.report_text)
    log.info("artifacts in %s (manifest digest %s)", result.output_dir,
             result.manifest_digest)
    return 0


def _add_output(parser):
    parser.add_argument("--output", "-o", default=None,
                        help="output file ('-' or omitted: standard output)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="termweave",
                     description="Glossary-constrained translation pipeline"
                                 " and terminology audit toolkit")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__} ({backend_name()} matcher)")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="more logging on standard error (repeatable)")
    parser.add_argument("-q", "--quiet", action="store_true",
                        help="warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    p_glossary = sub.add_parser("glossary", help="glossary file operations")
    gsub = p_glossary.add_subparsers(dest="subcommand", required=True)
    p_gv = gsub.add_parser("validate", help="check a glossary file")
    p_gv.add_argument("path")
    p_gv.add_argument("--format", choices=("tsv", "csv"), default="tsv")
    p_gv.add_argument("--json", action="store_true")
    _add_output(p_gv)
    p_gv.set_defaults(func=_cmd_glossary_validate)

    p_ret = sub.add_parser("retrieve", help="match glossary terms in a corpus")
    p_ret.add_argument("--glossary", required=True)
    p_ret.add_argument("--corpus", required=True)
    p_ret.add_argument("--format", choices=("tsv", "csv"), default="tsv")
    p_ret.add_argument("--relevant-only", action="store_true",
                       help="skip entries marked irrelevant (the audit universe)")
    _add_output(p_ret)
    p_ret.set_defaults(func=_cmd_retrieve)

    p_tr = sub.add_parser("translate", help="translate a corpus via a backend")
    p_tr.add_argument("--glossary", required=True)
    p_tr.add_argument("--corpus", required=True)
    p_tr.add_argument("--mode", choices=MODES, required=True)
    p_tr.add_argument("--system-id", required=True)
    p_tr.add_argument("--backend-config", help="backend settings as a JSON file")
    p_tr.add_argument("--backend", choices=BACKEND_KINDS)
    p_tr.add_argument("--endpoint", help="chat completion endpoint URL")
    p_tr.add_argument("--model")
    p_tr.add_argument("--temperature", type=float)
    p_tr.add_argument("--credential-env",
                      help="name of the environment variable holding the API key")
    p_tr.add_argument("--max-parallel", type=int)
    p_tr.add_argument("--replay", help="translations JSONL to replay by prompt hash")
    p_tr.add_argument("--rule", help="mock_rule backend rule name")
    p_tr.add_argument("--cache-dir")
    p_tr.add_argument("--template", help="prompt template JSON file")
    p_tr.add_argument("--dry-run", action="store_true",
                      help="render prompts without calling any backend")
    _add_output(p_tr)
    p_tr.set_defaults(func=_cmd_translate)

    p_audit = sub.add_parser("audit", help="terminology audits")
    asub = p_audit.add_subparsers(dest="subcommand", required=True)
    for name, func, extra_json in [
        ("terms", _cmd_audit_terms, False),
        ("consistency", _cmd_audit_consistency, True),
    ]:
        p = asub.add_parser(name)
        p.add_argument("--glossary", required=True)
        p.add_argument("--corpus", required=True)
        p.add_argument("--translations", nargs="+", required=True)
        p.add_argument("--distractors")
        p.add_argument("--systems", nargs="+",
                       help="system order (default: order of appearance)")
        if extra_json:
            p.add_argument("--json", action="store_true")
        _add_output(p)
        p.set_defaults(func=func)
    p_mqm = asub.add_parser("mqm", help="error profile from adjudicated labels")
    p_mqm.add_argument("--glossary", required=True)
    p_mqm.add_argument("--corpus", required=True)
    p_mqm.add_argument("--labels", required=True)
    p_mqm.add_argument("--json", action="store_true")
    _add_output(p_mqm)
    p_mqm.set_defaults(func=_cmd_audit_mqm)

    p_scores = sub.add_parser("scores", help="quality score files")
    ssub = p_scores.add_subparsers(dest="subcommand", required=True)
    p_sum = ssub.add_parser("summarize")
    p_sum.add_argument("--scores", required=True)
    p_sum.add_argument("--json", action="store_true")
    _add_output(p_sum)
    p_sum.set_defaults(func=_cmd_scores_summarize)

    p_stats = sub.add_parser("stats", help="paired comparisons")
    tsub = p_stats.add_subparsers(dest="subcommand", required=True)
    p_cmp = tsub.add_parser("compare")
    p_cmp.add_argument("--scores", required=True)
    p_cmp.add_argument("--contrast", nargs=2, metavar=("SYSTEM_A", "SYSTEM_B"),
                       required=True)
    p_cmp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p_cmp.add_argument("--resamples", type=int, default=DEFAULT_RESAMPLES)
    p_cmp.add_argument("--level", type=float, default=DEFAULT_CI_LEVEL)
    p_cmp.add_argument("--degenerate-as-null", action="store_true",
                       help="report p=1.0 instead of failing when every"
                            " difference is zero")
    p_cmp.add_argument("--json", action="store_true")
    _add_output(p_cmp)
    p_cmp.set_defaults(func=_cmd_stats_compare)

    p_rep = sub.add_parser("report",
                           help="audit + statistics + tables from existing"
                                " translation files")
    p_rep.add_argument("--glossary", required=True)
    p_rep.add_argument("--corpus", required=True)
    p_rep.add_argument("--translations", nargs="+", required=True)
    p_rep.add_argument("--scores")
    p_rep.add_argument("--mqm-labels")
    p_rep.add_argument("--distractors")
    p_rep.add_argument("--systems", nargs="+",
                       help="system order (default: order of appearance)")
    p_rep.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p_rep.add_argument("--resamples", type=int, default=DEFAULT_RESAMPLES)
    p_rep.add_argument("--output-dir",
                       help="write report/stats/verdict artifacts here"
                            " (default: text report to standard output)")
    p_rep.set_defaults(func=_cmd_report)

    p_run = sub.add_parser("run", help="full pipeline from a JSON manifest")
    p_run.add_argument("--manifest", required=True)
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the manifest seed")
    p_run.set_defaults(func=_cmd_run)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = (logging.WARNING if args.quiet
             else logging.DEBUG if args.verbose else logging.INFO)
    logging.basicConfig(stream=sys.stderr, level=level,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (TransportError, ProviderError) as exc:
        log.error("%s", exc)
        return 2
    except (ValidationError, LoadError, ConfigurationError,
            DegenerateInputError) as exc:
        log.error("%s", exc)
        return 1
    except TermweaveError as exc:
        log.error("%s", exc)
        return 1
    except KeyboardInterrupt:
        log.error("interrupted")
        return 1


if __name__ == "__main__":
    sys.exit(main())
