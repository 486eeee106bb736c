"""Paired statistics for system comparison.

Summaries use the sample standard deviation (n-1 denominator).
Confidence intervals are percentile bootstrap over per-segment paired
differences (resampling unit = segment, with replacement, resample size
= n), deterministic for a given seed; the generator (numpy PCG64) and
seed are recorded in every result because bootstrap intervals agree
across implementations only in distribution, not bitwise.

The Wilcoxon signed-rank test drops zero differences and midranks tied
absolute differences. The null distribution is enumerated exactly
(subset-sum counting over the ranks) when at most 25 nonzero pairs
carry no ties; otherwise a normal approximation with tie correction and
a 0.5 continuity correction is used. The McNemar test is the exact
two-sided binomial over discordant pairs. All p-values are two-sided.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from statistics import NormalDist
from typing import Iterable, Mapping, Sequence

import numpy as np

from .audit import AuditVerdict
from .errors import DegenerateInputError, LoadError, ValidationError

DEFAULT_RESAMPLES = 5000
DEFAULT_CI_LEVEL = 0.95
DEFAULT_SEED = 0
WILCOXON_EXACT_MAX_N = 25

_STD_NORMAL = NormalDist()


@dataclass(frozen=True)
class ScoreRecord:
    segment_id: str
    system_id: str
    score: float
    annotator_id: str = ""


@dataclass(frozen=True)
class PairedStatsResult:
    contrast: tuple[str, str]
    mean_diff: float
    ci_low: float
    ci_high: float
    ci_level: float
    n_resamples: int
    rng_seed: int
    wilcoxon_statistic: float
    wilcoxon_p: float
    n_segments: int
    method_notes: str

    def to_json_obj(self) -> dict:
        return {
            "contrast": list(self.contrast),
            "mean_diff": self.mean_diff,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "ci_level": self.ci_level,
            "n_resamples": self.n_resamples,
            "rng_seed": self.rng_seed,
            "wilcoxon_statistic": self.wilcoxon_statistic,
            "wilcoxon_p": self.wilcoxon_p,
            "n_segments": self.n_segments,
            "method_notes": self.method_notes,
        }


@dataclass(frozen=True)
class McNemarInput:
    contrast: tuple[str, str]
    b: int          # first system correct, second incorrect
    c: int          # first system incorrect, second correct
    n_concordant: int

    def __post_init__(self):
        if self.b < 0 or self.c < 0 or self.n_concordant < 0:
            raise ValidationError("McNemar counts must be non-negative")


def load_scores(path: str | Path) -> tuple[ScoreRecord, ...]:
    """Score CSV with header ``segment_id,system_id,score,annotator_id``."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise LoadError(f"{path} is empty (header row required)")
            required = {"segment_id", "system_id", "score"}
            missing = required - set(reader.fieldnames)
            if missing:
                raise LoadError(f"{path}: header missing column(s) {sorted(missing)}")
            records: list[ScoreRecord] = []
            seen: set[tuple[str, str]] = set()
            for row_no, row in enumerate(reader, start=2):
                try:
                    score = float(row["score"])
                except (TypeError, ValueError):
                    raise LoadError(f"{path} line {row_no}: score is not a number")
                if not 0.0 <= score <= 100.0:
                    raise ValidationError(
                        f"{path} line {row_no}: score {score} outside [0, 100]")
                key = (row["segment_id"], row["system_id"])
                if key in seen:
                    raise ValidationError(
                        f"{path} line {row_no}: duplicate score for segment"
                        f" {key[0]!r}, system {key[1]!r}")
                seen.add(key)
                records.append(ScoreRecord(
                    segment_id=row["segment_id"],
                    system_id=row["system_id"],
                    score=score,
                    annotator_id=(row.get("annotator_id") or "").strip(),
                ))
    except FileNotFoundError:
        raise LoadError(f"score file not found: {path}")
    return tuple(records)


def _score_matrix(records: Sequence[ScoreRecord]) -> dict[str, dict[str, float]]:
    matrix: dict[str, dict[str, float]] = {}
    for r in records:
        matrix.setdefault(r.system_id, {})[r.segment_id] = r.score
    return matrix


def _require_complete(matrix: Mapping[str, Mapping[str, float]]) -> None:
    all_segments = set()
    for scores in matrix.values():
        all_segments |= scores.keys()
    gaps = [
        (system_id, segment_id)
        for system_id, scores in matrix.items()
        for segment_id in sorted(all_segments - scores.keys())
    ]
    if gaps:
        listing = ", ".join(f"({s}, {seg})" for s, seg in gaps[:5])
        raise ValidationError(
            f"score matrix incomplete: {len(gaps)} gap(s): {listing}")


def summarize_scores(records: Sequence[ScoreRecord]) -> dict[str, tuple[float, float, int]]:
    """system_id -> (mean, sample standard deviation, n). A single
    observation reports sd 0.0."""
    matrix = _score_matrix(records)
    if not matrix:
        return {}
    _require_complete(matrix)
    summary: dict[str, tuple[float, float, int]] = {}
    for system_id in sorted(matrix):
        values = np.array(list(matrix[system_id].values()), dtype=float)
        n = len(values)
        mean = float(values.mean())
        sd = float(values.std(ddof=1)) if n > 1 else 0.0
        summary[system_id] = (mean, sd, n)
    return summary


def paired_diffs(records: Sequence[ScoreRecord], system_a: str, system_b: str,
                 ) -> tuple[np.ndarray, list[str]]:
    """Per-segment score differences (a minus b) in sorted segment_id
    order, which fixes the bootstrap resampling order."""
    matrix = _score_matrix(records)
    for system_id in (system_a, system_b):
        if system_id not in matrix:
            raise ValidationError(f"no scores for system {system_id!r}")
    _require_complete({s: matrix[s] for s in (system_a, system_b)})
    segment_ids = sorted(matrix[system_a])
    diffs = np.array([matrix[system_a][s] - matrix[system_b][s] for s in segment_ids])
    return diffs, segment_ids


def bootstrap_ci(diffs: Sequence[float], n_resamples: int = DEFAULT_RESAMPLES,
                 level: float = DEFAULT_CI_LEVEL, seed: int = DEFAULT_SEED,
                 ) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean of ``diffs``."""
    diffs = np.asarray(diffs, dtype=float)
    n = len(diffs)
    if n == 0:
        raise DegenerateInputError("bootstrap over zero differences is undefined")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(n_resamples, n))
    means = diffs[idx].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    low, high = np.percentile(means, [100.0 * alpha, 100.0 * (1.0 - alpha)])
    return float(low), float(high)


def _midranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def _exact_signed_rank_p(n: int, w_plus: int) -> float:
    """Two-sided p from the exact null of W+ over ranks 1..n (subset-sum
    counting; every sign assignment equally likely under H0)."""
    max_sum = n * (n + 1) // 2
    counts = [0] * (max_sum + 1)
    counts[0] = 1
    for rank in range(1, n + 1):
        for total in range(max_sum, rank - 1, -1):
            counts[total] += counts[total - rank]
    denom = 1 << n
    p_le = Fraction(sum(counts[: w_plus + 1]), denom)
    p_ge = Fraction(sum(counts[w_plus:]), denom)
    return float(min(Fraction(1), 2 * min(p_le, p_ge)))


def wilcoxon_signed_rank(a_scores: Sequence[float], b_scores: Sequence[float],
                         degenerate_as_null: bool = False,
                         ) -> tuple[float, float, str]:
    """Paired two-sided Wilcoxon signed-rank test on a minus b.

    Returns (W+, p, method). All-zero differences leave the test
    undefined and raise unless ``degenerate_as_null`` asks for p=1.0.
    """
    if len(a_scores) != len(b_scores):
        raise ValidationError("paired score vectors differ in length")
    if not a_scores:
        raise ValidationError("paired score vectors are empty")
    diffs = [a - b for a, b in zip(a_scores, b_scores)]
    nonzero = [d for d in diffs if d != 0]
    n_zeros = len(diffs) - len(nonzero)
    n = len(nonzero)
    if n == 0:
        if degenerate_as_null:
            return 0.0, 1.0, "degenerate (all differences zero, reported as null)"
        raise DegenerateInputError(
            "all paired differences are zero; the signed-rank test is undefined"
            " (pass degenerate_as_null to report p=1.0)")

    abs_diffs = [abs(d) for d in nonzero]
    ranks = _midranks(abs_diffs)
    w_plus = sum(r for r, d in zip(ranks, nonzero) if d > 0)
    has_ties = len(set(abs_diffs)) != n

    if n <= WILCOXON_EXACT_MAX_N and not has_ties:
        p = _exact_signed_rank_p(n, int(round(w_plus)))
        method = f"exact (n={n}, {n_zeros} zero(s) dropped)"
        return float(w_plus), p, method

    mean = n * (n + 1) / 4.0
    tie_term = 0.0
    seen_sizes: dict[float, int] = {}
    for d in abs_diffs:
        seen_sizes[d] = seen_sizes.get(d, 0) + 1
    for size in seen_sizes.values():
        tie_term += size ** 3 - size
    variance = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term / 48.0
    sd = math.sqrt(variance)
    if w_plus > mean:
        z = (w_plus - mean - 0.5) / sd
    elif w_plus < mean:
        z = (w_plus - mean + 0.5) / sd
    else:
        z = 0.0
    p = min(1.0, 2.0 * (1.0 - _STD_NORMAL.cdf(abs(z))))
    method = (f"normal approximation with tie correction and continuity"
              f" correction (n={n}, {n_zeros} zero(s) dropped)")
    return float(w_plus), p, method


def mcnemar_exact(b: int, c: int) -> float:
    """Exact two-sided McNemar p over discordant counts: the doubled
    lower binomial tail, capped at 1; no discordant pairs gives 1.0."""
    if b < 0 or c < 0:
        raise ValidationError("discordant counts must be non-negative")
    n = b + c
    if n == 0:
        return 1.0
    tail = sum(math.comb(n, k) for k in range(min(b, c) + 1))
    return float(min(Fraction(1), 2 * Fraction(tail, 1 << n)))


def build_mcnemar_input(verdicts: Iterable[AuditVerdict],
                        contrast: tuple[str, str]) -> McNemarInput:
    """Tally discordant and concordant outcomes per occurrence for two
    systems; both must cover the same occurrence universe."""
    system_a, system_b = contrast
    outcomes: dict[str, dict[str, bool]] = {system_a: {}, system_b: {}}
    for v in verdicts:
        if v.system_id in outcomes:
            outcomes[v.system_id][v.occurrence_id] = v.correct
    universe_a = set(outcomes[system_a])
    universe_b = set(outcomes[system_b])
    if not universe_a or not universe_b:
        raise ValidationError(
            f"no verdicts for contrast {system_a!r} vs {system_b!r}")
    if universe_a != universe_b:
        diff = sorted(universe_a ^ universe_b)[:5]
        raise ValidationError(
            f"occurrence universes differ between {system_a!r} and {system_b!r}:"
            f" e.g. {', '.join(diff)}")
    b = c = concordant = 0
    for occ_id in universe_a:
        ok_a = outcomes[system_a][occ_id]
        ok_b = outcomes[system_b][occ_id]
        if ok_a and not ok_b:
            b += 1
        elif ok_b and not ok_a:
            c += 1
        else:
            concordant += 1
    return McNemarInput(contrast=contrast, b=b, c=c, n_concordant=concordant)


def compare_systems(records: Sequence[ScoreRecord], system_a: str, system_b: str,
                    n_resamples: int = DEFAULT_RESAMPLES, level: float = DEFAULT_CI_LEVEL,
                    seed: int = DEFAULT_SEED, degenerate_as_null: bool = False,
                    ) -> PairedStatsResult:
    """Full paired comparison of two systems' scores."""
    diffs, segment_ids = paired_diffs(records, system_a, system_b)
    ci_low, ci_high = bootstrap_ci(diffs, n_resamples=n_resamples, level=level, seed=seed)
    matrix = _score_matrix(records)
    a_values = [matrix[system_a][s] for s in segment_ids]
    b_values = [matrix[system_b][s] for s in segment_ids]
    statistic, p, method = wilcoxon_signed_rank(
        a_values, b_values, degenerate_as_null=degenerate_as_null)
    notes = (f"percentile bootstrap (numpy PCG64, seed={seed});"
             f" wilcoxon: {method}; zeros dropped, midranks for ties")
    return PairedStatsResult(
        contrast=(system_a, system_b),
        mean_diff=float(diffs.mean()),
        ci_low=ci_low,
        ci_high=ci_high,
        ci_level=level,
        n_resamples=n_resamples,
        rng_seed=seed,
        wilcoxon_statistic=statistic,
        wilcoxon_p=p,
        n_segments=len(diffs),
        method_notes=notes,
    )
