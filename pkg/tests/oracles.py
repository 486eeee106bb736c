"""Slow reference implementations, kept deliberately independent of the
package internals: the matcher oracle compares whole-slice casefolds at
every offset instead of walking an automaton, the McNemar oracle sums
the binomial pmf term by term in exact rationals, and the signed-rank
oracle enumerates every sign assignment."""

from fractions import Fraction
import math


def naive_matches(patterns: list[str], text: str) -> list[tuple[int, int, int]]:
    """Every (pattern_index, start, end) where text[start:end] casefolds
    to the pattern and both edges sit on non-letter boundaries."""
    hits = []
    for pi, pattern in enumerate(patterns):
        for start in range(len(text)):
            for end in range(start + 1, len(text) + 1):
                folded = text[start:end].casefold()
                if len(folded) > len(pattern):
                    break
                if folded == pattern:
                    before_ok = start == 0 or not text[start - 1].isalpha()
                    after_ok = end == len(text) or not text[end].isalpha()
                    if before_ok and after_ok:
                        hits.append((pi, start, end))
                    break
    hits.sort(key=lambda h: (h[1], h[1] - h[2], h[0]))
    return hits


def mcnemar_oracle(b: int, c: int) -> float:
    n = b + c
    if n == 0:
        return 1.0
    tail = Fraction(0)
    for k in range(min(b, c) + 1):
        tail += Fraction(math.comb(n, k), 2 ** n)
    return float(min(Fraction(1), 2 * tail))


def _rank_with_ties(values: list[float]) -> list[float]:
    ranks = [0.0] * len(values)
    pairs = sorted((v, i) for i, v in enumerate(values))
    pos = 0
    while pos < len(pairs):
        tie_end = pos
        while tie_end + 1 < len(pairs) and pairs[tie_end + 1][0] == pairs[pos][0]:
            tie_end += 1
        shared = (pos + tie_end) / 2 + 1
        for j in range(pos, tie_end + 1):
            ranks[pairs[j][1]] = shared
        pos = tie_end + 1
    return ranks


def wilcoxon_enumeration(diffs: list[float]) -> tuple[float, float]:
    """(W+, two-sided p) over all 2^n sign assignments of the observed
    absolute differences; zero differences are dropped first."""
    nonzero = [d for d in diffs if d != 0]
    n = len(nonzero)
    if n == 0:
        raise ValueError("no nonzero differences")
    ranks = _rank_with_ties([abs(d) for d in nonzero])
    w_obs = sum(r for r, d in zip(ranks, nonzero) if d > 0)
    count_le = count_ge = 0
    eps = 1e-9
    for mask in range(1 << n):
        w = sum(ranks[i] for i in range(n) if mask >> i & 1)
        if w <= w_obs + eps:
            count_le += 1
        if w >= w_obs - eps:
            count_ge += 1
    p = min(1.0, 2.0 * min(count_le, count_ge) / (1 << n))
    return w_obs, p
