"""Throughput comparison of the term-matching backends.

Builds one synthetic glossary and corpus, then times every available
scanner implementation over identical inputs. Run from a checkout:

    python3 benchmarks/bench_matching.py
    TERMWEAVE_PURE=1 python3 -m termweave.cli --version   # backend check
"""

import argparse
import random
import time

from termweave.matching import available_backends

SYLLABLES = ["ca", "mi", "ro", "pe", "tu", "la", "son", "der", "qui", "ña",
             "bre", "vo", "es", "tra", "ción", "dor", "mente", "al", "gu"]
FILLER = ["de", "la", "el", "en", "y", "con", "una", "se", "por", "los",
          "7", "(", ")", ",", "."]


def make_word(rng, n_syllables):
    return "".join(rng.choice(SYLLABLES) for _ in range(n_syllables))


def make_inputs(rng, n_patterns, n_texts, text_words):
    patterns = set()
    while len(patterns) < n_patterns:
        words = [make_word(rng, rng.randint(1, 3))
                 for _ in range(rng.randint(1, 2))]
        patterns.add(" ".join(words))
    patterns = sorted(patterns)
    # Half the corpus vocabulary comes from the patterns themselves so
    # scans produce real hits, with random upper-casing mixed in.
    vocab = [w for p in patterns for w in p.split()] + FILLER
    texts = []
    for _ in range(n_texts):
        words = []
        for _ in range(text_words):
            w = rng.choice(vocab)
            if rng.random() < 0.1:
                w = w.upper()
            words.append(w)
        texts.append(" ".join(words))
    return patterns, texts


def bench(scanner_cls, patterns, texts, repeat):
    scanner = scanner_cls(patterns)
    best = float("inf")
    matches = 0
    for _ in range(repeat):
        start = time.perf_counter()
        matches = sum(len(scanner.scan(t)) for t in texts)
        best = min(best, time.perf_counter() - start)
    return best, matches


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--patterns", type=int, default=400)
    parser.add_argument("--texts", type=int, default=300)
    parser.add_argument("--words-per-text", type=int, default=80)
    parser.add_argument("--repeat", type=int, default=5,
                        help="timing repetitions; best run is reported")
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args()

    rng = random.Random(args.seed)
    patterns, texts = make_inputs(rng, args.patterns, args.texts,
                                  args.words_per_text)
    total_chars = sum(len(t) for t in texts)
    backends = available_backends()

    reference = None
    results = {}
    for name, cls in sorted(backends.items()):
        scanner = cls(patterns)
        output = [scanner.scan(t) for t in texts]
        if reference is None:
            reference = output
        elif output != reference:
            raise SystemExit(f"backend {name!r} disagrees with the others")
        results[name] = bench(cls, patterns, texts, args.repeat)

    print(f"{args.patterns} patterns, {args.texts} texts,"
          f" {total_chars} chars, best of {args.repeat}")
    for name, (elapsed, matches) in results.items():
        rate = total_chars / elapsed / 1e6
        print(f"  {name:>8}: {elapsed * 1e3:8.2f} ms"
              f"  ({rate:7.2f} MChars/s, {matches} matches)")
    if {"pure", "compiled"} <= results.keys():
        speedup = results["pure"][0] / results["compiled"][0]
        print(f"  compiled is {speedup:.1f}x the pure-Python throughput")


if __name__ == "__main__":
    main()
