#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Covers the two hot loops: the balanced-JSON scanner that runs over every
model completion, and the within-bucket pair scoring that is quadratic in
bucket size. Usage: python benchmarks/bench_kernels.py [--quick]
"""
from __future__ import annotations

import json
import random
import sys
import time

from kforge import _kernels_py

try:
    from kforge import _kernels as _compiled
except ImportError:
    _compiled = None


def _scan_corpus(n_docs: int, rng: random.Random) -> list[str]:
    docs = []
    words = ["result", "analysis", "output", "see", "below", "note", "that"]
    for i in range(n_docs):
        payload = {"items": [{"q": f"question {j}", "a": f"answer {j} with detail"}
                             for j in range(rng.randint(4, 12))],
                   "tags": ["x"] * rng.randint(0, 5)}
        prefix = " ".join(rng.choices(words, k=rng.randint(5, 40)))
        suffix = " ".join(rng.choices(words + ["{oops", "]]"], k=rng.randint(5, 40)))
        docs.append(f"{prefix}\n```json\n{json.dumps(payload)}\n```\n{suffix}")
    return docs


def _buckets(n_buckets: int, bucket_size: int, rng: random.Random):
    out = []
    for _ in range(n_buckets):
        keys = [tuple(sorted(rng.sample(range(400), rng.randint(2, 6))))
                for _ in range(bucket_size)]
        concepts = [tuple(sorted(rng.sample(range(64), rng.randint(1, 4))))
                    for _ in range(bucket_size)]
        out.append((keys, concepts))
    return out


def _time(fn, repeats: int = 3) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main() -> int:
    quick = "--quick" in sys.argv
    rng = random.Random(1234)
    docs = _scan_corpus(500 if quick else 4000, rng)
    buckets = _buckets(4 if quick else 12, 80 if quick else 220, rng)

    def scan_with(mod):
        def run():
            for doc in docs:
                mod.scan_json_span(doc, "{")
        return run

    def pairs_with(mod):
        def run():
            for keys, concepts in buckets:
                mod.bucket_pair_stats(keys, concepts)
        return run

    rows = []
    for label, builder, check in (
        ("json scan", scan_with, lambda m: [m.scan_json_span(d, "{") for d in docs[:50]]),
        ("pair stats", pairs_with, lambda m: m.bucket_pair_stats(*buckets[0])),
    ):
        pure_s = _time(builder(_kernels_py))
        if _compiled is not None:
            assert check(_compiled) == check(_kernels_py), f"{label}: results diverge"
            comp_s = _time(builder(_compiled))
            rows.append((label, pure_s, comp_s, pure_s / comp_s))
        else:
            rows.append((label, pure_s, None, None))

    print(f"{'kernel':<12} {'pure (s)':>10} {'compiled (s)':>14} {'speedup':>9}")
    for label, pure_s, comp_s, speedup in rows:
        if comp_s is None:
            print(f"{label:<12} {pure_s:>10.4f} {'n/a':>14} {'n/a':>9}")
        else:
            print(f"{label:<12} {pure_s:>10.4f} {comp_s:>14.4f} {speedup:>8.1f}x")
    if _compiled is None:
        print("\ncompiled extension not built; showing pure-Python timings only")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
