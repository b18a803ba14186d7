"""Pure-Python implementations of the hot kernels.

Semantics must match ``_kernels.pyx`` exactly; the test suite asserts
equivalence when the compiled module is available.
"""
from __future__ import annotations

IMPLEMENTATION = "python"


def scan_json_span(text: str, open_char: str, start: int = 0):
    """Find the first balanced JSON span of the given shape.

    Scans for ``open_char`` ('[' or '{') at or after ``start`` and walks
    forward tracking string/escape state until the bracket depth returns to
    zero. Returns ``(span_start, span_end)`` character offsets (end
    exclusive) or ``None`` when no balanced span exists. Candidates whose
    brackets never balance are skipped.
    """
    close_char = "]" if open_char == "[" else "}"
    n = len(text)
    i = text.find(open_char, start)
    while i != -1:
        depth = 0
        in_str = False
        esc = False
        j = i
        while j < n:
            c = text[j]
            if in_str:
                if esc:
                    esc = False
                elif c == "\\":
                    esc = True
                elif c == '"':
                    in_str = False
            else:
                if c == '"':
                    in_str = True
                elif c == open_char:
                    depth += 1
                elif c == close_char:
                    depth -= 1
                    if depth == 0:
                        return (i, j + 1)
            j += 1
        i = text.find(open_char, i + 1)
    return None


def bucket_pair_stats(key_sets, concept_sets):
    """Pairwise overlap statistics for every unordered pair in one bucket.

    ``key_sets`` and ``concept_sets`` are parallel lists; each entry is a
    strictly increasing tuple of integer token ids for one member. Returns
    a list of
    ``(i, j, n_diff, n_union, n_shared_concepts)`` with ``i < j``, where
    ``n_diff``/``n_union`` describe the symmetric difference and union of
    the two key sets and ``n_shared_concepts`` the intersection of the two
    concept sets.
    """
    n = len(key_sets)
    keys = [frozenset(k) for k in key_sets]
    concepts = [frozenset(c) for c in concept_sets]
    out = []
    for i in range(n):
        ki = keys[i]
        ci = concepts[i]
        for j in range(i + 1, n):
            kj = keys[j]
            common = len(ki & kj)
            n_union = len(ki) + len(kj) - common
            n_diff = n_union - common
            n_shared = len(ci & concepts[j])
            out.append((i, j, n_diff, n_union, n_shared))
    return out
