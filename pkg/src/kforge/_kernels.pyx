# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled implementations of the hot kernels.

Must stay semantically identical to ``_kernels_py.py``; the pure module is
the readable reference.
"""
from libc.stdlib cimport free, malloc

IMPLEMENTATION = "compiled"


def scan_json_span(unicode text, unicode open_char, Py_ssize_t start=0):
    """Find the first balanced JSON span of the given shape.

    Same contract as the pure-Python version: returns ``(start, end)``
    character offsets or ``None``.
    """
    cdef Py_UCS4 oc = open_char[0]
    cdef Py_UCS4 cc = u"]" if oc == u"[" else u"}"
    cdef Py_ssize_t n = len(text)
    cdef Py_ssize_t i, j
    cdef int depth
    cdef bint in_str, esc
    cdef Py_UCS4 c

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
                elif c == u"\\":
                    esc = True
                elif c == u'"':
                    in_str = False
            else:
                if c == u'"':
                    in_str = True
                elif c == oc:
                    depth += 1
                elif c == cc:
                    depth -= 1
                    if depth == 0:
                        return (i, j + 1)
            j += 1
        i = text.find(open_char, i + 1)
    return None


cdef Py_ssize_t _intersect_sorted(long* a, Py_ssize_t la, long* b, Py_ssize_t lb) noexcept nogil:
    cdef Py_ssize_t i = 0, j = 0, common = 0
    while i < la and j < lb:
        if a[i] == b[j]:
            common += 1
            i += 1
            j += 1
        elif a[i] < b[j]:
            i += 1
        else:
            j += 1
    return common


def bucket_pair_stats(list key_sets, list concept_sets):
    """Pairwise overlap statistics for every unordered pair in one bucket.

    See the pure-Python version for the contract. Inputs are flattened to C
    arrays once, then all pairs are scored with sorted-merge intersections.
    """
    cdef Py_ssize_t n = len(key_sets)
    cdef Py_ssize_t total_k = 0, total_c = 0
    cdef Py_ssize_t i, j, p
    cdef Py_ssize_t common, n_union, n_diff, n_shared
    cdef tuple t

    for i in range(n):
        total_k += len(key_sets[i])
        total_c += len(concept_sets[i])

    cdef long* kdata = <long*> malloc((total_k if total_k else 1) * sizeof(long))
    cdef long* cdata = <long*> malloc((total_c if total_c else 1) * sizeof(long))
    cdef Py_ssize_t* koff = <Py_ssize_t*> malloc((n + 1) * sizeof(Py_ssize_t))
    cdef Py_ssize_t* coff = <Py_ssize_t*> malloc((n + 1) * sizeof(Py_ssize_t))
    if kdata == NULL or cdata == NULL or koff == NULL or coff == NULL:
        free(kdata); free(cdata); free(koff); free(coff)
        raise MemoryError()

    out = []
    try:
        koff[0] = 0
        coff[0] = 0
        for i in range(n):
            t = tuple(key_sets[i])
            p = koff[i]
            for j in range(len(t)):
                kdata[p + j] = t[j]
            koff[i + 1] = p + len(t)
            t = tuple(concept_sets[i])
            p = coff[i]
            for j in range(len(t)):
                cdata[p + j] = t[j]
            coff[i + 1] = p + len(t)

        for i in range(n):
            for j in range(i + 1, n):
                common = _intersect_sorted(
                    kdata + koff[i], koff[i + 1] - koff[i],
                    kdata + koff[j], koff[j + 1] - koff[j])
                n_union = (koff[i + 1] - koff[i]) + (koff[j + 1] - koff[j]) - common
                n_diff = n_union - common
                n_shared = _intersect_sorted(
                    cdata + coff[i], coff[i + 1] - coff[i],
                    cdata + coff[j], coff[j + 1] - coff[j])
                out.append((i, j, n_diff, n_union, n_shared))
    finally:
        free(kdata)
        free(cdata)
        free(koff)
        free(coff)
    return out
