# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled multi-pattern scanner (Aho-Corasick over case-folded text).

Same contract and same automaton as ``_pure.TermScanner``; the scan
loop runs over C buffers (folded code points, origin indices, boundary
flags) instead of Python lists. Build cost is irrelevant here: a
scanner is built once per glossary and reused across segments.
"""

from collections import deque

from cpython.dict cimport PyDict_GetItem
from cpython.mem cimport PyMem_Free, PyMem_Malloc
from cpython.object cimport PyObject
from cpython.unicode cimport Py_UNICODE_ISALPHA

cdef dict _FOLD_CACHE = {}

# Full Unicode case folding maps one character to at most three.
DEF MAX_FOLD_EXPANSION = 3


cdef str _fold_char_slow(Py_UCS4 ch):
    cdef object key = <object>(<long>ch)
    cdef PyObject* hit = PyDict_GetItem(_FOLD_CACHE, key)
    if hit is not NULL:
        return <str>hit
    cdef str folded = chr(ch).casefold()
    _FOLD_CACHE[key] = folded
    return folded


cdef class TermScanner:
    """Scanner for a fixed pattern set, reusable across many texts."""

    cdef readonly tuple patterns
    cdef list _children   # per state: dict mapping code point -> next state
    cdef list _out        # per state: list of pattern indices ending here
    cdef list _fail
    cdef int* _pat_len
    cdef Py_ssize_t _n_patterns

    def __cinit__(self):
        self._pat_len = NULL

    def __init__(self, patterns):
        self.patterns = tuple(patterns)
        self._n_patterns = len(self.patterns)
        cdef Py_ssize_t idx
        cdef str pattern
        for idx in range(self._n_patterns):
            pattern = self.patterns[idx]
            if not pattern:
                raise ValueError(f"pattern {idx} is empty")
            if pattern != pattern.casefold():
                raise ValueError(f"pattern {idx} ({pattern!r}) is not case-folded")
        self._pat_len = <int*>PyMem_Malloc(max(self._n_patterns, 1) * sizeof(int))
        if self._pat_len is NULL:
            raise MemoryError()
        self._children = [{}]
        self._fail = [0]
        self._out = [[]]
        cdef dict trans
        cdef Py_UCS4 ch
        cdef int state, nxt
        for idx in range(self._n_patterns):
            pattern = self.patterns[idx]
            self._pat_len[idx] = len(pattern)
            state = 0
            for ch in pattern:
                trans = <dict>self._children[state]
                obj = trans.get(<long>ch)
                if obj is None:
                    nxt = len(self._children)
                    trans[<long>ch] = nxt
                    self._children.append({})
                    self._fail.append(0)
                    self._out.append([])
                else:
                    nxt = obj
                state = nxt
            (<list>self._out[state]).append(idx)
        self._build_links()

    def __dealloc__(self):
        if self._pat_len is not NULL:
            PyMem_Free(self._pat_len)

    def _build_links(self):
        queue = deque()
        for state in (<dict>self._children[0]).values():
            self._fail[state] = 0
            queue.append(state)
        cdef int state_i, nxt, fallback
        cdef dict trans
        while queue:
            state_i = queue.popleft()
            trans = <dict>self._children[state_i]
            for code, child in trans.items():
                nxt = child
                fallback = self._fail[state_i]
                while fallback and code not in (<dict>self._children[fallback]):
                    fallback = self._fail[fallback]
                self._fail[nxt] = (<dict>self._children[fallback]).get(code, 0)
                if self._fail[nxt] == nxt:
                    self._fail[nxt] = 0
                self._out[nxt] = self._out[nxt] + self._out[self._fail[nxt]]
                queue.append(nxt)

    def scan(self, str text):
        """All boundary-valid case-insensitive hits as
        (pattern_index, start, end) offsets into ``text``."""
        cdef Py_ssize_t text_len = len(text)
        cdef Py_ssize_t cap = MAX_FOLD_EXPANSION * text_len + 1
        cdef Py_UCS4* folded = <Py_UCS4*>PyMem_Malloc(cap * sizeof(Py_UCS4))
        cdef int* orig_idx = <int*>PyMem_Malloc(cap * sizeof(int))
        cdef char* is_first = <char*>PyMem_Malloc(cap * sizeof(char))
        if folded is NULL or orig_idx is NULL or is_first is NULL:
            PyMem_Free(folded); PyMem_Free(orig_idx); PyMem_Free(is_first)
            raise MemoryError()

        cdef Py_ssize_t i, j, exp_len, n_folded = 0
        cdef Py_UCS4 ch
        cdef long code
        cdef str expansion
        cdef list hits = []
        try:
            # Fold pass: one entry per folded code point, remembering the
            # original character it came from.
            for i in range(text_len):
                ch = text[i]
                code = <long>ch
                if code < 128:
                    if 65 <= code <= 90:
                        ch = <Py_UCS4>(code + 32)
                    folded[n_folded] = ch
                    orig_idx[n_folded] = <int>i
                    is_first[n_folded] = 1
                    n_folded += 1
                else:
                    expansion = _fold_char_slow(ch)
                    exp_len = len(expansion)
                    if n_folded + exp_len > cap:
                        raise RuntimeError("case-fold expansion exceeded buffer")
                    for j in range(exp_len):
                        folded[n_folded] = <Py_UCS4>expansion[j]
                        orig_idx[n_folded] = <int>i
                        is_first[n_folded] = 1 if j == 0 else 0
                        n_folded += 1

            self._scan_buffer(text, text_len, folded, orig_idx, is_first,
                              n_folded, hits)
        finally:
            PyMem_Free(folded)
            PyMem_Free(orig_idx)
            PyMem_Free(is_first)
        hits.sort(key=_hit_order)
        return hits

    cdef _scan_buffer(self, str text, Py_ssize_t text_len, Py_UCS4* folded,
                      int* orig_idx, char* is_first, Py_ssize_t n_folded,
                      list hits):
        cdef list children = self._children
        cdef list fail = self._fail
        cdef list out = self._out
        cdef int state = 0
        cdef Py_ssize_t pos, fs, fe
        cdef int start, end, pidx
        cdef object code_obj
        cdef PyObject* item
        cdef list out_here
        for pos in range(n_folded):
            code_obj = <object>(<long>folded[pos])
            while True:
                item = PyDict_GetItem(<dict>children[state], code_obj)
                if item is not NULL:
                    state = <object>item
                    break
                if state == 0:
                    break
                state = <object>fail[state]
            out_here = <list>out[state]
            if not out_here:
                continue
            for pidx_obj in out_here:
                pidx = pidx_obj
                fs = pos - self._pat_len[pidx] + 1
                fe = pos + 1
                if not is_first[fs]:
                    continue
                if fe < n_folded and not is_first[fe]:
                    continue
                start = orig_idx[fs]
                end = orig_idx[fe - 1] + 1
                if start > 0 and Py_UNICODE_ISALPHA(<Py_UCS4>text[start - 1]):
                    continue
                if end < text_len and Py_UNICODE_ISALPHA(<Py_UCS4>text[end]):
                    continue
                hits.append((pidx, start, end))


def _hit_order(hit):
    return (hit[1], hit[1] - hit[2], hit[0])
