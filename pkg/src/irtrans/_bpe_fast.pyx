# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled BPE hot kernels; semantics identical to _bpe_pure."""

from libc.stdlib cimport malloc, free

BACKEND = "fast"


def pack(long a, long b):
    return (a << 32) | b


def count_pairs(list words, list freqs):
    cdef dict counts = {}
    cdef list word
    cdef long freq, key
    cdef Py_ssize_t i, n, w
    for w in range(len(words)):
        word = words[w]
        freq = freqs[w]
        n = len(word)
        for i in range(n - 1):
            key = (<long> word[i] << 32) | <long> word[i + 1]
            counts[key] = counts.get(key, 0) + freq
    return counts


def merge_word(list word, long a, long b, long new_id):
    cdef list out = []
    cdef Py_ssize_t i = 0, n = len(word)
    while i < n:
        if i + 1 < n and <long> word[i] == a and <long> word[i + 1] == b:
            out.append(new_id)
            i += 2
        else:
            out.append(word[i])
            i += 1
    return out


def encode_chunk(list ids, dict ranks, dict rank_to_id):
    cdef Py_ssize_t n = len(ids)
    if n <= 1:
        return list(ids)
    cdef long *word = <long *> malloc(n * sizeof(long))
    cdef long *scratch = <long *> malloc(n * sizeof(long))
    if word == NULL or scratch == NULL:
        free(word)
        free(scratch)
        raise MemoryError()
    cdef Py_ssize_t i, m
    cdef long best_rank, r, new_id, key
    cdef object hit
    try:
        for i in range(n):
            word[i] = ids[i]
        while n > 1:
            best_rank = -1
            for i in range(n - 1):
                key = (word[i] << 32) | word[i + 1]
                hit = ranks.get(key)
                if hit is not None:
                    r = hit
                    if best_rank == -1 or r < best_rank:
                        best_rank = r
            if best_rank == -1:
                break
            new_id = rank_to_id[best_rank]
            m = 0
            i = 0
            while i < n:
                if i + 1 < n:
                    key = (word[i] << 32) | word[i + 1]
                    hit = ranks.get(key)
                    if hit is not None and <long> hit == best_rank:
                        scratch[m] = new_id
                        m += 1
                        i += 2
                        continue
                scratch[m] = word[i]
                m += 1
                i += 1
            for i in range(m):
                word[i] = scratch[i]
            n = m
        return [word[i] for i in range(n)]
    finally:
        free(word)
        free(scratch)
