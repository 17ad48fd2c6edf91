"""Pure-python BPE hot kernels; same interface as the compiled _bpe_fast.

Pair keys are packed into a single int (left << 32 | right) so both
backends share dict layouts.
"""

from __future__ import annotations

BACKEND = "pure"


def pack(a: int, b: int) -> int:
    return (a << 32) | b


def count_pairs(words: list[list[int]], freqs: list[int]) -> dict[int, int]:
    counts: dict[int, int] = {}
    for word, freq in zip(words, freqs):
        for i in range(len(word) - 1):
            key = (word[i] << 32) | word[i + 1]
            counts[key] = counts.get(key, 0) + freq
    return counts


def merge_word(word: list[int], a: int, b: int, new_id: int) -> list[int]:
    out: list[int] = []
    i = 0
    n = len(word)
    while i < n:
        if i + 1 < n and word[i] == a and word[i + 1] == b:
            out.append(new_id)
            i += 2
        else:
            out.append(word[i])
            i += 1
    return out


def encode_chunk(ids: list[int], ranks: dict[int, int], rank_to_id: dict[int, int]
                 ) -> list[int]:
    """Apply merges lowest-rank-first until no adjacent pair is mergeable.

    ranks maps a packed pair to its merge rank; rank_to_id maps a rank to
    the merged token id.
    """
    word = list(ids)
    while len(word) > 1:
        best_rank = -1
        for i in range(len(word) - 1):
            r = ranks.get((word[i] << 32) | word[i + 1], -1)
            if r != -1 and (best_rank == -1 or r < best_rank):
                best_rank = r
        if best_rank == -1:
            break
        new_id = rank_to_id[best_rank]
        out: list[int] = []
        i = 0
        n = len(word)
        while i < n:
            if (i + 1 < n
                    and ranks.get((word[i] << 32) | word[i + 1], -1) == best_rank):
                out.append(new_id)
                i += 2
            else:
                out.append(word[i])
                i += 1
        word = out
    return word
