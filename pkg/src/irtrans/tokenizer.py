"""Shared byte-level BPE vocabulary over code and IR text.

One vocabulary serves every language and IR dialect so all sequences
live in one embedding space. Reserved ids: PAD=0 BOS=1 EOS=2 MASK=3
SEP=4. The merge kernels come from the compiled extension when it is
importable, otherwise from the pure-python fallback; set
IRTRANS_NO_EXT=1 to force the fallback.
"""

from __future__ import annotations

import hashlib
import os
import re
from dataclasses import dataclass, field

from .errors import EmptyCorpus, UnknownByte

if os.environ.get("IRTRANS_NO_EXT"):
    from . import _bpe_pure as _bpe
else:
    try:
        from . import _bpe_fast as _bpe  # type: ignore[attr-defined]
    except ImportError:
        from . import _bpe_pure as _bpe

PAD, BOS, EOS, MASK, SEP = 0, 1, 2, 3, 4
RESERVED = 5
RESERVED_NAMES = ("<pad>", "<bos>", "<eos>", "<mask>", "<sep>")

_CHUNK_RE = re.compile(r'[A-Za-z_]+|[0-9]+|[ \t]+|\r?\n|\s|.')


def backend_name() -> str:
    return _bpe.BACKEND


def _chunks(text: str) -> list[bytes]:
    return [c.encode("utf-8") for c in _CHUNK_RE.findall(text)]


@dataclass
class Vocab:
    token_bytes: list[bytes | None]  # index = token id; None for reserved ids
    merges: list[tuple[int, int]]  # (left id, right id) in rank order
    byte_fallback: bool = True
    _byte_to_id: dict[int, int] = field(default_factory=dict, repr=False)
    _ranks: dict[int, int] = field(default_factory=dict, repr=False)
    _rank_to_id: dict[int, int] = field(default_factory=dict, repr=False)
    _chunk_cache: dict[bytes, list[int]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        first_merged = len(self.token_bytes) - len(self.merges)
        for tid in range(RESERVED, first_merged):
            b = self.token_bytes[tid]
            assert b is not None and len(b) == 1
            self._byte_to_id[b[0]] = tid
        for rank, (a, b) in enumerate(self.merges):
            self._ranks[_bpe.pack(a, b)] = rank
            self._rank_to_id[rank] = first_merged + rank

    @property
    def size(self) -> int:
        return len(self.token_bytes)

    def token_text(self, tid: int) -> str:
        b = self.token_bytes[tid]
        if b is None:
            return RESERVED_NAMES[tid]
        return b.decode("utf-8", errors="replace")

    def encode_ids(self, text: str) -> list[int]:
        """Raw BPE ids for text, without BOS/EOS framing."""
        out: list[int] = []
        for chunk in _chunks(text):
            cached = self._chunk_cache.get(chunk)
            if cached is None:
                try:
                    ids = [self._byte_to_id[b] for b in chunk]
                except KeyError as e:
                    raise UnknownByte(
                        f"byte {e.args[0]!r} not in vocabulary "
                        "(byte fallback disabled)") from None
                cached = _bpe.encode_chunk(ids, self._ranks, self._rank_to_id)
                if len(self._chunk_cache) < 1_000_000:
                    self._chunk_cache[chunk] = cached
            out.extend(cached)
        return out

    def decode_ids(self, ids) -> str:
        parts = [self.token_bytes[int(t)] for t in ids]
        return b"".join(p for p in parts if p is not None).decode(
            "utf-8", errors="replace")

    def content_hash(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()[:16]

    def dumps(self) -> str:
        lines = [f"irtrans-bpe v1 fallback={int(self.byte_fallback)}"]
        first_merged = len(self.token_bytes) - len(self.merges)
        for tid in range(RESERVED, first_merged):
            lines.append("byte " + self.token_bytes[tid].hex())
        for a, b in self.merges:
            lines.append(f"merge {a} {b}")
        return "\n".join(lines) + "\n"

    def save(self, path: str) -> None:
        with open(path, "w") as f:
            f.write(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "Vocab":
        lines = [l for l in text.splitlines() if l.strip()]
        head = lines[0].split()
        if head[0] != "irtrans-bpe":
            raise ValueError("not a vocab file")
        fallback = lines[0].endswith("fallback=1")
        token_bytes: list[bytes | None] = [None] * RESERVED
        merges: list[tuple[int, int]] = []
        for line in lines[1:]:
            kind, rest = line.split(" ", 1)
            if kind == "byte":
                token_bytes.append(bytes.fromhex(rest))
            elif kind == "merge":
                a, b = (int(x) for x in rest.split())
                merges.append((a, b))
                token_bytes.append(token_bytes[a] + token_bytes[b])
        return cls(token_bytes=token_bytes, merges=merges, byte_fallback=fallback)

    @classmethod
    def load(cls, path: str) -> "Vocab":
        with open(path) as f:
            return cls.loads(f.read())


@dataclass
class TokenSequence:
    ids: list[int]
    language: str

    def __len__(self) -> int:
        return len(self.ids)


def train_vocab(texts, target_size: int, byte_fallback: bool = True) -> Vocab:
    """Learn a byte-pair-merge vocabulary over the given texts.

    Deterministic for a fixed input set: ties between equally frequent
    pairs break on the lexicographically smallest (left, right) token
    bytes. target_size counts reserved + byte + merged tokens.
    """
    from collections import Counter

    chunk_counts: Counter[bytes] = Counter()
    for text in texts:
        chunk_counts.update(_chunks(text))
    if not chunk_counts:
        raise EmptyCorpus("no text to train on")

    if byte_fallback:
        alphabet = [bytes([b]) for b in range(256)]
    else:
        alphabet = sorted({bytes([b]) for chunk in chunk_counts for b in chunk})
    if target_size <= RESERVED + len(alphabet):
        raise ValueError(
            f"target_size must exceed reserved+byte tokens ({RESERVED + len(alphabet)})")

    token_bytes: list[bytes | None] = [None] * RESERVED + alphabet
    byte_to_id = {b[0]: RESERVED + i for i, b in enumerate(alphabet)}

    items = sorted(chunk_counts.items())
    words = [[byte_to_id[b] for b in chunk] for chunk, _ in items]
    freqs = [freq for _, freq in items]

    pair_counts = _bpe.count_pairs(words, freqs)
    pair_where: dict[int, set[int]] = {}
    for w, word in enumerate(words):
        for i in range(len(word) - 1):
            pair_where.setdefault(_bpe.pack(word[i], word[i + 1]), set()).add(w)

    merges: list[tuple[int, int]] = []
    while len(token_bytes) < target_size and pair_counts:
        best_key = None
        best = (-1, b"", b"")
        for key, count in pair_counts.items():
            if count < 2:
                continue
            a, b = key >> 32, key & 0xFFFFFFFF
            cand = (count, token_bytes[a], token_bytes[b])
            if best_key is None or count > best[0] or (
                    count == best[0] and (cand[1], cand[2]) < (best[1], best[2])):
                best, best_key = cand, key
        if best_key is None:
            break
        a, b = best_key >> 32, best_key & 0xFFFFFFFF
        new_id = len(token_bytes)
        token_bytes.append(token_bytes[a] + token_bytes[b])
        merges.append((a, b))

        for w in sorted(pair_where.get(best_key, ())):
            old = words[w]
            freq = freqs[w]
            for i in range(len(old) - 1):
                key = _bpe.pack(old[i], old[i + 1])
                pair_counts[key] -= freq
                if pair_counts[key] <= 0:
                    pair_counts.pop(key, None)
            new = _bpe.merge_word(old, a, b, new_id)
            words[w] = new
            for i in range(len(new) - 1):
                key = _bpe.pack(new[i], new[i + 1])
                pair_counts[key] = pair_counts.get(key, 0) + freq
                pair_where.setdefault(key, set()).add(w)
        pair_where.pop(best_key, None)
        pair_counts.pop(best_key, None)

    return Vocab(token_bytes=token_bytes, merges=merges, byte_fallback=byte_fallback)


def encode(text: str, language: str, v: Vocab) -> TokenSequence:
    """BOS-framed token sequence for text; inverse of decode."""
    return TokenSequence(ids=[BOS] + v.encode_ids(text) + [EOS], language=language)


def decode(seq: TokenSequence, v: Vocab) -> str:
    return v.decode_ids(seq.ids)
