"""Greedy and beam decoding over a trained model.

Both decoders emit BOS...EOS sequences; when max_len is reached before
the model emits EOS one is appended so downstream consumers always see
a well-formed sequence. Beam search scores hypotheses by
length-normalized log-probability and returns the top one; beam size 1
reproduces greedy decoding token for token.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import model as M
from .tokenizer import BOS, EOS, TokenSequence


def _log_softmax(row: np.ndarray) -> np.ndarray:
    z = row - row.max()
    return z - np.log(np.exp(z).sum())


def greedy_decode_batch(state: M.ModelState, srcs: list, target_tag: str,
                        max_len: int) -> list[list[int]]:
    """Argmax decoding for a batch of sources into one target language."""
    src_rows = [list(s.ids) for s in srcs]
    src_tags = [M.tag_row(s, len(s.ids)) for s in srcs]
    with ad.no_grad():
        ids, lang, mask = M.pad_batch(src_rows, src_tags, state)
        memory = M.encode_batch(state, ids, lang, mask)
        dkey, layers = state.decoder_key(target_tag)
        b = len(srcs)
        tag_idx = state.tag_index[target_tag]
        prefix = np.full((b, 1), BOS, dtype=np.int64)
        finished = np.zeros(b, dtype=bool)
        outs: list[list[int]] = [[BOS] for _ in range(b)]
        for _ in range(max_len):
            t = prefix.shape[1]
            dlang = np.full((b, t), tag_idx, dtype=np.int64)
            dmask = np.ones((b, t), dtype=bool)
            h = M.decode_batch(state, memory, mask, prefix, dlang, dmask,
                               dkey, layers)
            last = h.data[:, -1, :]
            logits = M.output_logits(state, ad.Tensor(last)).data
            nxt = logits.argmax(axis=-1)
            for i in range(b):
                if not finished[i]:
                    outs[i].append(int(nxt[i]))
                    if nxt[i] == EOS:
                        finished[i] = True
            if finished.all():
                break
            prefix = np.concatenate([prefix, nxt[:, None]], axis=1)
        for row in outs:
            if row[-1] != EOS:
                row.append(EOS)
        return outs


def greedy_decode(src, target_tag: str, state: M.ModelState,
                  max_len: int | None = None) -> TokenSequence:
    if max_len is None:
        max_len = state.config.max_len
    out = greedy_decode_batch(state, [src], target_tag, max_len)[0]
    return TokenSequence(ids=out, language=target_tag)


def beam_decode(src, target_tag: str, state: M.ModelState, beam_size: int,
                max_len: int | None = None) -> TokenSequence:
    """Length-normalized beam search returning the top hypothesis."""
    return beam_decode_all(src, target_tag, state, beam_size, max_len)[0]


def beam_decode_all(src, target_tag: str, state: M.ModelState, beam_size: int,
                    max_len: int | None = None) -> list[TokenSequence]:
    """All finished beam hypotheses, best (normalized log-prob) first."""
    assert beam_size >= 1
    if beam_size == 1:
        return [greedy_decode(src, target_tag, state, max_len)]
    if max_len is None:
        max_len = state.config.max_len

    with ad.no_grad():
        ids, lang, mask = M.pad_batch([list(src.ids)],
                                      [M.tag_row(src, len(src.ids))], state)
        memory = M.encode_batch(state, ids, lang, mask)
        dkey, layers = state.decoder_key(target_tag)
        tag_idx = state.tag_index[target_tag]

        beams: list[tuple[list[int], float]] = [([BOS], 0.0)]
        done: list[tuple[float, tuple[int, ...]]] = []
        for _step in range(max_len):
            b = len(beams)
            t = max(len(ids_) for ids_, _ in beams)
            prefix = np.array([ids_ for ids_, _ in beams], dtype=np.int64)
            mem = ad.Tensor(np.repeat(memory.data, b, axis=0))
            smask = np.repeat(mask, b, axis=0)
            dlang = np.full((b, t), tag_idx, dtype=np.int64)
            dmask = np.ones((b, t), dtype=bool)
            h = M.decode_batch(state, mem, smask, prefix, dlang, dmask,
                               dkey, layers)
            logits = M.output_logits(state, ad.Tensor(h.data[:, -1, :])).data

            candidates: list[tuple[float, int, int]] = []  # (-logp, beam, tok)
            for i, (_ids, lp) in enumerate(beams):
                logp = _log_softmax(logits[i].astype(np.float64))
                order = np.argsort(-logp, kind="stable")[:beam_size]
                for tok in order:
                    candidates.append((-(lp + float(logp[tok])), i, int(tok)))
            candidates.sort()

            next_beams: list[tuple[list[int], float]] = []
            for neg_lp, i, tok in candidates:
                seq = beams[i][0] + [tok]
                n_generated = len(seq) - 1
                if tok == EOS:
                    done.append((-neg_lp / n_generated, tuple(seq)))
                elif len(next_beams) < beam_size:
                    next_beams.append((seq, -neg_lp))
            beams = next_beams
            if not beams:
                break
        for seq, lp in beams:  # ran out of length without EOS
            n_generated = len(seq) - 1
            done.append((lp / max(n_generated, 1), tuple(seq + [EOS])))

        done.sort(key=lambda d: (-d[0], d[1]))
        return [TokenSequence(ids=list(ids), language=target_tag)
                for _score, ids in done]
