"""Corruption functions, code-IR concatenation, and the training objectives.

Seven objectives are dispatched by name:

  MLM    masked-token prediction on the encoder
  AE     denoising reconstruction of a corrupted sequence
  BT     back-translation: reconstruct the input from the model's own
         greedy translation (gradients blocked through generation)
  TLM    masked prediction over a code (+) IR concatenation
  TAE    denoising reconstruction of a corrupted code (+) IR pair
  IRGen  supervised translation code -> its normalized IR
  Decomp supervised translation IR -> code

TLM/TAE/IRGen/Decomp need records carrying normalized IR; MLM/AE/BT run
on monolingual records.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model as M
from .decoding import greedy_decode_batch
from .errors import MissingIR, SequenceTooLong
from .frontends import FunctionRecord, dialect_of, is_dialect
from .tokenizer import BOS, EOS, MASK, RESERVED, SEP, TokenSequence, Vocab, encode

OBJECTIVES = ("MLM", "AE", "BT", "TLM", "TAE", "IRGen", "Decomp")
IR_OBJECTIVES = ("TLM", "TAE", "IRGen", "Decomp")
# pivot-mode extras: round trips through foreign IR dialects / languages
PIVOT_OBJECTIVES = ("BTCodeIR", "BTIRCode")


@dataclass
class NoiseConfig:
    mlm_mask_rate: float = 0.15
    ae_mask_rate: float = 0.20
    span_lambda: float = 3.0  # Poisson mean of masked-span lengths
    token_drop_rate: float = 0.1
    shuffle_window: int = 3
    seed: int = 0
    replace_scheme: str = "mask"  # "mask" or "bert" (80/10/10)

    def __post_init__(self):
        for r in (self.mlm_mask_rate, self.ae_mask_rate, self.token_drop_rate):
            assert 0.0 <= r <= 1.0
        assert self.span_lambda > 0 and self.shuffle_window >= 0
        assert self.replace_scheme in ("mask", "bert")


@dataclass
class ConcatPair:
    """x (+) SEP (+) z with per-position language tags."""
    ids: list[int]
    boundary: int  # index of the SEP token; equals len(x core) + 1
    tag_names: list[str]
    language: str

    def __len__(self) -> int:
        return len(self.ids)


def _maskable(ids: list[int]) -> list[int]:
    return [i for i, t in enumerate(ids) if t >= RESERVED]


def mask_tokens(seq, rate: float, rng: np.random.Generator,
                scheme: str = "mask", vocab_size: int | None = None):
    """Independently mask each non-special position with probability rate."""
    ids = list(seq.ids)
    positions = []
    for i in _maskable(ids):
        if rng.random() < rate:
            positions.append(i)
            if scheme == "bert":
                roll = rng.random()
                if roll < 0.8:
                    ids[i] = MASK
                elif roll < 0.9:
                    ids[i] = int(rng.integers(RESERVED, vocab_size))
            else:
                ids[i] = MASK
    return _with_ids(seq, ids), positions


def _with_ids(seq, ids: list[int]):
    if isinstance(seq, ConcatPair):
        return ConcatPair(ids=ids, boundary=seq.boundary,
                          tag_names=list(seq.tag_names), language=seq.language)
    return TokenSequence(ids=ids, language=seq.language)


def corrupt_sequence(seq: TokenSequence, cfg: NoiseConfig,
                     rng: np.random.Generator) -> TokenSequence:
    """Span-mask, drop and locally shuffle a sequence (in that order)."""
    ids = list(seq.ids)

    # Poisson span masking until ae_mask_rate of maskable tokens is covered;
    # the last span is truncated so the target is hit exactly.
    maskable = _maskable(ids)
    target = int(round(cfg.ae_mask_rate * len(maskable)))
    covered: set[int] = set()
    while len(covered) < target:
        span = max(1, int(rng.poisson(cfg.span_lambda)))
        start = int(rng.integers(0, len(maskable)))
        for k in range(start, min(start + span, len(maskable))):
            if len(covered) >= target:
                break
            covered.add(maskable[k])
    for i in covered:
        ids[i] = MASK

    # independent token dropping (special tokens always survive)
    if cfg.token_drop_rate > 0:
        ids = [t for t in ids
               if t < RESERVED or rng.random() >= cfg.token_drop_rate]

    # bounded local shuffle: each token moves at most shuffle_window slots
    if cfg.shuffle_window > 0 and len(ids) > 3:
        interior = ids[1:-1]
        keys = np.arange(len(interior)) + rng.uniform(0, cfg.shuffle_window,
                                                      size=len(interior))
        order = np.argsort(keys, kind="stable")
        ids = [ids[0]] + [interior[j] for j in order] + [ids[-1]]

    return TokenSequence(ids=ids, language=seq.language)


def concat_with_ir(x: TokenSequence, z: TokenSequence,
                   max_len: int | None = None) -> ConcatPair:
    """[BOS] x (+) SEP (+) z [EOS], source tag up to SEP, dialect tag after."""
    x_core = x.ids[1:-1] if x.ids[:1] == [BOS] else list(x.ids)
    z_core = z.ids[1:-1] if z.ids[:1] == [BOS] else list(z.ids)
    ids = [BOS] + x_core + [SEP] + z_core + [EOS]
    if max_len is not None and len(ids) > max_len:
        raise SequenceTooLong(f"pair length {len(ids)} > max {max_len}")
    boundary = 1 + len(x_core)
    tags = [x.language] * (boundary + 1) + [z.language] * (len(ids) - boundary - 1)
    return ConcatPair(ids=ids, boundary=boundary, tag_names=tags,
                      language=x.language)


# ---------------------------------------------------------------------------
# objective dispatch

def encode_record(rec: FunctionRecord, vocab: Vocab) -> TokenSequence:
    return encode(rec.source, rec.language, vocab)


def encode_record_ir(rec: FunctionRecord, vocab: Vocab) -> TokenSequence:
    if rec.normalized_ir is None:
        raise MissingIR(f"record {rec.id} has no normalized IR")
    return encode(rec.normalized_ir, dialect_of(rec.language), vocab)


def _source_tags(state: M.ModelState) -> list[str]:
    return [t for t in state.config.tags if not is_dialect(t)]


def _bt_round_trip(state, seqs, gen_tag: str, max_len: int,
                   bt_max_len: int | None):
    """Generate into gen_tag without gradients; reconstruct the originals."""
    gen_len = bt_max_len or max_len
    hyp_ids = greedy_decode_batch(state, seqs, gen_tag, gen_len - 1)
    hyps = []
    for h in hyp_ids:
        ids = h[:max_len - 1] if len(h) >= max_len else list(h)
        if ids[-1] != EOS:
            ids.append(EOS)
        hyps.append(TokenSequence(ids=ids, language=gen_tag))
    return M.batch_sequence_loss(state, hyps, seqs)


def objective_step(name: str, batch: list[FunctionRecord], state: M.ModelState,
                   cfg: NoiseConfig, rng: np.random.Generator, vocab: Vocab,
                   bt_max_len: int | None = None) -> M.LossReport:
    """Build the objective's training example and compute its loss."""
    if name not in OBJECTIVES and name not in PIVOT_OBJECTIVES:
        raise ValueError(f"unknown objective {name}")
    if name in IR_OBJECTIVES or name == "BTIRCode":
        for rec in batch:
            if rec.normalized_ir is None:
                raise MissingIR(f"{name} needs normalized IR (record {rec.id})")

    max_len = state.config.max_len

    if name == "MLM":
        seqs = [encode_record(r, vocab) for r in batch]
        masked, positions = zip(*(mask_tokens(s, cfg.mlm_mask_rate, rng,
                                              cfg.replace_scheme, vocab.size)
                                  for s in seqs))
        loss, count = M.batch_masked_lm_loss(state, list(masked), list(seqs),
                                             [list(p) for p in positions])

    elif name == "AE":
        seqs = [encode_record(r, vocab) for r in batch]
        noised = [corrupt_sequence(s, cfg, rng) for s in seqs]
        loss, count = M.batch_sequence_loss(state, noised, seqs)

    elif name == "BT":
        seqs = [encode_record(r, vocab) for r in batch]
        src_lang = batch[0].language
        others = [t for t in _source_tags(state) if t != src_lang]
        assert others, "BT needs at least two source languages"
        tgt_lang = others[int(rng.integers(len(others)))]
        loss, count = _bt_round_trip(state, seqs, tgt_lang, max_len, bt_max_len)

    elif name == "BTCodeIR":
        # code -> foreign IR dialect -> code
        seqs = [encode_record(r, vocab) for r in batch]
        src_lang = batch[0].language
        dialects = [t for t in state.config.tags
                    if is_dialect(t) and t != dialect_of(src_lang)]
        gen_tag = dialects[int(rng.integers(len(dialects)))]
        loss, count = _bt_round_trip(state, seqs, gen_tag, max_len, bt_max_len)

    elif name == "BTIRCode":
        # own-dialect IR -> foreign language -> IR
        seqs = [encode_record_ir(r, vocab) for r in batch]
        src_lang = batch[0].language
        others = [t for t in _source_tags(state) if t != src_lang]
        gen_tag = others[int(rng.integers(len(others)))]
        loss, count = _bt_round_trip(state, seqs, gen_tag, max_len, bt_max_len)

    elif name == "TLM":
        pairs = [concat_with_ir(encode_record(r, vocab),
                                encode_record_ir(r, vocab), max_len)
                 for r in batch]
        masked, positions = zip(*(mask_tokens(p, cfg.mlm_mask_rate, rng,
                                              cfg.replace_scheme, vocab.size)
                                  for p in pairs))
        loss, count = M.batch_masked_lm_loss(state, list(masked), list(pairs),
                                             [list(p) for p in positions])

    elif name == "TAE":
        clean, noised = [], []
        for r in batch:
            x = encode_record(r, vocab)
            z = encode_record_ir(r, vocab)
            clean.append(concat_with_ir(x, z, max_len))
            noised.append(concat_with_ir(corrupt_sequence(x, cfg, rng),
                                         corrupt_sequence(z, cfg, rng), max_len))
        loss, count = M.batch_sequence_loss(state, noised, clean)

    elif name == "IRGen":
        srcs = [encode_record(r, vocab) for r in batch]
        tgts = [encode_record_ir(r, vocab) for r in batch]
        loss, count = M.batch_sequence_loss(state, srcs, tgts)

    else:  # Decomp
        srcs = [encode_record_ir(r, vocab) for r in batch]
        tgts = [encode_record(r, vocab) for r in batch]
        loss, count = M.batch_sequence_loss(state, srcs, tgts)

    return M.LossReport(objective=name, loss=loss.item(), token_count=count,
                        loss_tensor=loss)
