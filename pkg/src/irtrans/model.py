"""Encoder-decoder transformer with exact gradients.

Token, positional and language embeddings are summed; the output
projection is tied to the token embedding for both the decoder and the
encoder-side masked-prediction head. Pre-LN blocks, GELU feed-forward.
The decoder stack is shared by default; `decoder_mode="separate"` gives
each target language its own (shallower) stack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import EmptyMaskSet, NonFiniteLoss, SequenceTooLong
from .frontends import is_dialect, source_of
from .tokenizer import PAD, TokenSequence

NEG_INF = -1e9


@dataclass
class ModelConfig:
    vocab_size: int
    tags: list[str]  # source languages followed by their IR dialects
    enc_layers: int = 2
    dec_layers: int = 2
    heads: int = 4
    dim: int = 64
    ff_dim: int = 256
    max_len: int = 256
    seed: int = 0
    dtype: str = "float32"
    decoder_mode: str = "shared"  # or "separate"
    separate_dec_layers: int = 1

    def __post_init__(self):
        assert self.dim % self.heads == 0, "dim must divide evenly into heads"
        assert self.enc_layers > 0 and self.dec_layers > 0 and self.heads > 0
        assert self.decoder_mode in ("shared", "separate")

    def np_dtype(self):
        return np.dtype(self.dtype)


@dataclass
class LossReport:
    objective: str
    loss: float
    token_count: int
    grad_norm: float = 0.0
    loss_tensor: Tensor | None = field(default=None, repr=False)


class ModelState:
    """All learnable parameters plus configuration."""

    def __init__(self, config: ModelConfig, params: dict[str, Tensor]):
        self.config = config
        self.params = params
        self.tag_index = {t: i for i, t in enumerate(config.tags)}

    @classmethod
    def init(cls, config: ModelConfig) -> "ModelState":
        rng = np.random.default_rng(config.seed)
        dt = config.np_dtype()
        d, f = config.dim, config.ff_dim
        params: dict[str, np.ndarray] = {}

        def w(name, *shape, std=0.02):
            params[name] = (rng.standard_normal(shape) * std).astype(dt)

        def zeros(name, *shape):
            params[name] = np.zeros(shape, dtype=dt)

        def ones(name, *shape):
            params[name] = np.ones(shape, dtype=dt)

        w("tok_emb", config.vocab_size, d)
        w("pos_emb", config.max_len, d)
        w("lang_emb", len(config.tags), d)
        zeros("out_bias", config.vocab_size)

        def attn_block(prefix):
            for part in ("wq", "wk", "wv", "wo"):
                w(f"{prefix}.{part}", d, d)
                zeros(f"{prefix}.{part}_b", d)

        def ff_block(prefix):
            w(f"{prefix}.w1", d, f)
            zeros(f"{prefix}.b1", f)
            w(f"{prefix}.w2", f, d)
            zeros(f"{prefix}.b2", d)

        def ln(prefix):
            ones(f"{prefix}.g", d)
            zeros(f"{prefix}.b", d)

        for i in range(config.enc_layers):
            attn_block(f"enc.{i}.attn")
            ff_block(f"enc.{i}.ff")
            ln(f"enc.{i}.ln1")
            ln(f"enc.{i}.ln2")
        ln("enc.ln_f")

        def decoder_stack(prefix, layers):
            for i in range(layers):
                attn_block(f"{prefix}.{i}.attn")
                attn_block(f"{prefix}.{i}.cross")
                ff_block(f"{prefix}.{i}.ff")
                ln(f"{prefix}.{i}.ln1")
                ln(f"{prefix}.{i}.ln2")
                ln(f"{prefix}.{i}.ln3")
            ln(f"{prefix}.ln_f")

        if config.decoder_mode == "shared":
            decoder_stack("dec", config.dec_layers)
        else:
            for tag in config.tags:
                if not is_dialect(tag):
                    decoder_stack(f"dec:{tag}", config.separate_dec_layers)

        tensors = {k: Tensor(v, requires_grad=True) for k, v in params.items()}
        return cls(config, tensors)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def decoder_key(self, target_tag: str) -> tuple[str, int]:
        if self.config.decoder_mode == "shared":
            return "dec", self.config.dec_layers
        lang = source_of(target_tag) if is_dialect(target_tag) else target_tag
        return f"dec:{lang}", self.config.separate_dec_layers

    def check_finite(self) -> bool:
        return all(np.isfinite(p.data).all() for p in self.params.values())


# ---------------------------------------------------------------------------
# batching helpers

def tag_row(seq, length: int) -> list[str]:
    """Per-position tag names for a TokenSequence or ConcatPair-like object."""
    names = getattr(seq, "tag_names", None)
    if names is not None:
        return list(names)
    return [seq.language] * length


def pad_batch(rows: list[list[int]], tag_rows: list[list[str]], state: ModelState):
    maxlen = max(len(r) for r in rows)
    b = len(rows)
    ids = np.full((b, maxlen), PAD, dtype=np.int64)
    lang = np.zeros((b, maxlen), dtype=np.int64)
    mask = np.zeros((b, maxlen), dtype=bool)
    for i, (row, tags) in enumerate(zip(rows, tag_rows)):
        n = len(row)
        ids[i, :n] = row
        lang[i, :n] = [state.tag_index[t] for t in tags]
        mask[i, :n] = True
    return ids, lang, mask


def _check_len(n: int, config: ModelConfig) -> None:
    if n > config.max_len:
        raise SequenceTooLong(f"sequence length {n} > max {config.max_len}")


# ---------------------------------------------------------------------------
# forward passes

def _linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return ad.add(ad.matmul(x, w), b)


def _attention(state: ModelState, prefix: str, x: Tensor, kv: Tensor,
               bias: np.ndarray) -> Tensor:
    p = state.params
    cfg = state.config
    h, hd = cfg.heads, cfg.dim // cfg.heads
    bsz, tq = x.shape[0], x.shape[1]
    tk = kv.shape[1]

    def split(t: Tensor, tlen: int) -> Tensor:
        t = ad.reshape(t, (bsz, tlen, h, hd))
        return ad.transpose(t, (0, 2, 1, 3))

    q = split(_linear(x, p[f"{prefix}.wq"], p[f"{prefix}.wq_b"]), tq)
    k = split(_linear(kv, p[f"{prefix}.wk"], p[f"{prefix}.wk_b"]), tk)
    v = split(_linear(kv, p[f"{prefix}.wv"], p[f"{prefix}.wv_b"]), tk)

    scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))),
                      1.0 / math.sqrt(hd))
    att = ad.softmax(scores, bias=bias)
    out = ad.matmul(att, v)
    out = ad.reshape(ad.transpose(out, (0, 2, 1, 3)), (bsz, tq, cfg.dim))
    return _linear(out, p[f"{prefix}.wo"], p[f"{prefix}.wo_b"])


def _ff(state: ModelState, prefix: str, x: Tensor) -> Tensor:
    p = state.params
    return _linear(ad.gelu(_linear(x, p[f"{prefix}.w1"], p[f"{prefix}.b1"])),
                   p[f"{prefix}.w2"], p[f"{prefix}.b2"])


def _ln(state: ModelState, prefix: str, x: Tensor) -> Tensor:
    p = state.params
    return ad.layer_norm(x, p[f"{prefix}.g"], p[f"{prefix}.b"])


def _embed(state: ModelState, ids: np.ndarray, lang: np.ndarray) -> Tensor:
    p = state.params
    t = ids.shape[1]
    positions = np.arange(t)
    x = ad.embedding(p["tok_emb"], ids)
    x = ad.add(x, ad.embedding(p["pos_emb"], positions))
    return ad.add(x, ad.embedding(p["lang_emb"], lang))


def _key_bias(mask: np.ndarray, dtype) -> np.ndarray:
    # (B, T) -> (B, 1, 1, T); masked keys get a large negative logit
    return np.where(mask, 0.0, NEG_INF).astype(dtype)[:, None, None, :]


def encode_batch(state: ModelState, ids: np.ndarray, lang: np.ndarray,
                 mask: np.ndarray) -> Tensor:
    cfg = state.config
    _check_len(ids.shape[1], cfg)
    bias = _key_bias(mask, cfg.np_dtype())
    h = _embed(state, ids, lang)
    for i in range(cfg.enc_layers):
        x = _ln(state, f"enc.{i}.ln1", h)
        h = ad.add(h, _attention(state, f"enc.{i}.attn", x, x, bias))
        h = ad.add(h, _ff(state, f"enc.{i}.ff", _ln(state, f"enc.{i}.ln2", h)))
    return _ln(state, "enc.ln_f", h)


def decode_batch(state: ModelState, memory: Tensor, src_mask: np.ndarray,
                 ids: np.ndarray, lang: np.ndarray, mask: np.ndarray,
                 decoder_key: str, layers: int) -> Tensor:
    cfg = state.config
    _check_len(ids.shape[1], cfg)
    dt = cfg.np_dtype()
    t = ids.shape[1]
    causal = np.where(np.tril(np.ones((t, t), dtype=bool)), 0.0, NEG_INF
                      ).astype(dt)[None, None, :, :]
    self_bias = causal + _key_bias(mask, dt)
    cross_bias = _key_bias(src_mask, dt)
    h = _embed(state, ids, lang)
    for i in range(layers):
        pre = f"{decoder_key}.{i}"
        x = _ln(state, f"{pre}.ln1", h)
        h = ad.add(h, _attention(state, f"{pre}.attn", x, x, self_bias))
        h = ad.add(h, _attention(state, f"{pre}.cross",
                                 _ln(state, f"{pre}.ln2", h), memory, cross_bias))
        h = ad.add(h, _ff(state, f"{pre}.ff", _ln(state, f"{pre}.ln3", h)))
    return _ln(state, f"{decoder_key}.ln_f", h)


def output_logits(state: ModelState, h2d: Tensor) -> Tensor:
    """Tied projection: hidden states (N, D) -> logits (N, V)."""
    p = state.params
    return ad.add(ad.matmul(h2d, ad.transpose(p["tok_emb"], (1, 0))),
                  p["out_bias"])


# ---------------------------------------------------------------------------
# public operations

def encode_states(seq: TokenSequence, state: ModelState) -> np.ndarray:
    """Per-position encoder hidden states for one sequence."""
    ids, lang, mask = pad_batch([list(seq.ids)], [tag_row(seq, len(seq.ids))], state)
    with ad.no_grad():
        h = encode_batch(state, ids, lang, mask)
    return h.data[0]


def batch_sequence_loss(state: ModelState, srcs: list, tgts: list,
                        decoder_tag: str | None = None) -> tuple[Tensor, int]:
    """Teacher-forced seq2seq loss summed over non-PAD target tokens."""
    src_rows = [list(s.ids) for s in srcs]
    src_tags = [tag_row(s, len(s.ids)) for s in srcs]
    tgt_rows = [list(t.ids) for t in tgts]
    tgt_tags = [tag_row(t, len(t.ids)) for t in tgts]
    for r in src_rows + tgt_rows:
        _check_len(len(r), state.config)

    ids, lang, mask = pad_batch(src_rows, src_tags, state)
    memory = encode_batch(state, ids, lang, mask)

    dec_in = [row[:-1] for row in tgt_rows]
    dec_tags = [tags[:-1] for tags in tgt_tags]
    din_ids, din_lang, din_mask = pad_batch(dec_in, dec_tags, state)
    targets = np.full_like(din_ids, PAD)
    for i, row in enumerate(tgt_rows):
        targets[i, :len(row) - 1] = row[1:]

    key_tag = decoder_tag if decoder_tag is not None else tgt_tags[0][0]
    dkey, layers = state.decoder_key(key_tag)
    h = decode_batch(state, memory, mask, din_ids, din_lang, din_mask, dkey, layers)

    n, t = din_ids.shape
    flat = ad.reshape(h, (n * t, state.config.dim))
    logits = output_logits(state, flat)
    w = (targets.reshape(-1) != PAD).astype(state.config.np_dtype())
    loss = ad.cross_entropy(logits, targets.reshape(-1), w)
    return loss, int(w.sum())


def sequence_loss(src, tgt, state: ModelState) -> LossReport:
    """Machine-translation loss for one (source, target) pair."""
    loss, count = batch_sequence_loss(state, [src], [tgt])
    return LossReport(objective="MT", loss=loss.item(), token_count=count,
                      loss_tensor=loss)


def batch_masked_lm_loss(state: ModelState, masked: list, originals: list,
                         position_rows: list[list[int]]) -> tuple[Tensor, int]:
    rows_ids = [list(s.ids) for s in masked]
    tags = [tag_row(s, len(s.ids)) for s in masked]
    for r in rows_ids:
        _check_len(len(r), state.config)
    total = sum(len(p) for p in position_rows)
    if total == 0:
        raise EmptyMaskSet("no masked positions to predict")

    ids, lang, mask = pad_batch(rows_ids, tags, state)
    h = encode_batch(state, ids, lang, mask)
    n, t = ids.shape
    flat = ad.reshape(h, (n * t, state.config.dim))

    flat_idx = np.array([i * t + pos for i, prow in enumerate(position_rows)
                         for pos in prow], dtype=np.int64)
    targets = np.array([orig.ids[pos] for orig, prow in zip(originals, position_rows)
                        for pos in prow], dtype=np.int64)
    picked = ad.rows(flat, flat_idx)
    logits = output_logits(state, picked)
    w = np.ones(len(flat_idx), dtype=state.config.np_dtype())
    loss = ad.cross_entropy(logits, targets, w)
    return loss, total


def masked_lm_loss(masked, original, positions, state: ModelState) -> LossReport:
    """Encoder-only cross-entropy over the masked positions."""
    loss, count = batch_masked_lm_loss(state, [masked], [original],
                                       [sorted(positions)])
    return LossReport(objective="MLM", loss=loss.item(), token_count=count,
                      loss_tensor=loss)


def grad(loss: Tensor, state: ModelState) -> dict[str, np.ndarray]:
    """Exact reverse-mode gradients of every parameter; off-path ones are 0."""
    if not np.isfinite(loss.data):
        raise NonFiniteLoss(f"loss is {loss.data}")
    state.zero_grad()
    loss.backward()
    return {name: (p.grad if p.grad is not None else np.zeros_like(p.data))
            for name, p in state.params.items()}


def grad_norm(grads: dict[str, np.ndarray]) -> float:
    return math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
