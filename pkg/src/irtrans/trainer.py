"""Training loop: equal-step objective alternation, Adam, inverse-sqrt LR.

Objectives rotate round-robin so every window of len(objectives) steps
runs each exactly once. MLM batches come from concatenated token
streams; every other objective batches whole functions. Checkpoints
carry optimizer moments and the RNG state, so resuming at step k is
bit-identical to training straight through.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import model as M
from . import objectives as O
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import MissingIR, NonFiniteLoss
from .frontends import FunctionRecord, is_dialect
from .tokenizer import EOS, BOS, TokenSequence, Vocab
from . import autodiff as ad


@dataclass
class TrainConfig:
    objectives: list[str]
    steps: int
    batch_size: int = 8
    lr: float = 1e-5
    warmup_steps: int = 200
    adam_beta1: float = 0.9
    adam_beta2: float = 0.98
    adam_eps: float = 1e-8
    checkpoint_interval: int = 1000
    seed: int = 0
    pivot_mode: bool = False
    mlm_stream_len: int = 128
    bt_max_len: int | None = None
    noise: O.NoiseConfig = field(default_factory=O.NoiseConfig)

    def __post_init__(self):
        assert self.objectives, "objective list must be nonempty"
        known = set(O.OBJECTIVES) | set(O.PIVOT_OBJECTIVES)
        unknown = [o for o in self.objectives if o not in known]
        assert not unknown, f"unknown objectives: {unknown}"

    def effective_objectives(self) -> list[str]:
        objs = list(self.objectives)
        if self.pivot_mode:
            for extra in O.PIVOT_OBJECTIVES:
                if extra not in objs:
                    objs.append(extra)
        return objs


def schedule(step: int, objectives: list[str]) -> str:
    """Round-robin: objective k = step mod len(objectives)."""
    assert objectives
    return objectives[step % len(objectives)]


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Inverse square-root schedule with linear warmup; continuous at warmup."""
    assert step >= 0
    w = max(cfg.warmup_steps, 1)
    return cfg.lr * min(step / w, math.sqrt(w / max(step, 1)))


class Adam:
    def __init__(self, cfg: TrainConfig):
        self.b1, self.b2, self.eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def update(self, state: M.ModelState, grads: dict[str, np.ndarray],
               lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for name, p in state.params.items():
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
            m = self.m[name]
            v = self.v[name]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def moments(self) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        return {k: (self.m[k], self.v[k]) for k in self.m}


class _Data:
    """Pre-encoded corpus views: per-language record pools and MLM streams."""

    def __init__(self, mono: dict[str, list[FunctionRecord]],
                 para: dict[str, list[FunctionRecord]], vocab: Vocab,
                 max_len: int, stream_len: int):
        self.vocab = vocab
        self.languages = sorted(mono)
        self.mono: dict[str, list[FunctionRecord]] = {}
        self.para: dict[str, list[FunctionRecord]] = {}
        self.streams: dict[str, np.ndarray] = {}
        self.stream_len = stream_len

        def fits(rec: FunctionRecord, with_ir: bool) -> bool:
            n_src = len(vocab.encode_ids(rec.source)) + 2
            if n_src > max_len:
                return False
            if with_ir:
                n_ir = len(vocab.encode_ids(rec.normalized_ir)) + 2
                if n_ir > max_len or (n_src - 2) + (n_ir - 2) + 3 > max_len:
                    return False
            return True

        for lang, recs in mono.items():
            self.mono[lang] = [r for r in recs if fits(r, False)]
            stream: list[int] = []
            for r in recs:
                stream.extend(vocab.encode_ids(r.source))
                stream.append(EOS)
            self.streams[lang] = np.array(stream, dtype=np.int64)
        for lang, recs in para.items():
            self.para[lang] = [r for r in recs if r.normalized_ir and fits(r, True)]

    def pick_language(self, rng, pool: dict[str, list]) -> str:
        langs = [l for l in sorted(pool) if len(pool[l]) > 0]
        return langs[int(rng.integers(len(langs)))]

    def sample_records(self, pool: list[FunctionRecord], rng,
                       k: int) -> list[FunctionRecord]:
        idx = rng.integers(0, len(pool), size=k)
        return [pool[int(i)] for i in idx]

    def mlm_stream_batch(self, rng, k: int) -> list[TokenSequence]:
        lang = self.pick_language(rng, {l: s for l, s in self.streams.items()
                                        if len(s) > 0})
        stream = self.streams[lang]
        win = min(self.stream_len, len(stream))
        seqs = []
        for _ in range(k):
            start = int(rng.integers(0, max(len(stream) - win, 1)))
            ids = [BOS] + stream[start:start + win].tolist() + [EOS]
            seqs.append(TokenSequence(ids=ids, language=lang))
        return seqs


@dataclass
class TrainLog:
    entries: list[dict] = field(default_factory=list)

    def append(self, **kw) -> None:
        self.entries.append(kw)

    def save(self, path: str) -> None:
        with open(path, "w") as f:
            for e in self.entries:
                f.write(json.dumps(e, sort_keys=True) + "\n")


def _batch_for(objective: str, data: _Data, rng,
               k: int) -> list[FunctionRecord] | list[TokenSequence]:
    if objective == "MLM":
        return data.mlm_stream_batch(rng, k)
    if objective in ("AE", "BT", "BTCodeIR"):
        lang = data.pick_language(rng, data.mono)
        return data.sample_records(data.mono[lang], rng, k)
    lang = data.pick_language(rng, data.para)
    return data.sample_records(data.para[lang], rng, k)


def _mlm_stream_step(state: M.ModelState, seqs: list[TokenSequence],
                     cfg: TrainConfig, rng) -> M.LossReport:
    masked, positions = zip(*(O.mask_tokens(s, cfg.noise.mlm_mask_rate, rng,
                                            cfg.noise.replace_scheme,
                                            data_vocab_size(state))
                              for s in seqs))
    loss, count = M.batch_masked_lm_loss(state, list(masked), list(seqs),
                                         [list(p) for p in positions])
    return M.LossReport(objective="MLM", loss=loss.item(), token_count=count,
                        loss_tensor=loss)


def data_vocab_size(state: M.ModelState) -> int:
    return state.config.vocab_size


def train(mono_shards: dict[str, list[FunctionRecord]],
          para_shards: dict[str, list[FunctionRecord]],
          cfg: TrainConfig, model_cfg: M.ModelConfig, vocab: Vocab,
          out_dir: str, resume_from: str | None = None,
          validation_fn=None) -> tuple[str, TrainLog]:
    """Run the alternating-objective loop; returns (checkpoint path, log)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    objectives = cfg.effective_objectives()

    source_langs = [t for t in model_cfg.tags if not is_dialect(t)]
    if "BT" in objectives and len(source_langs) < 2:
        raise ValueError("BT requires at least two source languages")
    ir_objs = [o for o in objectives
               if o in O.IR_OBJECTIVES or o == "BTIRCode"]
    if ir_objs and not any(para_shards.get(l) for l in source_langs):
        raise MissingIR(f"objectives {ir_objs} need a nonempty parallel shard")

    data = _Data(mono_shards, para_shards, vocab, model_cfg.max_len,
                 cfg.mlm_stream_len)
    vocab_hash = vocab.content_hash()

    if resume_from:
        ck = load_checkpoint(resume_from)
        state = ck["state"]
        start_step = ck["step"]
        adam = Adam(cfg)
        if ck["opt_moments"]:
            adam.m = {k: m for k, (m, _) in ck["opt_moments"].items()}
            adam.v = {k: v for k, (_, v) in ck["opt_moments"].items()}
        adam.t = ck["opt_t"]
        rng = np.random.default_rng(cfg.seed)
        if ck["rng_state"]:
            rng.bit_generator.state = ck["rng_state"]
    else:
        state = M.ModelState.init(model_cfg)
        start_step = 0
        adam = Adam(cfg)
        rng = np.random.default_rng(cfg.seed)

    log = TrainLog()
    ckpt_path = str(out / "model.ckpt")

    def save(step: int) -> None:
        save_checkpoint(ckpt_path, state, step, vocab_hash,
                        opt_moments=adam.moments() or None, opt_t=adam.t,
                        rng_state=rng.bit_generator.state)

    if start_step == 0:
        save(0)

    for step in range(start_step, cfg.steps):
        name = schedule(step, objectives)
        batch = _batch_for(name, data, rng, cfg.batch_size)
        if name == "MLM":
            report = _mlm_stream_step(state, batch, cfg, rng)
        else:
            report = O.objective_step(name, batch, state, cfg.noise, rng, vocab,
                                      bt_max_len=cfg.bt_max_len)
        if not math.isfinite(report.loss):
            raise NonFiniteLoss(
                f"step {step}: {name} loss {report.loss}; last checkpoint kept")
        scaled = ad.scale(report.loss_tensor, 1.0 / max(report.token_count, 1))
        grads = M.grad(scaled, state)
        gn = M.grad_norm(grads)
        lr = lr_at(step + 1, cfg)
        adam.update(state, grads, lr)
        report.grad_norm = gn
        log.append(step=step, objective=name,
                   loss=report.loss / max(report.token_count, 1),
                   lr=lr, grad_norm=gn)

        done = step + 1
        if done % cfg.checkpoint_interval == 0 or done == cfg.steps:
            save(done)
            if validation_fn is not None:
                metrics = validation_fn(state, vocab)
                log.append(step=done, validation=metrics)

    if cfg.steps == start_step:
        save(cfg.steps)
    log.save(str(out / "train_log.jsonl"))
    return ckpt_path, log
