"""Inference entry points: direct translation, decompilation, IR pivot.

Direct translation never touches a compiler frontend; the pivot path
requires one at inference time (it compiles the source, normalizes the
IR, and decompiles it into the target language under the source's IR
dialect tag).
"""

from __future__ import annotations

from .checkpoint import load_checkpoint
from .decoding import beam_decode_all, greedy_decode
from .errors import CheckpointMismatch, CompileFailure
from .frontends import (CompileStatus, FrontendConfig, FunctionRecord,
                        compile_to_ir, dialect_of, is_dialect, record_id)
from .irnorm import NormalizationConfig, normalize
from .model import ModelState
from .tokenizer import Vocab, decode, encode


class Translator:
    def __init__(self, state: ModelState, vocab: Vocab):
        if state.config.vocab_size != vocab.size:
            raise CheckpointMismatch(
                f"model vocab size {state.config.vocab_size} != vocab {vocab.size}")
        self.state = state
        self.vocab = vocab

    @classmethod
    def from_files(cls, checkpoint_path: str, vocab_path: str) -> "Translator":
        ck = load_checkpoint(checkpoint_path)
        vocab = Vocab.load(vocab_path)
        if ck["vocab_hash"] != vocab.content_hash():
            raise CheckpointMismatch(
                f"checkpoint was trained with vocab {ck['vocab_hash']}, "
                f"got {vocab.content_hash()}")
        return cls(ck["state"], vocab)

    def _check_source_tag(self, tag: str) -> None:
        if tag not in self.state.tag_index:
            raise ValueError(f"unknown language tag {tag}")
        if is_dialect(tag):
            raise ValueError(f"{tag} is an IR dialect, expected a source language")

    def _generate(self, text: str, input_tag: str, target_tag: str,
                  beam_size: int) -> list[str]:
        seq = encode(text, input_tag, self.vocab)
        if beam_size <= 1:
            outs = [greedy_decode(seq, target_tag, self.state)]
        else:
            outs = beam_decode_all(seq, target_tag, self.state, beam_size)
        return [decode(o, self.vocab) for o in outs]

    def translate(self, source_text: str, src: str, tgt: str,
                  beam_size: int = 1) -> str:
        """Direct translation; the IR is not needed and no frontend runs."""
        self._check_source_tag(src)
        self._check_source_tag(tgt)
        if src == tgt:
            raise ValueError("source and target language must differ")
        return self._generate(source_text, src, tgt, beam_size)[0]

    def translate_candidates(self, source_text: str, src: str, tgt: str,
                             beam_size: int, k: int) -> list[str]:
        """Top-k hypotheses (k=1 greedy unless beam_size > 1)."""
        outs = self._generate(source_text, src, tgt, max(beam_size, k))
        return outs[:k]

    def decompile(self, ir_text: str, tgt: str, decoder_mode: str | None = None,
                  beam_size: int = 1,
                  norm_cfg: NormalizationConfig | None = None) -> str:
        """Recover source in tgt from IR (normalized first, dialect-tagged)."""
        self._check_source_tag(tgt)
        if decoder_mode is not None and decoder_mode != self.state.config.decoder_mode:
            raise CheckpointMismatch(
                f"checkpoint has {self.state.config.decoder_mode} decoder(s), "
                f"requested {decoder_mode}")
        normalized = normalize(ir_text, norm_cfg)
        return self._generate(normalized, dialect_of(tgt), tgt, beam_size)[0]

    def pivot_translate(self, source_text: str, src: str, tgt: str,
                        frontend_cfg: FrontendConfig, beam_size: int = 1,
                        norm_cfg: NormalizationConfig | None = None) -> str:
        """Compile src -> IR, then decompile the IR into tgt.

        Unlike translate, this needs a working frontend at inference; the
        decoding depends only on (normalized IR, tgt, model).
        """
        self._check_source_tag(src)
        self._check_source_tag(tgt)
        rec = FunctionRecord(id=record_id(src, source_text), language=src,
                             source=source_text)
        rec = compile_to_ir(rec, frontend_cfg)
        if rec.compile_status.kind != CompileStatus.OK or not rec.raw_ir:
            raise CompileFailure(
                f"frontend failed ({rec.compile_status.kind}): "
                f"{rec.compile_status.message[:500]}")
        normalized = normalize(rec.raw_ir, norm_cfg)
        return self._generate(normalized, dialect_of(src), tgt, beam_size)[0]


def translate(source_text: str, src: str, tgt: str, state: ModelState,
              vocab: Vocab, beam_size: int = 1) -> str:
    return Translator(state, vocab).translate(source_text, src, tgt, beam_size)


def decompile(ir_text: str, tgt: str, state: ModelState, vocab: Vocab,
              decoder_mode: str | None = None, beam_size: int = 1) -> str:
    return Translator(state, vocab).decompile(ir_text, tgt, decoder_mode, beam_size)


def pivot_translate(source_text: str, src: str, tgt: str, state: ModelState,
                    vocab: Vocab, frontend_cfg: FrontendConfig,
                    beam_size: int = 1) -> str:
    return Translator(state, vocab).pivot_translate(source_text, src, tgt,
                                                    frontend_cfg, beam_size)
